#include "fra/autodiff.hpp"

#include <algorithm>

#include "fra/error.hpp"

namespace fra::ad {

const Tensor& Var::value() const {
    if (!tape_) throw ContractError("use of an unbound Var");
    return tape_->value(id_);
}

Var Tape::push(Record rec) {
    records_.push_back(std::move(rec));
    return Var(this, records_.size() - 1);
}

Var Tape::input(Tensor value) {
    Record rec;
    rec.op = "input";
    rec.owned = std::move(value);
    return push(std::move(rec));
}

Var Tape::leaf(Tensor value) {
    Record rec;
    rec.op = "leaf";
    rec.owned = std::move(value);
    rec.needs_grad = grad_enabled();
    return push(std::move(rec));
}

Var Tape::parameter(Tensor& tensor) {
    if (auto it = bound_ids_.find(&tensor); it != bound_ids_.end()) return Var(this, it->second);
    Record rec;
    rec.op = "parameter";
    rec.external = &tensor;
    if (grad_enabled() && tensor.requires_grad()) {
        rec.bound = &tensor;
        rec.needs_grad = true;
    }
    Var v = push(std::move(rec));
    bound_ids_.emplace(&tensor, v.id());
    return v;
}

Var Tape::parameter(const Tensor& tensor) {
    if (auto it = bound_ids_.find(&tensor); it != bound_ids_.end()) return Var(this, it->second);
    Record rec;
    rec.op = "parameter";
    rec.external = &tensor;
    Var v = push(std::move(rec));
    bound_ids_.emplace(&tensor, v.id());
    return v;
}

Var Tape::record(std::string_view op, std::span<const Var> inputs, Tensor value, BackwardFn backward) {
    Record rec;
    rec.op = op;
    rec.owned = std::move(value);
    rec.inputs.reserve(inputs.size());
    for (const Var& in : inputs) {
        if (&in.tape() != this) throw ContractError(std::string(op) + ": operand recorded on a different tape");
        rec.inputs.push_back(in.id());
        rec.needs_grad = rec.needs_grad || records_[in.id()].needs_grad;
    }
    if (rec.needs_grad) rec.backward = std::move(backward);
    return push(std::move(rec));
}

const Tensor& Tape::value(std::size_t id) const {
    const Record& rec = records_.at(id);
    return rec.external ? *rec.external : rec.owned;
}

std::span<double> Tape::adjoint(std::size_t id) {
    Record& rec = records_[id];
    if (rec.adjoint.empty()) rec.adjoint.assign(value(id).numel(), 0.0);
    return rec.adjoint;
}

void Tape::backward(Var loss) {
    if (&loss.tape() != this) throw ContractError("backward: loss belongs to a different tape");
    if (loss.value().numel() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    }
    for (Record& rec : records_) rec.adjoint.clear();
    if (!records_[loss.id()].needs_grad) return;

    adjoint(loss.id())[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Record& rec = records_[i];
        if (!rec.needs_grad || rec.adjoint.empty() || !rec.backward) continue;
        rec.backward(*this, i);
    }
    for (Record& rec : records_) {
        if (rec.bound && !rec.adjoint.empty()) rec.bound->accumulate_grad(rec.adjoint);
    }
}

std::span<const double> Tape::grad(Var v) const {
    const Record& rec = records_.at(v.id());
    if (rec.adjoint.empty()) {
        static const std::vector<double> kEmpty;
        if (!rec.needs_grad) throw ContractError("grad requested for a value that does not require gradients");
        return kEmpty;
    }
    return rec.adjoint;
}

}  // namespace fra::ad
