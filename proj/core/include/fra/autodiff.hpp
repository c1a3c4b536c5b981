#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fra/tensor.hpp"

namespace fra::ad {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// tape that produced it is alive.
class Var {
public:
    Var() = default;

    Tape& tape() const noexcept { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

enum class GradMode { kEnabled, kDisabled };

/// Ordered record of a forward computation, replayed in reverse by backward().
///
/// Records are appended in evaluation order, so every record's inputs precede
/// it. A tape is confined to one thread for its lifetime.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    explicit Tape(GradMode mode = GradMode::kEnabled) : mode_(mode) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const noexcept { return mode_ == GradMode::kEnabled; }

    /// Constant input; never receives a gradient.
    Var input(Tensor value);
    /// Owned leaf that receives a gradient, readable via grad() after backward.
    Var leaf(Tensor value);
    /// Leaf bound to an external tensor. When the tensor requires gradients,
    /// backward() accumulates into its grad buffer. Binding the same tensor twice
    /// returns the same Var.
    Var parameter(Tensor& tensor);
    /// Read-only view of an external tensor; no gradient flows to it.
    Var parameter(const Tensor& tensor);

    /// Appends an operation record. Used by the op library.
    Var record(std::string_view op, std::span<const Var> inputs, Tensor value, BackwardFn backward);

    /// Reverse pass from a single-element loss. Adjoints on the tape are
    /// recomputed from scratch; bound parameter gradients accumulate.
    void backward(Var loss);

    std::span<const double> grad(Var v) const;

    std::size_t size() const noexcept { return records_.size(); }
    std::string_view op_name(std::size_t id) const { return records_.at(id).op; }
    const std::vector<std::size_t>& inputs_of(std::size_t id) const { return records_.at(id).inputs; }
    const Tensor& value(std::size_t id) const;
    bool needs_grad(std::size_t id) const { return records_[id].needs_grad; }
    /// Adjoint buffer of a record, allocated as zeros on first use.
    std::span<double> adjoint(std::size_t id);

    /// Monotone counter handed out to stochastic ops so every draw on the tape
    /// is addressable by (seed, counter).
    std::uint64_t next_counter() noexcept { return counter_++; }

private:
    struct Record {
        std::string_view op;
        std::vector<std::size_t> inputs;
        Tensor owned;
        const Tensor* external = nullptr;
        Tensor* bound = nullptr;
        bool needs_grad = false;
        BackwardFn backward;
        std::vector<double> adjoint;
    };

    Var push(Record rec);

    GradMode mode_;
    std::vector<Record> records_;
    std::unordered_map<const Tensor*, std::size_t> bound_ids_;
    std::uint64_t counter_ = 0;
};

}  // namespace fra::ad
