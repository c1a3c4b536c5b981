#include "fra/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "fra/error.hpp"
#include "fra/rng.hpp"

namespace fra::eval {
namespace {

Eigen::MatrixXd softmax_rows(Eigen::MatrixXd logits) {
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        logits.row(r) = (logits.row(r).array() - m).exp().matrix();
        logits.row(r) /= logits.row(r).sum();
    }
    return logits;
}

struct Objective {
    const Eigen::MatrixXd& x;
    Eigen::MatrixXd onehot;  // [N x C]
    double l2;

    // Loss and gradient at (w, b); gw [C x D], gb [C].
    double eval(const Eigen::MatrixXd& w, const Eigen::VectorXd& b, Eigen::MatrixXd& gw, Eigen::VectorXd& gb) const {
        const auto n = static_cast<double>(x.rows());
        Eigen::MatrixXd logits = x * w.transpose();
        logits.rowwise() += b.transpose();
        double loss = 0.0;
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
            const double m = logits.row(r).maxCoeff();
            const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
            loss += lse - logits.row(r).dot(onehot.row(r));
        }
        loss = loss / n + 0.5 * l2 * w.squaredNorm();
        const Eigen::MatrixXd resid = (softmax_rows(std::move(logits)) - onehot) / n;
        gw = resid.transpose() * x + l2 * w;
        gb = resid.colwise().sum().transpose();
        return loss;
    }
};

double lipschitz_bound(const Eigen::MatrixXd& x, double l2) {
    // Largest eigenvalue of [x 1]^T [x 1] / N by power iteration, on the smaller Gram side.
    const auto n = x.rows();
    Eigen::MatrixXd xa(n, x.cols() + 1);
    xa << x, Eigen::VectorXd::Ones(n);
    const Eigen::MatrixXd gram = xa * xa.transpose() / static_cast<double>(n);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
    double lambda = 0.0;
    for (int it = 0; it < 200; ++it) {
        const Eigen::VectorXd next = gram * v;
        const double norm = next.norm();
        if (norm == 0.0) break;
        const double prev = lambda;
        lambda = v.dot(next);
        v = next / norm;
        if (std::abs(lambda - prev) <= 1e-10 * std::max(1.0, lambda)) break;
    }
    // Softmax cross-entropy curvature is at most 1/2 per unit squared feature norm.
    return 0.5 * lambda * 1.01 + l2;
}

}  // namespace

std::vector<std::size_t> label_indices(const std::vector<std::string>& labels, const std::vector<std::string>& classes) {
    std::map<std::string, std::size_t> index;
    for (std::size_t c = 0; c < classes.size(); ++c) index[classes[c]] = c;
    std::vector<std::size_t> out;
    out.reserve(labels.size());
    for (const auto& l : labels) {
        auto it = index.find(l);
        if (it == index.end()) throw InputError("label '" + l + "' is not a probe class");
        out.push_back(it->second);
    }
    return out;
}

Eigen::MatrixXd LinearProbe::probabilities(const Eigen::MatrixXd& x) const {
    if (x.cols() != weight.cols()) {
        throw DimensionError("probe expects " + std::to_string(weight.cols()) + " features, got " +
                             std::to_string(x.cols()));
    }
    Eigen::MatrixXd logits = x * weight.transpose();
    logits.rowwise() += bias.transpose();
    return softmax_rows(std::move(logits));
}

std::vector<std::size_t> LinearProbe::predict(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd p = probabilities(x);
    std::vector<std::size_t> out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        Eigen::Index c = 0;
        p.row(r).maxCoeff(&c);
        out[static_cast<std::size_t>(r)] = static_cast<std::size_t>(c);
    }
    return out;
}

double LinearProbe::accuracy(const Eigen::MatrixXd& x, const std::vector<std::string>& labels) const {
    if (labels.empty()) throw ContractError("accuracy of an empty evaluation set");
    const auto truth = label_indices(labels, classes);
    const auto pred = predict(x);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == pred[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double probe_objective(const LinearProbe& probe, const Eigen::MatrixXd& x, const std::vector<std::string>& labels,
                       double l2_penalty) {
    const auto idx = label_indices(labels, probe.classes);
    Objective obj{x, Eigen::MatrixXd::Zero(x.rows(), static_cast<Eigen::Index>(probe.classes.size())), l2_penalty};
    for (std::size_t i = 0; i < idx.size(); ++i) obj.onehot(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(idx[i])) = 1.0;
    Eigen::MatrixXd gw;
    Eigen::VectorXd gb;
    return obj.eval(probe.weight, probe.bias, gw, gb);
}

LinearProbe train_probe(const Eigen::MatrixXd& x, const std::vector<std::string>& labels, const ProbeConfig& config,
                        std::uint64_t seed) {
    if (static_cast<std::size_t>(x.rows()) != labels.size()) {
        throw DimensionError("train_probe: " + std::to_string(x.rows()) + " rows but " + std::to_string(labels.size()) +
                             " labels");
    }
    const std::set<std::string> distinct(labels.begin(), labels.end());
    if (distinct.size() < 2) {
        throw ConfigError("train_probe needs at least 2 classes, got " + std::to_string(distinct.size()));
    }
    if (!(config.l2_penalty >= 0.0)) throw ConfigError("eval.l2 must be >= 0");

    LinearProbe probe;
    probe.classes.assign(distinct.begin(), distinct.end());
    const auto c = static_cast<Eigen::Index>(probe.classes.size());
    const auto idx = label_indices(labels, probe.classes);
    Objective obj{x, Eigen::MatrixXd::Zero(x.rows(), c), config.l2_penalty};
    for (std::size_t i = 0; i < idx.size(); ++i) obj.onehot(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(idx[i])) = 1.0;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.01);
    Eigen::MatrixXd w(c, x.cols());
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = normal(rng);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(c);

    const double step = 1.0 / lipschitz_bound(x, config.l2_penalty);
    Eigen::MatrixXd yw = w, gw, w_next;
    Eigen::VectorXd yb = b, gb, b_next;
    double t = 1.0;
    std::size_t it = 0;
    for (; it < config.max_steps; ++it) {
        obj.eval(yw, yb, gw, gb);
        if (std::sqrt(gw.squaredNorm() + gb.squaredNorm()) < config.grad_tolerance) {
            w = yw;
            b = yb;
            break;
        }
        w_next = yw - step * gw;
        b_next = yb - step * gb;
        // Restart the momentum whenever it points uphill.
        if (gw.cwiseProduct(w_next - w).sum() + gb.dot(b_next - b) > 0.0) {
            t = 1.0;
            yw = w_next;
            yb = b_next;
        } else {
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            const double beta = (t - 1.0) / t_next;
            yw = w_next + beta * (w_next - w);
            yb = b_next + beta * (b_next - b);
            t = t_next;
        }
        w = std::move(w_next);
        b = std::move(b_next);
    }
    probe.weight = std::move(w);
    probe.bias = std::move(b);
    probe.steps = it;
    Eigen::MatrixXd gw_final;
    Eigen::VectorXd gb_final;
    probe.final_loss = obj.eval(probe.weight, probe.bias, gw_final, gb_final);
    probe.final_grad_norm = std::sqrt(gw_final.squaredNorm() + gb_final.squaredNorm());
    return probe;
}

namespace {

struct ClassSweep {
    std::vector<double> pos;  // scores of positives, descending
    std::vector<double> neg;  // scores of negatives, descending

    // Fraction of scores >= threshold.
    static double frac_at_least(const std::vector<double>& sorted_desc, double threshold) {
        const auto it = std::upper_bound(sorted_desc.begin(), sorted_desc.end(), threshold, std::greater<double>());
        const auto count = static_cast<double>(it - sorted_desc.begin());
        return count / static_cast<double>(sorted_desc.size());
    }
};

double trapezoid(const std::vector<RocPoint>& pts) {
    double auc = 0.0;
    for (std::size_t k = 1; k < pts.size(); ++k) {
        auc += (pts[k].fpr - pts[k - 1].fpr) * 0.5 * (pts[k].tpr + pts[k - 1].tpr);
    }
    return auc;
}

std::vector<RocPoint> sweep(const std::vector<double>& thresholds_desc, const std::vector<const ClassSweep*>& classes) {
    std::vector<RocPoint> pts;
    pts.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    for (double th : thresholds_desc) {
        RocPoint p{th, 0.0, 0.0};
        for (const ClassSweep* c : classes) {
            p.tpr += ClassSweep::frac_at_least(c->pos, th);
            p.fpr += ClassSweep::frac_at_least(c->neg, th);
        }
        p.tpr /= static_cast<double>(classes.size());
        p.fpr /= static_cast<double>(classes.size());
        pts.push_back(p);
    }
    return pts;
}

std::vector<double> distinct_desc(std::vector<double> v) {
    std::sort(v.begin(), v.end(), std::greater<double>());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

}  // namespace

RocResult roc_points(const Eigen::MatrixXd& scores, const std::vector<std::size_t>& labels,
                     const std::vector<std::string>& classes) {
    if (static_cast<std::size_t>(scores.rows()) != labels.size() ||
        static_cast<std::size_t>(scores.cols()) != classes.size()) {
        throw DimensionError("roc_points: scores " + std::to_string(scores.rows()) + "x" +
                             std::to_string(scores.cols()) + " do not match " + std::to_string(labels.size()) +
                             " labels and " + std::to_string(classes.size()) + " classes");
    }
    RocResult out;
    std::vector<ClassSweep> sweeps(classes.size());
    std::vector<const ClassSweep*> used;
    std::vector<double> all_thresholds;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        ClassSweep& s = sweeps[c];
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const double v = scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
            (labels[i] == c ? s.pos : s.neg).push_back(v);
        }
        if (s.pos.empty() || s.neg.empty()) {
            out.excluded.push_back(classes[c]);
            continue;
        }
        std::sort(s.pos.begin(), s.pos.end(), std::greater<double>());
        std::sort(s.neg.begin(), s.neg.end(), std::greater<double>());
        std::vector<double> th(s.pos);
        th.insert(th.end(), s.neg.begin(), s.neg.end());
        th = distinct_desc(std::move(th));
        all_thresholds.insert(all_thresholds.end(), th.begin(), th.end());
        RocCurve curve;
        curve.label = classes[c];
        curve.points = sweep(th, {&s});
        curve.auc = trapezoid(curve.points);
        out.per_class.push_back(std::move(curve));
        used.push_back(&s);
    }
    if (used.empty()) throw InputError("roc_points: no class has both positive and negative samples");
    out.macro.label = "macro";
    out.macro.points = sweep(distinct_desc(std::move(all_thresholds)), used);
    out.macro.auc = trapezoid(out.macro.points);
    for (const auto& c : out.per_class) out.macro_auc += c.auc;
    out.macro_auc /= static_cast<double>(out.per_class.size());
    return out;
}

RocResult roc_points(const LinearProbe& probe, const Eigen::MatrixXd& x, const std::vector<std::string>& labels) {
    return roc_points(probe.probabilities(x), label_indices(labels, probe.classes), probe.classes);
}

std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<std::size_t>& truth,
                                                       const std::vector<std::size_t>& predicted,
                                                       std::size_t n_classes) {
    if (truth.size() != predicted.size()) throw DimensionError("confusion_matrix: length mismatch");
    std::vector<std::vector<std::size_t>> m(n_classes, std::vector<std::size_t>(n_classes, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= n_classes || predicted[i] >= n_classes) throw InputError("confusion_matrix: class out of range");
        ++m[truth[i]][predicted[i]];
    }
    return m;
}

}  // namespace fra::eval
