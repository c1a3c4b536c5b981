#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fra::eval {

struct ProbeConfig {
    double l2_penalty = 1e-3;
    std::size_t max_steps = 5000;
    double grad_tolerance = 1e-6;
};

/// Multinomial logistic regression over fixed embeddings.
struct LinearProbe {
    Eigen::MatrixXd weight;  ///< [classes x D]
    Eigen::VectorXd bias;    ///< [classes]
    std::vector<std::string> classes;
    double final_loss = 0.0;
    double final_grad_norm = 0.0;
    std::size_t steps = 0;

    /// Softmax class probabilities, [N x classes].
    Eigen::MatrixXd probabilities(const Eigen::MatrixXd& x) const;
    std::vector<std::size_t> predict(const Eigen::MatrixXd& x) const;
    double accuracy(const Eigen::MatrixXd& x, const std::vector<std::string>& labels) const;
};

/// Full-batch accelerated gradient descent on mean softmax cross-entropy plus
/// l2/2 ||W||^2, stopping once the gradient norm drops below the tolerance.
/// The seed only sets the (small, random) starting point. Throws ConfigError
/// with fewer than two classes.
LinearProbe train_probe(const Eigen::MatrixXd& x, const std::vector<std::string>& labels, const ProbeConfig& config,
                        std::uint64_t seed);

/// Mean cross-entropy + penalty of a probe on (x, labels).
double probe_objective(const LinearProbe& probe, const Eigen::MatrixXd& x, const std::vector<std::string>& labels,
                       double l2_penalty);

struct RocPoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::string label;
    std::vector<RocPoint> points;
    double auc = 0.0;
};

struct RocResult {
    std::vector<RocCurve> per_class;
    /// TPR and FPR averaged over classes at shared thresholds.
    RocCurve macro;
    /// Mean of the per-class AUCs.
    double macro_auc = 0.0;
    /// Classes with no positive or no negative sample.
    std::vector<std::string> excluded;
};

/// One-vs-rest sweep over score thresholds for scores [N x classes]. Points run
/// from threshold +inf (0, 0) down to the lowest score (1, 1); tied scores are
/// one step. AUC by the trapezoid rule.
RocResult roc_points(const Eigen::MatrixXd& scores, const std::vector<std::size_t>& labels,
                     const std::vector<std::string>& classes);
RocResult roc_points(const LinearProbe& probe, const Eigen::MatrixXd& x, const std::vector<std::string>& labels);

/// counts[true][predicted].
std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<std::size_t>& truth,
                                                       const std::vector<std::size_t>& predicted,
                                                       std::size_t n_classes);

/// Indices of `labels` into `classes`; throws InputError for unknown labels.
std::vector<std::size_t> label_indices(const std::vector<std::string>& labels, const std::vector<std::string>& classes);

}  // namespace fra::eval
