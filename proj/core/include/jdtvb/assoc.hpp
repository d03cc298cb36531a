#pragma once

#include <vector>

#include <Eigen/Dense>

namespace jdtvb::assoc {

/// One data association problem for a single (scan, path) pair, in log weight
/// form. chi is (n_t + 1) x (n_e + 1): row 0 is the clutter row, column 0 the
/// missed detection column. chi(0, 0) is unused and kept at zero. All entries
/// are finite; excluded pairings carry a large negative floor instead of -inf.
struct AssignmentProblem {
    Eigen::MatrixXd chi;
    std::vector<int> target_ids; // caller bookkeeping, size n_t
    std::vector<int> meas_ids;   // caller bookkeeping, size n_e

    int n_targets() const { return static_cast<int>(chi.rows()) - 1; }
    int n_meas() const { return static_cast<int>(chi.cols()) - 1; }
};

/// Posterior assignment marginals E[a^{i,j}] in the same layout as chi.
/// Row i >= 1 sums to one over j = 0..n_e, column j >= 1 sums to one over
/// i = 0..n_t; E(0,0) = 0.
struct AssignmentMarginals {
    Eigen::MatrixXd E;
    int iterations = 0;
    bool converged = false;
    double residual = 0.0;
};

struct LbpOptions {
    int max_iters = 200;
    double tol = 1e-6;      // max residual on log messages
    double damping = 0.5;   // 0 = undamped
};

/// Log weight floor standing in for minus infinity on excluded pairings.
inline constexpr double kChiFloor = -50.0;

/// Prior association weights: interior entries log(p_d / ((1 - p_d) lambda)),
/// zero on the miss column and clutter row. p_d is clamped to
/// [1e-6, 1 - 1e-6] before use.
Eigen::MatrixXd chi_prior(int n_targets, int n_meas, double p_d, double lambda);

/// Per-target inputs for the refined association weights.
struct TargetAssocInput {
    Eigen::Vector3d y_pred = Eigen::Vector3d::Zero(); // predicted measurement
    Eigen::Matrix3d S = Eigen::Matrix3d::Identity();  // innovation covariance H P H' + R
    double trace_term = 0.0;                          // tr(S^{-1} H P H')
    double q_active = 1.0;                            // q(s = 1)
    std::vector<int> gated;                           // indices into the measurement list
    bool valid = true;                                // false disables the row entirely
};

/// Refined association weights combining the expected measurement
/// log likelihood under the state posterior with the expected detection prior
/// under the existence posterior. Clutter row entries are log(p_c); missed
/// column entries are zero; pairings outside the gate sit at kChiFloor.
AssignmentProblem build_problem(const std::vector<TargetAssocInput>& targets,
                                const std::vector<Eigen::Vector3d>& ys,
                                double p_d_active, double p_d_dormant, double lambda,
                                double p_c);

/// Loopy belief propagation on the assignment factor graph, ratio message
/// parametrization in the log domain, synchronous schedule with damping.
/// Marginals are taken from the converged beliefs and projected onto the
/// row/column consistency set.
AssignmentMarginals run_lbp(const AssignmentProblem& problem, const LbpOptions& opts = {});

/// Propagation path weights q(phi) from per-path posterior moments: inverse
/// square root of the deflected Mahalanobis distance to the information-fused
/// mean, distances floored at 1e-12, normalized over paths.
Eigen::VectorXd path_weights(const std::vector<Eigen::Vector4d>& x,
                             const std::vector<Eigen::Matrix4d>& P);

/// Bethe entropy of the assignment marginals: row factor entropies plus
/// column factor entropies minus pairwise binary entropies.
double bethe_entropy(const AssignmentMarginals& marginals);

/// Bethe entropy including a path weight entropy term.
double bethe_entropy(const AssignmentMarginals& marginals, const Eigen::VectorXd& path_w);

} // namespace jdtvb::assoc
