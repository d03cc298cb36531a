#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace jdtvb::smoothing {

struct UtParams {
    double alpha = 1e-3;
    double beta = 2.0;
    double kappa = 0.0;
};

/// Chi-square gate: indices of measurements whose squared Mahalanobis
/// distance to y_pred under S is at most gamma. Order preserved.
std::vector<int> gate(const Eigen::VectorXd& y_pred, const Eigen::MatrixXd& S,
                      const std::vector<Eigen::Vector3d>& ys, double gamma);

/// Weighted synthetic measurement for one target and path. weights[j] is the
/// association probability of gated measurement ys[j]; miss_weight is the
/// probability of no detection. Invalid (valid = false) when the detection
/// mass 1 - miss_weight falls below min_mass; such scans are prediction-only.
struct PseudoMeasurement {
    Eigen::VectorXd y;
    Eigen::MatrixXd R;
    bool valid = false;
};

PseudoMeasurement pseudo_measurement(const std::vector<Eigen::VectorXd>& ys,
                                     const Eigen::VectorXd& weights, double miss_weight,
                                     const Eigen::MatrixXd& R, double min_mass = 1e-6);

using TransitionFn = std::function<Eigen::Vector4d(const Eigen::Vector4d&)>;
using MeasurementFn = std::function<Eigen::VectorXd(const Eigen::Vector4d&)>;

/// Forward unscented filter output over scans 0..K-1 (local indices).
struct ForwardPass {
    std::vector<Eigen::Vector4d> x_filt, x_pred;
    std::vector<Eigen::Matrix4d> P_filt, P_pred;
    std::vector<Eigen::Matrix4d> cross; // cov(x_k, x_{k+1} | y_{1:k}), size K-1
    std::vector<Eigen::VectorXd> y_pred;
    std::vector<Eigen::MatrixXd> S; // innovation covariance of the applied update
};

/// Unscented Kalman filter with per-scan pseudo-measurements. Scans whose
/// pseudo-measurement is invalid are prediction-only; y_pred and S are still
/// produced there from the predicted moments and R_nominal.
ForwardPass ukf_forward(const TransitionFn& f, const Eigen::Matrix4d& Q,
                        const MeasurementFn& h, const Eigen::MatrixXd& R_nominal,
                        const std::vector<PseudoMeasurement>& meas,
                        const Eigen::Vector4d& x0, const Eigen::Matrix4d& P0,
                        const UtParams& ut = {});

/// Predicted measurement moments through h at (x, P): y_pred and S = UT
/// covariance + R. Used for gating outside the batch filter.
void ut_predict_measurement(const Eigen::Vector4d& x, const Eigen::Matrix4d& P,
                            const MeasurementFn& h, const Eigen::MatrixXd& R,
                            Eigen::VectorXd& y_pred, Eigen::MatrixXd& S,
                            const UtParams& ut = {});

/// Single unscented measurement update of (x, P) with measurement y.
void ut_update(Eigen::Vector4d& x, Eigen::Matrix4d& P, const MeasurementFn& h,
               const Eigen::MatrixXd& R, const Eigen::VectorXd& y, const UtParams& ut = {});

struct SmoothedTrack {
    std::vector<Eigen::Vector4d> x;
    std::vector<Eigen::Matrix4d> P;
};

/// Rauch-Tung-Striebel backward pass over a forward unscented filter, using
/// the stored prediction cross covariances.
SmoothedTrack urts_backward(const ForwardPass& fwd);

/// Moment fusion across paths: weighted mean of means, weighted harmonic
/// combination of covariances in information form.
void fuse_moments(const std::vector<Eigen::Vector4d>& x, const std::vector<Eigen::Matrix4d>& P,
                  const Eigen::VectorXd& w, Eigen::Vector4d& x_out, Eigen::Matrix4d& P_out);

} // namespace jdtvb::smoothing
