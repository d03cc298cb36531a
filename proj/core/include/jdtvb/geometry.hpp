#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace jdtvb {

/// Ground coordinate state [g, g_rate, theta, theta_rate]:
/// ground range (km), ground range rate (km/s), bearing (rad), bearing rate (rad/s).
using GroundState = Eigen::Vector4d;

/// Slant coordinate measurement [r, r_rate, zeta]:
/// slant range (km), slant range rate (km/s), apparent azimuth (rad).
using SlantMeasurement = Eigen::Vector3d;

inline constexpr int kG = 0;
inline constexpr int kGRate = 1;
inline constexpr int kTheta = 2;
inline constexpr int kThetaRate = 3;

/// One ionospheric propagation mode: virtual reflection heights (km) on the
/// transmit and receive legs.
struct PropagationPath {
    double h_t = 0.0;
    double h_r = 0.0;
    std::string label;
};

/// Bistatic sensor layout: transmitter/receiver separation d (km) and the
/// active propagation path table.
struct SensorGeometry {
    double d = 0.0;
    std::vector<PropagationPath> paths;
};

/// Nearly constant velocity model in ground coordinates.
struct MotionModel {
    double T_s = 0.0;
    Eigen::Matrix4d F = Eigen::Matrix4d::Identity();
    Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
};

/// The four-mode table EE, EF, FE, FF for layer heights h_E and h_F.
/// Path 1 = EE, 2 = EF, 3 = FE, 4 = FF; first letter transmit leg, second receive.
std::vector<PropagationPath> standard_path_table(double h_E, double h_F);

/// Constant velocity transition over one scan period.
MotionModel cv_model(double T_s, const Eigen::Matrix4d& Q);

/// Deterministic state propagation x_{k+1} = F x_k.
GroundState propagate(const GroundState& x, const MotionModel& model);

/// Project a ground state into slant coordinates through the given path.
/// Throws DomainError for non-positive range or an azimuth argument outside
/// the arcsin domain.
SlantMeasurement slant_measure(const GroundState& x, const PropagationPath& path, double d);

/// Analytic Jacobian of slant_measure with respect to the ground state, 3x4.
Eigen::Matrix<double, 3, 4> measurement_jacobian(const GroundState& x,
                                                 const PropagationPath& path, double d);

/// Invert slant_measure for the positional components: recover [g, g_rate,
/// theta] from one slant measurement through a hypothesised path. theta_rate
/// is unobservable from a single measurement and is returned as zero.
/// Closed form at d = 0, Newton refinement otherwise. Throws DomainError when
/// the measurement is inconsistent with the path geometry.
GroundState back_project(const SlantMeasurement& y, const PropagationPath& path, double d);

/// Jacobian of the back-projected [g, g_rate, theta] with respect to the
/// measurement [r, r_rate, zeta], 3x3. Used to push measurement noise into
/// ground coordinates when seeding tracks.
Eigen::Matrix3d back_project_jacobian(const SlantMeasurement& y, const PropagationPath& path,
                                      double d);

} // namespace jdtvb
