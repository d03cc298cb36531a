#include "jdtvb/geometry.hpp"

#include <cmath>

#include "jdtvb/errors.hpp"

namespace jdtvb {

namespace {

struct LegRanges {
    double ra; // receive leg slant range
    double rb; // transmit leg slant range
};

LegRanges leg_ranges(double g, double sin_th, const PropagationPath& path, double d) {
    LegRanges lr;
    lr.ra = std::sqrt(0.25 * g * g + path.h_r * path.h_r);
    lr.rb = std::sqrt(0.25 * (g * g - 2.0 * d * g * sin_th + d * d) + path.h_t * path.h_t);
    return lr;
}

} // namespace

std::vector<PropagationPath> standard_path_table(double h_E, double h_F) {
    return {
        {h_E, h_E, "EE"},
        {h_E, h_F, "EF"},
        {h_F, h_E, "FE"},
        {h_F, h_F, "FF"},
    };
}

MotionModel cv_model(double T_s, const Eigen::Matrix4d& Q) {
    MotionModel m;
    m.T_s = T_s;
    m.F = Eigen::Matrix4d::Identity();
    m.F(kG, kGRate) = T_s;
    m.F(kTheta, kThetaRate) = T_s;
    m.Q = Q;
    return m;
}

GroundState propagate(const GroundState& x, const MotionModel& model) {
    return model.F * x;
}

SlantMeasurement slant_measure(const GroundState& x, const PropagationPath& path, double d) {
    const double g = x[kG];
    if (g <= 0.0) throw DomainError("slant_measure: ground range must be positive");
    const double sin_th = std::sin(x[kTheta]);
    const LegRanges lr = leg_ranges(g, sin_th, path, d);
    const double w = g * sin_th / (2.0 * lr.ra);
    if (std::abs(w) > 1.0) throw DomainError("slant_measure: azimuth argument outside arcsin domain");

    SlantMeasurement y;
    y[0] = lr.ra + lr.rb;
    y[1] = 0.25 * x[kGRate] * (g / lr.ra + (g - d * sin_th) / lr.rb);
    y[2] = std::asin(w);
    return y;
}

Eigen::Matrix<double, 3, 4> measurement_jacobian(const GroundState& x,
                                                 const PropagationPath& path, double d) {
    const double g = x[kG];
    if (g <= 0.0) throw DomainError("measurement_jacobian: ground range must be positive");
    const double sin_th = std::sin(x[kTheta]);
    const double cos_th = std::cos(x[kTheta]);
    const LegRanges lr = leg_ranges(g, sin_th, path, d);
    const double ra = lr.ra, rb = lr.rb;
    const double gb = g - d * sin_th; // transmit leg effective baseline term

    Eigen::Matrix<double, 3, 4> H = Eigen::Matrix<double, 3, 4>::Zero();

    H(0, kG) = g / (4.0 * ra) + gb / (4.0 * rb);
    H(0, kTheta) = -d * g * cos_th / (4.0 * rb);

    const double u = g / ra;
    const double v = gb / rb;
    const double du_dg = 1.0 / ra - g * g / (4.0 * ra * ra * ra);
    const double dv_dg = 1.0 / rb - gb * gb / (4.0 * rb * rb * rb);
    const double dv_dth = -d * cos_th / rb + gb * d * g * cos_th / (4.0 * rb * rb * rb);
    H(1, kG) = 0.25 * x[kGRate] * (du_dg + dv_dg);
    H(1, kGRate) = 0.25 * (u + v);
    H(1, kTheta) = 0.25 * x[kGRate] * dv_dth;

    const double w = g * sin_th / (2.0 * ra);
    const double one_minus_w2 = 1.0 - w * w;
    if (one_minus_w2 <= 1e-12)
        throw DomainError("measurement_jacobian: azimuth at arcsin domain edge");
    const double dw_dg = sin_th * path.h_r * path.h_r / (2.0 * ra * ra * ra);
    const double dw_dth = g * cos_th / (2.0 * ra);
    const double inv_sqrt = 1.0 / std::sqrt(one_minus_w2);
    H(2, kG) = dw_dg * inv_sqrt;
    H(2, kTheta) = dw_dth * inv_sqrt;

    return H;
}

GroundState back_project(const SlantMeasurement& y, const PropagationPath& path, double d) {
    const double r = y[0], r_rate = y[1], zeta = y[2];
    const double a = path.h_r * path.h_r;
    const double b = path.h_t * path.h_t;
    if (r <= path.h_r + path.h_t)
        throw DomainError("back_project: slant range below geometric minimum");

    // d = 0 closed form: r = sqrt(u + a) + sqrt(u + b) with u = g^2/4.
    const double s = (r * r + a - b) / (2.0 * r);
    const double u = s * s - a;
    if (u <= 0.0) throw DomainError("back_project: no positive ground range solution");
    double g = 2.0 * std::sqrt(u);
    double ra = std::sqrt(0.25 * g * g + a);
    double sth = 2.0 * ra * std::sin(zeta) / g;
    if (std::abs(sth) > 1.0) throw DomainError("back_project: azimuth inconsistent with range");
    double th = std::asin(sth);

    if (d != 0.0) {
        bool ok = false;
        for (int it = 0; it < 50; ++it) {
            const double sin_th = std::sin(th);
            const double cos_th = std::cos(th);
            const LegRanges lr = leg_ranges(g, sin_th, path, d);
            const double w = g * sin_th / (2.0 * lr.ra);
            if (std::abs(w) >= 1.0)
                throw DomainError("back_project: azimuth left arcsin domain during refinement");
            const double F1 = lr.ra + lr.rb - r;
            const double F2 = std::asin(w) - zeta;
            const double gb = g - d * sin_th;
            const double j11 = g / (4.0 * lr.ra) + gb / (4.0 * lr.rb);
            const double j12 = -d * g * cos_th / (4.0 * lr.rb);
            const double dw_dg = sin_th * a / (2.0 * lr.ra * lr.ra * lr.ra);
            const double dw_dth = g * cos_th / (2.0 * lr.ra);
            const double den = std::sqrt(1.0 - w * w);
            const double j21 = dw_dg / den;
            const double j22 = dw_dth / den;
            const double det = j11 * j22 - j12 * j21;
            if (std::abs(det) < 1e-14) throw DomainError("back_project: singular Newton step");
            const double dg = (-F1 * j22 + F2 * j12) / det;
            const double dth = (-j11 * F2 + j21 * F1) / det;
            g += dg;
            th += dth;
            if (g <= 0.0) throw DomainError("back_project: ground range went non-positive");
            if (std::abs(dg) < 1e-10 && std::abs(dth) < 1e-13) {
                ok = true;
                break;
            }
        }
        if (!ok) throw DomainError("back_project: Newton refinement did not converge");
    }

    const double sin_th = std::sin(th);
    const LegRanges lr = leg_ranges(g, sin_th, path, d);
    const double slope = g / lr.ra + (g - d * sin_th) / lr.rb;
    GroundState x;
    x[kG] = g;
    x[kGRate] = 4.0 * r_rate / slope;
    x[kTheta] = th;
    x[kThetaRate] = 0.0;
    return x;
}

Eigen::Matrix3d back_project_jacobian(const SlantMeasurement& y, const PropagationPath& path,
                                      double d) {
    const GroundState x = back_project(y, path, d);
    const Eigen::Matrix<double, 3, 4> H = measurement_jacobian(x, path, d);
    // The slant triple depends only on [g, g_rate, theta]; invert that square block.
    Eigen::Matrix3d Hs;
    Hs.col(0) = H.col(kG);
    Hs.col(1) = H.col(kGRate);
    Hs.col(2) = H.col(kTheta);
    Eigen::FullPivLU<Eigen::Matrix3d> lu(Hs);
    if (!lu.isInvertible())
        throw DomainError("back_project_jacobian: measurement map singular at solution");
    return lu.inverse();
}

} // namespace jdtvb
