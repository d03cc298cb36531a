#include "jdtvb/smoothing.hpp"

#include <cmath>

#include "jdtvb/errors.hpp"
#include "jdtvb/stats.hpp"

namespace jdtvb::smoothing {

namespace {

constexpr int kN = 4; // state dimension

struct SigmaSet {
    Eigen::Matrix<double, kN, 2 * kN + 1> X;
    double wm0, wc0, wi;
};

SigmaSet sigma_points(const Eigen::Vector4d& x, const Eigen::Matrix4d& P, const UtParams& ut) {
    SigmaSet s;
    const double lambda = ut.alpha * ut.alpha * (kN + ut.kappa) - kN;
    const double denom = kN + lambda;
    s.wm0 = lambda / denom;
    s.wc0 = s.wm0 + 1.0 - ut.alpha * ut.alpha + ut.beta;
    s.wi = 0.5 / denom;
    const Eigen::Matrix4d L = stats::cholesky_with_jitter(denom * P);
    s.X.col(0) = x;
    for (int i = 0; i < kN; ++i) {
        s.X.col(1 + i) = x + L.col(i);
        s.X.col(1 + kN + i) = x - L.col(i);
    }
    return s;
}

} // namespace

std::vector<int> gate(const Eigen::VectorXd& y_pred, const Eigen::MatrixXd& S,
                      const std::vector<Eigen::Vector3d>& ys, double gamma) {
    std::vector<int> idx;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
        throw SingularInnovation("gate: innovation covariance not positive definite");
    for (std::size_t j = 0; j < ys.size(); ++j) {
        Eigen::VectorXd d = ys[j] - y_pred;
        if (d.dot(ldlt.solve(d)) <= gamma) idx.push_back(static_cast<int>(j));
    }
    return idx;
}

PseudoMeasurement pseudo_measurement(const std::vector<Eigen::VectorXd>& ys,
                                     const Eigen::VectorXd& weights, double miss_weight,
                                     const Eigen::MatrixXd& R, double min_mass) {
    if (static_cast<Eigen::Index>(ys.size()) != weights.size())
        throw DomainError("pseudo_measurement: weights must match measurements");
    PseudoMeasurement pm;
    const double mass = 1.0 - miss_weight;
    if (ys.empty() || mass < min_mass) return pm;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(R.rows());
    for (std::size_t j = 0; j < ys.size(); ++j) acc += weights[static_cast<Eigen::Index>(j)] * ys[j];
    pm.y = acc / mass;
    pm.R = R / mass;
    pm.valid = true;
    return pm;
}

void ut_predict_measurement(const Eigen::Vector4d& x, const Eigen::Matrix4d& P,
                            const MeasurementFn& h, const Eigen::MatrixXd& R,
                            Eigen::VectorXd& y_pred, Eigen::MatrixXd& S, const UtParams& ut) {
    const SigmaSet s = sigma_points(x, P, ut);
    const Eigen::Index m = R.rows();
    Eigen::MatrixXd Z(m, 2 * kN + 1);
    for (int i = 0; i < 2 * kN + 1; ++i) Z.col(i) = h(s.X.col(i));
    y_pred = s.wm0 * Z.col(0);
    for (int i = 1; i < 2 * kN + 1; ++i) y_pred += s.wi * Z.col(i);
    S = R;
    for (int i = 0; i < 2 * kN + 1; ++i) {
        const double w = (i == 0) ? s.wc0 : s.wi;
        const Eigen::VectorXd dz = Z.col(i) - y_pred;
        S += w * dz * dz.transpose();
    }
    S = 0.5 * (S + S.transpose()).eval();
}

void ut_update(Eigen::Vector4d& x, Eigen::Matrix4d& P, const MeasurementFn& h,
               const Eigen::MatrixXd& R, const Eigen::VectorXd& y, const UtParams& ut) {
    const SigmaSet s = sigma_points(x, P, ut);
    const Eigen::Index m = R.rows();
    Eigen::MatrixXd Z(m, 2 * kN + 1);
    for (int i = 0; i < 2 * kN + 1; ++i) Z.col(i) = h(s.X.col(i));
    Eigen::VectorXd zp = s.wm0 * Z.col(0);
    for (int i = 1; i < 2 * kN + 1; ++i) zp += s.wi * Z.col(i);
    Eigen::MatrixXd S = R;
    Eigen::MatrixXd Pxz = Eigen::MatrixXd::Zero(kN, m);
    for (int i = 0; i < 2 * kN + 1; ++i) {
        const double w = (i == 0) ? s.wc0 : s.wi;
        const Eigen::VectorXd dz = Z.col(i) - zp;
        S += w * dz * dz.transpose();
        Pxz += w * (s.X.col(i) - x) * dz.transpose();
    }
    S = 0.5 * (S + S.transpose()).eval();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
        throw SingularInnovation("ut_update: innovation covariance not positive definite");
    const Eigen::MatrixXd K_gain = ldlt.solve(Pxz.transpose()).transpose();
    x = x + K_gain * (y - zp);
    Eigen::Matrix4d Pu = P - K_gain * S * K_gain.transpose();
    P = 0.5 * (Pu + Pu.transpose());
}

ForwardPass ukf_forward(const TransitionFn& f, const Eigen::Matrix4d& Q,
                        const MeasurementFn& h, const Eigen::MatrixXd& R_nominal,
                        const std::vector<PseudoMeasurement>& meas,
                        const Eigen::Vector4d& x0, const Eigen::Matrix4d& P0,
                        const UtParams& ut) {
    const std::size_t K = meas.size();
    if (K == 0) throw DomainError("ukf_forward: need at least one scan");
    ForwardPass fp;
    fp.x_filt.resize(K);
    fp.x_pred.resize(K);
    fp.P_filt.resize(K);
    fp.P_pred.resize(K);
    fp.cross.resize(K > 1 ? K - 1 : 0);
    fp.y_pred.resize(K);
    fp.S.resize(K);

    Eigen::Vector4d x = x0;
    Eigen::Matrix4d P = P0;
    for (std::size_t k = 0; k < K; ++k) {
        if (k > 0) {
            const SigmaSet s = sigma_points(x, P, ut);
            Eigen::Matrix<double, kN, 2 * kN + 1> Y;
            for (int i = 0; i < 2 * kN + 1; ++i) Y.col(i) = f(s.X.col(i));
            Eigen::Vector4d xp = s.wm0 * Y.col(0);
            for (int i = 1; i < 2 * kN + 1; ++i) xp += s.wi * Y.col(i);
            Eigen::Matrix4d Pp = Q;
            Eigen::Matrix4d C = Eigen::Matrix4d::Zero();
            for (int i = 0; i < 2 * kN + 1; ++i) {
                const double w = (i == 0) ? s.wc0 : s.wi;
                const Eigen::Vector4d dy = Y.col(i) - xp;
                Pp += w * dy * dy.transpose();
                C += w * (s.X.col(i) - x) * dy.transpose();
            }
            fp.cross[k - 1] = C;
            x = xp;
            P = 0.5 * (Pp + Pp.transpose());
        }
        fp.x_pred[k] = x;
        fp.P_pred[k] = P;

        const bool valid = meas[k].valid;
        const Eigen::MatrixXd& R = valid ? meas[k].R : R_nominal;
        const Eigen::Index m = R.rows();
        const SigmaSet s = sigma_points(x, P, ut);
        Eigen::MatrixXd Z(m, 2 * kN + 1);
        for (int i = 0; i < 2 * kN + 1; ++i) Z.col(i) = h(s.X.col(i));
        Eigen::VectorXd zp = s.wm0 * Z.col(0);
        for (int i = 1; i < 2 * kN + 1; ++i) zp += s.wi * Z.col(i);
        Eigen::MatrixXd S = R;
        Eigen::MatrixXd Pxz = Eigen::MatrixXd::Zero(kN, m);
        for (int i = 0; i < 2 * kN + 1; ++i) {
            const double w = (i == 0) ? s.wc0 : s.wi;
            const Eigen::VectorXd dz = Z.col(i) - zp;
            S += w * dz * dz.transpose();
            Pxz += w * (s.X.col(i) - x) * dz.transpose();
        }
        S = 0.5 * (S + S.transpose());
        fp.y_pred[k] = zp;
        fp.S[k] = S;

        if (valid) {
            Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
            if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
                throw SingularInnovation("ukf_forward: innovation covariance not positive definite");
            const Eigen::MatrixXd K_gain = ldlt.solve(Pxz.transpose()).transpose();
            x = x + K_gain * (meas[k].y - zp);
            Eigen::Matrix4d Pu = P - K_gain * S * K_gain.transpose();
            P = 0.5 * (Pu + Pu.transpose());
        }
        fp.x_filt[k] = x;
        fp.P_filt[k] = P;
    }
    return fp;
}

SmoothedTrack urts_backward(const ForwardPass& fwd) {
    const std::size_t K = fwd.x_filt.size();
    SmoothedTrack out;
    out.x = fwd.x_filt;
    out.P = fwd.P_filt;
    for (std::size_t k = K - 1; k-- > 0;) {
        Eigen::LDLT<Eigen::Matrix4d> ldlt(fwd.P_pred[k + 1]);
        if (ldlt.info() != Eigen::Success)
            throw CovarianceBreakdown("urts_backward: predicted covariance not positive definite");
        const Eigen::Matrix4d G = ldlt.solve(fwd.cross[k].transpose()).transpose();
        out.x[k] = fwd.x_filt[k] + G * (out.x[k + 1] - fwd.x_pred[k + 1]);
        Eigen::Matrix4d P =
            fwd.P_filt[k] + G * (out.P[k + 1] - fwd.P_pred[k + 1]) * G.transpose();
        out.P[k] = 0.5 * (P + P.transpose());
    }
    return out;
}

void fuse_moments(const std::vector<Eigen::Vector4d>& x, const std::vector<Eigen::Matrix4d>& P,
                  const Eigen::VectorXd& w, Eigen::Vector4d& x_out, Eigen::Matrix4d& P_out) {
    if (x.empty() || x.size() != P.size() || static_cast<Eigen::Index>(x.size()) != w.size())
        throw DomainError("fuse_moments: inconsistent inputs");
    x_out.setZero();
    Eigen::Matrix4d Lambda = Eigen::Matrix4d::Zero();
    for (std::size_t t = 0; t < x.size(); ++t) {
        const double wt = w[static_cast<Eigen::Index>(t)];
        x_out += wt * x[t];
        Eigen::LDLT<Eigen::Matrix4d> ldlt(P[t]);
        if (ldlt.info() != Eigen::Success)
            throw CovarianceBreakdown("fuse_moments: path covariance not positive definite");
        Lambda += wt * ldlt.solve(Eigen::Matrix4d::Identity());
    }
    Eigen::LDLT<Eigen::Matrix4d> ldlt(Lambda);
    if (ldlt.info() != Eigen::Success)
        throw CovarianceBreakdown("fuse_moments: fused information matrix singular");
    const Eigen::Matrix4d Pf = ldlt.solve(Eigen::Matrix4d::Identity());
    P_out = 0.5 * (Pf + Pf.transpose());
}

} // namespace jdtvb::smoothing
