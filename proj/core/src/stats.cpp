#include "jdtvb/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "jdtvb/errors.hpp"

namespace jdtvb::stats {

namespace {

// Lower incomplete gamma by series expansion, valid for x < a + 1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper incomplete gamma by continued fraction, valid for x >= a + 1.
double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        double an = -static_cast<double>(i) * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

} // namespace

double gamma_p(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw DomainError("gamma_p: a must be > 0 and x >= 0");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_cf(a, x);
}

double chi2_cdf(double x, double dof) {
    if (x <= 0.0) return 0.0;
    return gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_quantile(double p, double dof) {
    if (p <= 0.0 || p >= 1.0) throw DomainError("chi2_quantile: p must lie in (0, 1)");
    double lo = 0.0;
    double hi = std::max(dof, 1.0);
    while (chi2_cdf(hi, dof) < p) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (chi2_cdf(mid, dof) < p)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-13 * std::max(1.0, hi)) break;
    }
    return 0.5 * (lo + hi);
}

double mahalanobis2(const Eigen::VectorXd& d, const Eigen::MatrixXd& S) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
        throw SingularInnovation("mahalanobis2: covariance not positive definite");
    return d.dot(ldlt.solve(d));
}

double logdet_spd(const Eigen::MatrixXd& S) {
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success)
        throw SingularInnovation("logdet_spd: matrix not positive definite");
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double log_sum_exp(const Eigen::VectorXd& v) {
    if (v.size() == 0) return -std::numeric_limits<double>::infinity();
    double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

Eigen::MatrixXd nearest_psd(const Eigen::MatrixXd& A) {
    Eigen::MatrixXd sym = 0.5 * (A + A.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& A) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (A + A.transpose()));
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal();
}

Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& A, int max_retries,
                                     double jitter_scale) {
    Eigen::MatrixXd sym = 0.5 * (A + A.transpose());
    double jitter = jitter_scale * std::max(sym.trace(), 1e-30);
    Eigen::MatrixXd trial = sym;
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        Eigen::LLT<Eigen::MatrixXd> llt(trial);
        if (llt.info() == Eigen::Success) return llt.matrixL();
        trial = sym + jitter * Eigen::MatrixXd::Identity(sym.rows(), sym.cols());
        jitter *= 10.0;
    }
    throw CovarianceBreakdown("cholesky_with_jitter: matrix stayed indefinite after retries");
}

double entropy(const Eigen::VectorXd& p) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    }
    return h;
}

} // namespace jdtvb::stats
