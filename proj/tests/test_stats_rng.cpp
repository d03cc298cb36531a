#include "doctest.h"

#include <cmath>

#include "jdtvb/errors.hpp"
#include "jdtvb/rng.hpp"
#include "jdtvb/stats.hpp"

#include "checks.hpp"
#include "oracles.hpp"

using namespace jdtvb;

TEST_CASE("chi2_cdf matches quadrature") {
    for (double dof : {1.0, 2.0, 3.0, 4.0, 6.0}) {
        for (double x : {0.5, 1.0, 5.0, 9.06, 20.0}) {
            const double ref = oracle::chi2_cdf_quadrature(x, dof);
            CHECK_ABS(stats::chi2_cdf(x, dof), ref, 1e-10);
        }
    }
    CHECK(stats::chi2_cdf(0.0, 3.0) == 0.0);
    CHECK(stats::chi2_cdf(-1.0, 3.0) == 0.0);
}

TEST_CASE("chi2_quantile inverts the CDF") {
    for (double p : {0.5, 0.9, 0.971, 0.99}) {
        for (double dof : {1.0, 2.0, 3.0}) {
            const double g = stats::chi2_quantile(p, dof);
            CHECK_ABS(stats::chi2_cdf(g, dof), p, 1e-10);
        }
    }
    // The 3-dof gate used throughout the tracker.
    const double g = stats::chi2_quantile(0.971, 3.0);
    CHECK_ABS(oracle::chi2_cdf_quadrature(g, 3.0), 0.971, 1e-8);
    CHECK(g > 9.0);
    CHECK(g < 9.2);
}

TEST_CASE("mahalanobis2 hand value and failure") {
    Eigen::VectorXd d(2);
    d << 1.0, 2.0;
    Eigen::MatrixXd S(2, 2);
    S << 2.0, 0.0, 0.0, 4.0;
    CHECK_ABS(stats::mahalanobis2(d, S), 1.5, 1e-14);
    Eigen::MatrixXd bad(2, 2);
    bad << 1.0, 0.0, 0.0, -1.0;
    CHECK_THROWS_AS(stats::mahalanobis2(d, bad), SingularInnovation);
}

TEST_CASE("logdet_spd") {
    Eigen::MatrixXd S(2, 2);
    S << 4.0, 1.0, 1.0, 3.0;
    CHECK_ABS(stats::logdet_spd(S), std::log(11.0), 1e-13);
    Eigen::MatrixXd bad = -S;
    CHECK_THROWS_AS(stats::logdet_spd(bad), SingularInnovation);
}

TEST_CASE("log_sum_exp stability") {
    Eigen::VectorXd v(3);
    v << 0.0, 1.0, 2.0;
    const double direct = std::log(std::exp(0.0) + std::exp(1.0) + std::exp(2.0));
    CHECK_ABS(stats::log_sum_exp(v), direct, 1e-14);
    Eigen::VectorXd big(2);
    big << 1000.0, 1000.0;
    CHECK_ABS(stats::log_sum_exp(big), 1000.0 + std::log(2.0), 1e-12);
}

TEST_CASE("nearest_psd projects the indefinite block") {
    Eigen::MatrixXd A(2, 2);
    A << 8.0, 4.0, 4.0, 1.0; // eigenvalues (9 +- sqrt(113)) / 2, one negative
    const Eigen::MatrixXd P = stats::nearest_psd(A);
    CHECK((P - P.transpose()).norm() <= 1e-14);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
    CHECK(es.eigenvalues().minCoeff() >= -1e-14);
    // Projection clamps the negative eigenvalue, so the Frobenius distance to
    // the input equals its magnitude.
    const double neg = (9.0 - std::sqrt(113.0)) / 2.0;
    CHECK_ABS((P - A).norm(), -neg, 1e-12);
    // PSD input passes through unchanged.
    Eigen::MatrixXd B(2, 2);
    B << 2.0, 0.5, 0.5, 1.0;
    CHECK((stats::nearest_psd(B) - B).norm() <= 1e-13);
}

TEST_CASE("psd_sqrt reproduces the matrix") {
    Eigen::MatrixXd A(2, 2);
    A << 2.0, 0.5, 0.5, 1.0;
    Eigen::MatrixXd L = stats::psd_sqrt(A);
    CHECK((L * L.transpose() - A).norm() <= 1e-13);
    Eigen::MatrixXd R(2, 2); // rank one, Cholesky would fail
    R << 1.0, 1.0, 1.0, 1.0;
    L = stats::psd_sqrt(R);
    CHECK((L * L.transpose() - R).norm() <= 1e-13);
}

TEST_CASE("cholesky_with_jitter") {
    Eigen::MatrixXd A(2, 2);
    A << 4.0, 1.0, 1.0, 2.0;
    const Eigen::MatrixXd L = stats::cholesky_with_jitter(A);
    CHECK((L * L.transpose() - A).norm() <= 1e-12);
    // A barely indefinite matrix succeeds through jitter.
    Eigen::MatrixXd B(2, 2);
    B << 1.0, 1.0, 1.0, 1.0 - 1e-14;
    const Eigen::MatrixXd LB = stats::cholesky_with_jitter(B);
    CHECK(std::isfinite(LB(1, 1)));
    // A hopeless matrix does not.
    Eigen::MatrixXd C(2, 2);
    C << 1.0, 0.0, 0.0, -1.0;
    CHECK_THROWS_AS(stats::cholesky_with_jitter(C), CovarianceBreakdown);
}

TEST_CASE("entropy") {
    Eigen::VectorXd u = Eigen::VectorXd::Constant(4, 0.25);
    CHECK_ABS(stats::entropy(u), std::log(4.0), 1e-14);
    Eigen::VectorXd onehot(3);
    onehot << 0.0, 1.0, 0.0;
    CHECK(stats::entropy(onehot) == 0.0);
}

TEST_CASE("rng determinism and stream separation") {
    rng::Stream a(42, 1), b(42, 1), c(42, 2);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 1000; ++i) {
        const double ua = a.uniform();
        all_equal = all_equal && (ua == b.uniform());
        any_diff = any_diff || (ua != c.uniform());
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("rng uniform moments and range") {
    rng::Stream s(7, 1);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    bool in_range = true;
    for (int i = 0; i < n; ++i) {
        const double u = s.uniform();
        in_range = in_range && u >= 0.0 && u < 1.0;
        sum += u;
        sq += u * u;
    }
    CHECK(in_range);
    const double mean = sum / n;
    CHECK_ABS(mean, 0.5, 0.005);
    CHECK_ABS(sq / n - mean * mean, 1.0 / 12.0, 0.005);
    const double v = s.uniform(-2.0, 3.0);
    CHECK(v >= -2.0);
    CHECK(v < 3.0);
}

TEST_CASE("rng normal moments") {
    rng::Stream s(11, 3);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = s.normal();
        sum += x;
        sq += x * x;
    }
    CHECK_ABS(sum / n, 0.0, 0.01);
    CHECK_ABS(sq / n, 1.0, 0.02);
}

TEST_CASE("rng poisson moments") {
    rng::Stream s(13, 4);
    for (double mean : {0.5, 5.0, 100.0}) {
        double sum = 0.0;
        const int n = 20000;
        for (int i = 0; i < n; ++i) sum += s.poisson(mean);
        const double tol = 5.0 * std::sqrt(mean / n); // 5 sigma band
        CHECK_ABS(sum / n, mean, tol);
    }
    CHECK(s.poisson(0.0) == 0);
}

TEST_CASE("rng bernoulli") {
    rng::Stream s(17, 5);
    int hits = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) hits += s.bernoulli(0.3) ? 1 : 0;
    CHECK_ABS(static_cast<double>(hits) / n, 0.3, 0.01);
}
