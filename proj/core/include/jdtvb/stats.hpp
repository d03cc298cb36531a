#pragma once

#include <Eigen/Dense>

namespace jdtvb::stats {

/// Regularized lower incomplete gamma function P(a, x), a > 0, x >= 0.
double gamma_p(double a, double x);

/// Chi-square CDF with dof degrees of freedom.
double chi2_cdf(double x, double dof);

/// Chi-square quantile: smallest g with CDF(g) >= p, p in (0, 1).
double chi2_quantile(double p, double dof);

/// Squared Mahalanobis distance d' S^{-1} d via LDLT. Throws
/// SingularInnovation if S is not positive definite.
double mahalanobis2(const Eigen::VectorXd& d, const Eigen::MatrixXd& S);

/// log det of a positive definite matrix via LLT. Throws SingularInnovation
/// on failure.
double logdet_spd(const Eigen::MatrixXd& S);

/// Numerically stable log(sum(exp(v))).
double log_sum_exp(const Eigen::VectorXd& v);

/// Symmetrize and clamp negative eigenvalues to zero. Used on configured
/// noise matrices that are indefinite as printed.
Eigen::MatrixXd nearest_psd(const Eigen::MatrixXd& A);

/// Matrix square root L with L L' = A for positive semidefinite A, via
/// eigendecomposition (works at zero eigenvalues where Cholesky fails).
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& A);

/// Cholesky factor of A, retrying with added jitter scaled by trace.
/// Throws CovarianceBreakdown after max_retries failures.
Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& A, int max_retries = 3,
                                     double jitter_scale = 1e-9);

/// Shannon entropy of a discrete distribution, 0 log 0 treated as 0.
double entropy(const Eigen::VectorXd& p);

} // namespace jdtvb::stats
