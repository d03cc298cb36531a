#include "jdtvb/assoc.hpp"

#include <algorithm>
#include <cmath>

#include "jdtvb/errors.hpp"
#include "jdtvb/stats.hpp"

namespace jdtvb::assoc {

namespace {

double clamp_pd(double p) {
    return std::clamp(p, 1e-6, 1.0 - 1e-6);
}

double detection_log_ratio(double p_d, double lambda) {
    double p = clamp_pd(p_d);
    return std::log(p / ((1.0 - p) * lambda));
}

double floor_chi(double v) {
    if (!std::isfinite(v)) return kChiFloor;
    return std::max(v, kChiFloor);
}

// Leave-one-out log-sum-exp over base and terms, excluding index skip.
// sum_exp and m are the precomputed full-set accumulator and max.
double loo_lse(const Eigen::VectorXd& terms, double base, double m, double sum_exp, int skip) {
    double rem = sum_exp - std::exp(terms[skip] - m);
    if (rem > 1e-12 * sum_exp && rem > 0.0) return m + std::log(rem);
    // Cancellation: the skipped term dominates, recompute exactly.
    double m2 = base;
    for (int l = 0; l < terms.size(); ++l)
        if (l != skip) m2 = std::max(m2, terms[l]);
    double s = std::exp(base - m2);
    for (int l = 0; l < terms.size(); ++l)
        if (l != skip) s += std::exp(terms[l] - m2);
    return m2 + std::log(s);
}

// Alternating row/column rescaling onto the consistency set. The input is
// already near-consistent at LBP convergence; this removes the residual so
// emitted marginals satisfy both sum constraints to machine precision.
void project_consistent(Eigen::MatrixXd& E) {
    const int nt = static_cast<int>(E.rows()) - 1;
    const int ne = static_cast<int>(E.cols()) - 1;
    if (nt == 0 || ne == 0) return;
    for (int sweep = 0; sweep < 500; ++sweep) {
        double worst = 0.0;
        for (int i = 1; i <= nt; ++i) {
            double s = E.row(i).sum();
            if (s <= 0.0) continue;
            worst = std::max(worst, std::abs(s - 1.0));
            E.row(i) /= s;
        }
        for (int j = 1; j <= ne; ++j) {
            double s = E.col(j).sum();
            if (s <= 0.0) continue;
            worst = std::max(worst, std::abs(s - 1.0));
            E.col(j) /= s;
        }
        if (worst < 1e-14) break;
    }
}

} // namespace

Eigen::MatrixXd chi_prior(int n_targets, int n_meas, double p_d, double lambda) {
    if (lambda <= 0.0) throw DomainError("chi_prior: clutter density must be positive");
    Eigen::MatrixXd chi = Eigen::MatrixXd::Zero(n_targets + 1, n_meas + 1);
    const double v = detection_log_ratio(p_d, lambda);
    chi.block(1, 1, n_targets, n_meas).setConstant(v);
    return chi;
}

AssignmentProblem build_problem(const std::vector<TargetAssocInput>& targets,
                                const std::vector<Eigen::Vector3d>& ys,
                                double p_d_active, double p_d_dormant, double lambda,
                                double p_c) {
    if (lambda <= 0.0 || p_c <= 0.0)
        throw DomainError("build_problem: lambda and p_c must be positive");
    const int nt = static_cast<int>(targets.size());
    const int ne = static_cast<int>(ys.size());
    AssignmentProblem prob;
    prob.chi = Eigen::MatrixXd::Constant(nt + 1, ne + 1, kChiFloor);
    prob.chi(0, 0) = 0.0;
    prob.chi.col(0).setZero();
    for (int j = 1; j <= ne; ++j) prob.chi(0, j) = floor_chi(std::log(p_c));

    const double f_active = detection_log_ratio(p_d_active, lambda);
    const double f_dormant = detection_log_ratio(p_d_dormant, lambda);
    for (int i = 1; i <= nt; ++i) {
        const TargetAssocInput& tgt = targets[static_cast<std::size_t>(i - 1)];
        if (!tgt.valid) continue;
        const double q = std::clamp(tgt.q_active, 0.0, 1.0);
        const double e_s = q * f_active + (1.0 - q) * f_dormant;
        const double logdet_S = stats::logdet_spd(tgt.S);
        const double c_k = std::log(2.0 * M_PI) - 0.5 * logdet_S;
        for (int j : tgt.gated) {
            const Eigen::Vector3d innov = ys[static_cast<std::size_t>(j)] - tgt.y_pred;
            const double d2 = stats::mahalanobis2(innov, tgt.S);
            const double e_x = -0.5 * tgt.trace_term - 0.5 * d2 + c_k;
            prob.chi(i, j + 1) = floor_chi(e_x + e_s);
        }
    }
    return prob;
}

AssignmentMarginals run_lbp(const AssignmentProblem& problem, const LbpOptions& opts) {
    const int nt = problem.n_targets();
    const int ne = problem.n_meas();
    const Eigen::MatrixXd& chi = problem.chi;

    AssignmentMarginals out;
    out.E = Eigen::MatrixXd::Zero(nt + 1, ne + 1);
    if (nt == 0 && ne == 0) {
        out.converged = true;
        return out;
    }
    if (ne == 0) {
        for (int i = 1; i <= nt; ++i) out.E(i, 0) = 1.0;
        out.converged = true;
        return out;
    }
    if (nt == 0) {
        for (int j = 1; j <= ne; ++j) out.E(0, j) = 1.0;
        out.converged = true;
        return out;
    }

    // Ratio messages in the log domain: mR(i,j) from row constraint i to the
    // pair variable (i,j), mC(i,j) from column constraint j.
    Eigen::MatrixXd mR = Eigen::MatrixXd::Zero(nt, ne);
    Eigen::MatrixXd mC = Eigen::MatrixXd::Zero(nt, ne);
    Eigen::MatrixXd mR_new(nt, ne), mC_new(nt, ne);
    Eigen::VectorXd terms(std::max(nt, ne));

    const double damp = opts.damping;
    double residual = 0.0;
    int iter = 0;
    bool converged = false;
    for (iter = 1; iter <= opts.max_iters; ++iter) {
        for (int i = 0; i < nt; ++i) {
            const double base = chi(i + 1, 0);
            double m = base;
            for (int l = 0; l < ne; ++l) {
                terms[l] = chi(i + 1, l + 1) + mC(i, l);
                m = std::max(m, terms[l]);
            }
            double sum_exp = std::exp(base - m);
            for (int l = 0; l < ne; ++l) sum_exp += std::exp(terms[l] - m);
            for (int j = 0; j < ne; ++j)
                mR_new(i, j) = -loo_lse(terms.head(ne), base, m, sum_exp, j);
        }
        for (int j = 0; j < ne; ++j) {
            const double base = chi(0, j + 1);
            double m = base;
            for (int l = 0; l < nt; ++l) {
                terms[l] = chi(l + 1, j + 1) + mR(l, j);
                m = std::max(m, terms[l]);
            }
            double sum_exp = std::exp(base - m);
            for (int l = 0; l < nt; ++l) sum_exp += std::exp(terms[l] - m);
            for (int i = 0; i < nt; ++i)
                mC_new(i, j) = -loo_lse(terms.head(nt), base, m, sum_exp, i);
        }
        mR_new = damp * mR + (1.0 - damp) * mR_new;
        mC_new = damp * mC + (1.0 - damp) * mC_new;
        residual = std::max((mR_new - mR).cwiseAbs().maxCoeff(),
                            (mC_new - mC).cwiseAbs().maxCoeff());
        mR.swap(mR_new);
        mC.swap(mC_new);
        if (residual <= opts.tol) {
            converged = true;
            break;
        }
    }

    // Beliefs: rows from column-side messages, clutter from row-side messages.
    for (int i = 0; i < nt; ++i) {
        Eigen::VectorXd w(ne + 1);
        w[0] = chi(i + 1, 0);
        for (int j = 0; j < ne; ++j) w[j + 1] = chi(i + 1, j + 1) + mC(i, j);
        const double lse = stats::log_sum_exp(w);
        out.E(i + 1, 0) = std::exp(w[0] - lse);
        for (int j = 0; j < ne; ++j) out.E(i + 1, j + 1) = std::exp(w[j + 1] - lse);
    }
    for (int j = 0; j < ne; ++j) {
        Eigen::VectorXd v(nt + 1);
        v[0] = chi(0, j + 1);
        for (int i = 0; i < nt; ++i) v[i + 1] = chi(i + 1, j + 1) + mR(i, j);
        out.E(0, j + 1) = std::exp(v[0] - stats::log_sum_exp(v));
    }
    project_consistent(out.E);

    out.iterations = std::min(iter, opts.max_iters);
    out.converged = converged;
    out.residual = residual;
    return out;
}

Eigen::VectorXd path_weights(const std::vector<Eigen::Vector4d>& x,
                             const std::vector<Eigen::Matrix4d>& P) {
    const std::size_t n = x.size();
    if (n == 0 || P.size() != n)
        throw DomainError("path_weights: need matching non-empty moment lists");
    Eigen::Matrix4d Lambda = Eigen::Matrix4d::Zero();
    Eigen::Vector4d eta = Eigen::Vector4d::Zero();
    std::vector<Eigen::LDLT<Eigen::Matrix4d>> solvers;
    solvers.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        solvers.emplace_back(P[t]);
        if (solvers.back().info() != Eigen::Success)
            throw SingularInnovation("path_weights: path covariance not positive definite");
        Lambda += solvers.back().solve(Eigen::Matrix4d::Identity());
        eta += solvers.back().solve(x[t]);
    }
    Eigen::LDLT<Eigen::Matrix4d> fused(Lambda);
    if (fused.info() != Eigen::Success)
        throw SingularInnovation("path_weights: fused information matrix singular");
    const Eigen::Matrix4d Sigma = fused.solve(Eigen::Matrix4d::Identity());
    const Eigen::Vector4d mu = fused.solve(eta);

    Eigen::VectorXd q(n);
    for (std::size_t t = 0; t < n; ++t) {
        const Eigen::Vector4d diff = x[t] - mu;
        const Eigen::Matrix4d D = P[t] + Sigma;
        double dist = stats::mahalanobis2(diff, D);
        q[static_cast<Eigen::Index>(t)] = 1.0 / std::sqrt(std::max(dist, 1e-12));
    }
    q /= q.sum();
    return q;
}

double bethe_entropy(const AssignmentMarginals& marginals) {
    const Eigen::MatrixXd& E = marginals.E;
    const int nt = static_cast<int>(E.rows()) - 1;
    const int ne = static_cast<int>(E.cols()) - 1;
    double H = 0.0;
    for (int i = 1; i <= nt; ++i) H += stats::entropy(E.row(i).transpose());
    for (int j = 1; j <= ne; ++j) H += stats::entropy(E.col(j));
    for (int i = 1; i <= nt; ++i) {
        for (int j = 1; j <= ne; ++j) {
            const double p = std::clamp(E(i, j), 0.0, 1.0);
            Eigen::Vector2d pair(p, 1.0 - p);
            H -= stats::entropy(pair);
        }
    }
    return H;
}

double bethe_entropy(const AssignmentMarginals& marginals, const Eigen::VectorXd& path_w) {
    return bethe_entropy(marginals) + stats::entropy(path_w);
}

} // namespace jdtvb::assoc
