#include "jdtvb/existence.hpp"

#include <algorithm>
#include <cmath>

#include "jdtvb/errors.hpp"

namespace jdtvb::existence {

namespace {

double clamp_pd(double p) {
    return std::clamp(p, 1e-6, 1.0 - 1e-6);
}

} // namespace

MetaModel make_meta_model(double stay_prob, double prior_active) {
    MetaModel m;
    m.T << stay_prob, 1.0 - stay_prob, 1.0 - stay_prob, stay_prob;
    m.prior << 1.0 - prior_active, prior_active;
    return m;
}

std::array<double, 2> xi_evidence(const Eigen::VectorXd& q_phi, const Eigen::VectorXd& miss,
                                  const Eigen::VectorXd& pd_active,
                                  const Eigen::VectorXd& pd_dormant) {
    const Eigen::Index n = q_phi.size();
    if (miss.size() != n || pd_active.size() != n || pd_dormant.size() != n)
        throw DomainError("xi_evidence: per-path inputs must align");
    std::array<double, 2> xi{0.0, 0.0};
    for (int s = 0; s < 2; ++s) {
        double acc = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) {
            const double pd = clamp_pd(s == 1 ? pd_active[t] : pd_dormant[t]);
            const double m = std::clamp(miss[t], 0.0, 1.0);
            acc += q_phi[t] * ((1.0 - m) * std::log(pd) + m * std::log(1.0 - pd));
        }
        xi[static_cast<std::size_t>(s)] = acc;
    }
    return xi;
}

Eigen::Vector2d evidence_b(const std::array<double, 2>& xi, EvidenceForm form) {
    Eigen::Vector2d b;
    if (form == EvidenceForm::ActiveOnly) {
        b[0] = 1.0;
        b[1] = std::exp(xi[1]);
    } else {
        b[0] = std::exp(xi[0]);
        b[1] = std::exp(xi[1]);
    }
    return b;
}

Eigen::Vector2d detection_evidence(const std::vector<bool>& detected,
                                   const Eigen::VectorXd& pd_active,
                                   const Eigen::VectorXd& pd_dormant) {
    if (static_cast<Eigen::Index>(detected.size()) != pd_active.size() ||
        pd_active.size() != pd_dormant.size())
        throw DomainError("detection_evidence: per-path inputs must align");
    Eigen::Vector2d b(1.0, 1.0);
    for (std::size_t t = 0; t < detected.size(); ++t) {
        const Eigen::Index ti = static_cast<Eigen::Index>(t);
        const double pa = clamp_pd(pd_active[ti]);
        const double pdv = clamp_pd(pd_dormant[ti]);
        b[0] *= detected[t] ? pdv : 1.0 - pdv;
        b[1] *= detected[t] ? pa : 1.0 - pa;
    }
    return b;
}

std::vector<Eigen::Vector2d> forward_backward(const std::vector<Eigen::Vector2d>& b,
                                              const MetaModel& model) {
    const std::size_t K = b.size();
    if (K == 0) throw DomainError("forward_backward: empty evidence");
    std::vector<Eigen::Vector2d> alpha(K), beta(K), q(K);

    Eigen::Vector2d a = model.prior.cwiseProduct(b[0]);
    double norm = a.sum();
    if (norm <= 0.0) throw DomainError("forward_backward: zero forward mass");
    alpha[0] = a / norm;
    for (std::size_t k = 1; k < K; ++k) {
        a = (model.T * alpha[k - 1]).cwiseProduct(b[k]);
        norm = a.sum();
        if (norm <= 0.0) throw DomainError("forward_backward: zero forward mass");
        alpha[k] = a / norm;
    }

    beta[K - 1] = Eigen::Vector2d::Ones();
    for (std::size_t k = K - 1; k-- > 0;) {
        Eigen::Vector2d bb = model.T.transpose() * (b[k + 1].cwiseProduct(beta[k + 1]));
        const double s = bb.sum();
        if (s <= 0.0) throw DomainError("forward_backward: zero backward mass");
        beta[k] = bb / s;
    }

    for (std::size_t k = 0; k < K; ++k) {
        Eigen::Vector2d post = alpha[k].cwiseProduct(beta[k]);
        q[k] = post / post.sum();
    }
    return q;
}

TrackDecision decide_track(const std::vector<Eigen::Vector2d>& q, double delta_b,
                           double delta_m) {
    // Three-phase hysteresis. A track initiates when the posterior first
    // reaches delta_b and stays in the initiation phase while it holds that
    // level. Once the posterior attains the survival target delta_m the
    // maintenance phase begins, and the first downward crossing of delta_m
    // terminates the track for good. Falling below delta_b before ever
    // reaching delta_m also terminates.
    TrackDecision d;
    d.active.assign(q.size(), 0);
    enum class Phase { Pre, Init, Maint } phase = Phase::Pre;
    for (std::size_t k = 0; k < q.size(); ++k) {
        const double p = q[k][1];
        if (phase == Phase::Pre) {
            if (p < delta_b) continue;
            phase = Phase::Init;
            d.confirmed = true;
            d.first_active = static_cast<int>(k);
        } else if (phase == Phase::Init) {
            if (p < delta_b) break;
        } else if (p < delta_m) {
            break; // terminated from this scan on
        }
        if (p >= delta_m) phase = Phase::Maint;
        d.active[k] = 1;
        d.last_active = static_cast<int>(k);
    }
    return d;
}

} // namespace jdtvb::existence
