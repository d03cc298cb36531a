#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace jdtvb::existence {

/// Meta state index convention: 0 = dormant, 1 = active.
enum class EvidenceForm : std::uint8_t {
    ActiveOnly, // b(s) = exp(s * xi(s)), so b(0) = 1
    Symmetric,    // b(s) = exp(xi(s))
};

/// Two-state existence Markov chain. T(e, c) = p(s_k = e | s_{k-1} = c),
/// prior is the distribution of the initial meta state.
struct MetaModel {
    Eigen::Matrix2d T = Eigen::Matrix2d::Identity();
    Eigen::Vector2d prior = Eigen::Vector2d(0.5, 0.5);
};

MetaModel make_meta_model(double stay_prob, double prior_active);

/// Expected detection log evidence for one target and scan. q_phi holds the
/// path weights, miss the per-path missed detection probabilities E[a^{i,0}],
/// pd_active/pd_dormant the per-path detection probabilities under each meta
/// state. Returns xi(s) for s = 0 (dormant) and s = 1 (active).
std::array<double, 2> xi_evidence(const Eigen::VectorXd& q_phi, const Eigen::VectorXd& miss,
                                  const Eigen::VectorXd& pd_active,
                                  const Eigen::VectorXd& pd_dormant);

/// Per-scan evidence vector b(s) under the configured form.
Eigen::Vector2d evidence_b(const std::array<double, 2>& xi, EvidenceForm form);

/// Hard detection evidence from per-path detect flags, used while seeding
/// tracks before marginal association probabilities exist.
Eigen::Vector2d detection_evidence(const std::vector<bool>& detected,
                                   const Eigen::VectorXd& pd_active,
                                   const Eigen::VectorXd& pd_dormant);

/// Scaled forward-backward smoothing over the meta chain. b[k] is the
/// evidence at scan k. Returns per-scan posteriors q(s_k).
std::vector<Eigen::Vector2d> forward_backward(const std::vector<Eigen::Vector2d>& b,
                                              const MetaModel& model);

/// Hard lifecycle decisions from existence posteriors. A track confirms when
/// q(active) first reaches delta_b, stays alive while q(active) >= delta_m,
/// and terminates for good on the first dip below delta_m after confirmation.
struct TrackDecision {
    std::vector<std::uint8_t> active; // per scan, same length as input
    bool confirmed = false;
    int first_active = -1; // local scan index, -1 when never confirmed
    int last_active = -1;
};

TrackDecision decide_track(const std::vector<Eigen::Vector2d>& q, double delta_b,
                           double delta_m);

} // namespace jdtvb::existence
