#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "jdtvb/assoc.hpp"
#include "jdtvb/existence.hpp"
#include "jdtvb/sim.hpp"
#include "jdtvb/smoothing.hpp"

namespace jdtvb {

/// Tracker configuration. Defaults correspond to the reference operating
/// point; the scenario file can override any of them.
struct VbConfig {
    assoc::LbpOptions lbp;
    smoothing::UtParams ut;
    int max_iterations = 20;  // outer coordination rounds
    double tol = 1e-5;        // convergence threshold on normalized fused means
    double gate_prob = 0.971; // chi-square gate probability, 3 dof
    double delta_b = 0.6;     // confirmation threshold
    double delta_m = 0.85;    // maintenance threshold
    double delta_s = 0.6;     // seed survival threshold
    double prior_active = 0.3;
    double stay_prob = 0.9;
    double p_d_dormant = 0.05;
    existence::EvidenceForm evidence_form = existence::EvidenceForm::ActiveOnly;
    Eigen::Vector3d init_gates = Eigen::Vector3d(85.0, 0.007, 0.04); // seed clustering radii
    double init_consistency_gate = 25.0; // per-pair back-projection distance gate
    double init_theta_rate_sigma = 5e-4; // prior bearing rate std for new seeds
    int init_prune_patience = 3;         // consecutive sub-threshold scans before pruning
    double init_hard_floor = 0.05;       // immediate prune level
    double init_dedup_dist = 1.0;        // normalized duplicate-seed distance
    int threads = 1;                     // worker threads, 0 = hardware concurrency
    bool collect_history = false;        // keep per-iteration snapshots
};

/// Per-path smoothed trajectory plus the association-facing predicted
/// measurement moments, covering global scans 1..K. Entries before the
/// candidate's birth scan are placeholders; ok marks usable scans.
struct PathTrack {
    std::vector<Eigen::Vector4d> x;
    std::vector<Eigen::Matrix4d> P;
    std::vector<Eigen::Vector3d> y_pred;
    std::vector<Eigen::Matrix3d> S;
    std::vector<std::uint8_t> ok;
};

/// One track candidate with its per-path tracks, fused track, path weights,
/// existence posterior and lifecycle decision.
struct Candidate {
    int id = 0;
    int birth_k = 1; // 1-based global scan of the first estimate
    Eigen::Vector4d x0 = Eigen::Vector4d::Zero();
    Eigen::Matrix4d P0 = Eigen::Matrix4d::Identity();
    std::vector<PathTrack> paths;
    std::vector<Eigen::Vector4d> x_fused;
    std::vector<Eigen::Matrix4d> P_fused;
    std::vector<Eigen::VectorXd> path_w;
    std::vector<Eigen::Vector2d> q_s;
    std::vector<std::uint8_t> s_hard;
    bool confirmed = false;
    bool failed = false;
    int first_active = -1; // 1-based global scans, -1 when never confirmed
    int last_active = -1;

    bool alive_at(int k) const { return !failed && k >= birth_k; }
};

struct IterationStats {
    double bound = 0.0;
    double max_delta = 0.0;
    double assoc_ms = 0.0;
    double detect_ms = 0.0;
    double smooth_ms = 0.0;
};

/// Lightweight per-iteration snapshot for diagnostics and convergence studies.
struct CandidateSnapshot {
    int id = 0;
    int birth_k = 1;
    bool confirmed = false;
    int first_active = -1;
    int last_active = -1;
    std::vector<Eigen::Vector4d> x_fused;
    std::vector<Eigen::Vector2d> q_s;
    std::vector<std::uint8_t> s_hard;
};

struct VbState {
    std::vector<Candidate> tracks;
    int iterations_run = 0;
    bool converged = false;
    std::vector<IterationStats> history;
};

struct TrackerResult {
    VbState state;
    double init_ms = 0.0;
    double total_ms = 0.0;
    std::vector<std::vector<CandidateSnapshot>> snapshots; // per iteration when requested
};

/// Track seeding: clusters measurements, back-projects path hypotheses,
/// extends seeds scan by scan with gated nearest-measurement updates and a
/// recursive existence filter, prunes hopeless seeds and deduplicates.
VbState initialize(const std::vector<ScanData>& scans, const ScenarioConfig& scenario,
                   const VbConfig& cfg);

/// One outer coordination round: association, detection, tracking, in that
/// order, followed by path fusion and the bound evaluation.
/// Returns true when the fused means moved less than cfg.tol.
bool vb_iterate(VbState& state, const std::vector<ScanData>& scans,
                const ScenarioConfig& scenario, const VbConfig& cfg);

/// Full pipeline: initialize, then iterate to convergence or the round limit.
TrackerResult run_tracker(const std::vector<ScanData>& scans, const ScenarioConfig& scenario,
                          const VbConfig& cfg);

} // namespace jdtvb
