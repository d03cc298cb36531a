#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "jdtvb/sim.hpp"
#include "jdtvb/tracker.hpp"

namespace jdtvb::metrics {

// A confirmed track reduced to its declared-active window of fused states.
struct EstTrack {
    int id = -1;
    int first_k = 1; // 1-based, inclusive
    int last_k = 0;
    std::vector<Eigen::Vector4d> x;

    bool active_at(int k) const { return k >= first_k && k <= last_k; }
    const Eigen::Vector4d& at(int k) const {
        return x[static_cast<std::size_t>(k - first_k)];
    }
    int length() const { return last_k - first_k + 1; }
};

std::vector<EstTrack> extract_tracks(const VbState& state);
std::vector<EstTrack> extract_tracks(const std::vector<CandidateSnapshot>& snap);

struct MatchOptions {
    double gate_g = 20.0;      // km of ground range
    double gate_theta = 0.010; // rad of bearing
};

struct MatchResult {
    std::vector<int> truth_of_est; // est index -> truth index, -1 when false track
    std::vector<int> est_of_truth; // truth index -> est index, -1 when missed
};

MatchResult match_tracks(const std::vector<TruthTrack>& truth,
                         const std::vector<EstTrack>& est, const MatchOptions& opts = {});

struct MetricReport {
    double tdsr = 0.0;
    double atlr = 0.0;
    double anft = 0.0;
    double aftl = 0.0;
    std::optional<double> rmse_r_km;
    std::optional<double> rmse_b_mrad;
    double acc_seconds = 0.0;
    int n_truth = 0;
    int n_confirmed = 0;
    int n_matched = 0;
    int n_false = 0;
    int n_matched_scans = 0;
};

MetricReport compute_metrics(const std::vector<TruthTrack>& truth,
                             const std::vector<EstTrack>& est, double tracker_seconds,
                             const MatchOptions& opts = {});

struct RunRecord {
    std::uint64_t seed = 0;
    bool ok = false;
    MetricReport report;
    int iterations = 0;
    bool converged = false;
};

struct MonteCarloResult {
    MetricReport aggregate; // field-wise mean over successful runs
    std::vector<RunRecord> runs;
    int n_failed = 0;
};

MetricReport aggregate_mean(const std::vector<RunRecord>& runs);

MonteCarloResult run_monte_carlo(const ScenarioConfig& scenario, const VbConfig& cfg,
                                 int n_runs, std::uint64_t seed0,
                                 const MatchOptions& opts = {}, int threads = 1);

} // namespace jdtvb::metrics
