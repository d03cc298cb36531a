#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "jdtvb/metrics.hpp"
#include "jdtvb/sim.hpp"
#include "jdtvb/tracker.hpp"

namespace jdtvb::io {

struct LoadedConfig {
    ScenarioConfig scenario;
    VbConfig tracker;
};

LoadedConfig load_config(const std::string& path);
LoadedConfig parse_config(const std::string& text);
std::string serialize_config(const LoadedConfig& cfg);
void save_config(const std::string& path, const LoadedConfig& cfg);

// FNV-1a over the canonical serialized form.
std::uint64_t config_hash(const LoadedConfig& cfg);

void write_scans_csv(const std::string& path, const std::vector<ScanData>& scans);
std::vector<ScanData> read_scans_csv(const std::string& path);

void write_truth_csv(const std::string& path, const std::vector<TruthTrack>& truth);
std::vector<TruthTrack> read_truth_csv(const std::string& path);

void write_tracks_csv(const std::string& path, const VbState& state,
                      const std::vector<std::string>& path_labels);
std::vector<metrics::EstTrack> read_est_tracks_csv(const std::string& path);

void write_existence_csv(const std::string& path, const VbState& state);

void write_metrics_json(const std::string& path, const metrics::MonteCarloResult& mc,
                        const metrics::MatchOptions& opts);
void write_metrics_json(const std::string& path, const metrics::MetricReport& report,
                        const metrics::MatchOptions& opts);

struct RunManifest {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    int iterations = 0;
    bool converged = false;
    std::vector<IterationStats> history;
    double init_ms = 0.0;
    double total_ms = 0.0;
    int n_candidates = 0;
    int n_confirmed = 0;
};

void write_manifest_json(const std::string& path, const RunManifest& m);

} // namespace jdtvb::io
