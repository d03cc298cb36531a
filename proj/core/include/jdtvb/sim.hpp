#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "jdtvb/geometry.hpp"

namespace jdtvb {

/// Surveillance region in slant coordinates; clutter support and display bounds.
struct Region {
    double r_min = 0.0, r_max = 0.0;
    double r_rate_min = 0.0, r_rate_max = 0.0;
    double zeta_min = 0.0, zeta_max = 0.0;

    double volume() const {
        return (r_max - r_min) * (r_rate_max - r_rate_min) * (zeta_max - zeta_min);
    }
    bool contains(const SlantMeasurement& y) const {
        return y[0] >= r_min && y[0] <= r_max && y[1] >= r_rate_min && y[1] <= r_rate_max &&
               y[2] >= zeta_min && y[2] <= zeta_max;
    }
};

/// One simulated target: initial state plus lifetime [birth_k, death_k],
/// 1-based inclusive scan indices.
struct TargetSpec {
    GroundState x0 = GroundState::Zero();
    int birth_k = 1;
    int death_k = 1;
};

/// Full scenario description: dynamics, sensor, noise, clutter, targets.
struct ScenarioConfig {
    MotionModel motion;
    SensorGeometry geometry;
    std::vector<Eigen::Matrix3d> R; // measurement noise covariance per path
    std::vector<double> p_d;        // active-target detection probability per path
    double clutter_per_scan = 0.0;  // expected false alarms per scan
    Region region;
    int num_scans = 0;
    std::vector<TargetSpec> targets;
    bool process_noise = true;

    /// Spatial clutter density: expected count over region volume.
    double clutter_density() const { return clutter_per_scan / region.volume(); }
    /// Density of a single uniformly distributed clutter point.
    double clutter_pdf() const { return 1.0 / region.volume(); }
};

/// Where a simulated measurement came from. target < 0 means clutter;
/// path is 1-based into the path table, 0 for clutter.
struct Provenance {
    int target = -1;
    int path = 0;
};

/// All measurements of one scan, in slant coordinates.
struct ScanData {
    int k = 0; // 1-based scan index
    std::vector<SlantMeasurement> ys;
    std::vector<Provenance> provenance;
};

/// Ground truth trajectory of one target over its lifetime.
struct TruthTrack {
    int id = 0;
    int birth_k = 1;
    std::vector<GroundState> x; // x[j] is the state at scan birth_k + j
    int death_k() const { return birth_k + static_cast<int>(x.size()) - 1; }
    bool alive_at(int k) const { return k >= birth_k && k <= death_k(); }
    const GroundState& at(int k) const { return x[static_cast<std::size_t>(k - birth_k)]; }
};

struct SimOutput {
    std::vector<TruthTrack> truth;
    std::vector<ScanData> scans;
};

/// Generate truth and measurements for a scenario. Deterministic in (config, seed).
SimOutput simulate(const ScenarioConfig& config, std::uint64_t seed);

} // namespace jdtvb
