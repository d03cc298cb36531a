#include "jdtvb/sim.hpp"

#include "jdtvb/errors.hpp"
#include "jdtvb/rng.hpp"
#include "jdtvb/stats.hpp"

namespace jdtvb {

namespace {

enum StreamId : std::uint64_t {
    kStreamProcess = 1,
    kStreamDetection = 2,
    kStreamMeasurement = 3,
    kStreamClutter = 4,
};

Eigen::Vector4d draw4(rng::Stream& st) {
    Eigen::Vector4d z;
    for (int i = 0; i < 4; ++i) z[i] = st.normal();
    return z;
}

Eigen::Vector3d draw3(rng::Stream& st) {
    Eigen::Vector3d z;
    for (int i = 0; i < 3; ++i) z[i] = st.normal();
    return z;
}

} // namespace

SimOutput simulate(const ScenarioConfig& config, std::uint64_t seed) {
    if (config.num_scans <= 0) throw ConfigError("simulate: num_scans must be positive");
    if (config.geometry.paths.empty()) throw ConfigError("simulate: path table is empty");
    if (config.R.size() != config.geometry.paths.size() ||
        config.p_d.size() != config.geometry.paths.size())
        throw ConfigError("simulate: R and p_d must match the path table size");

    rng::Stream st_proc(seed, kStreamProcess);
    rng::Stream st_det(seed, kStreamDetection);
    rng::Stream st_meas(seed, kStreamMeasurement);
    rng::Stream st_clut(seed, kStreamClutter);

    const std::size_t n_paths = config.geometry.paths.size();
    const Eigen::Matrix4d Q_sqrt = stats::psd_sqrt(config.motion.Q);
    std::vector<Eigen::Matrix3d> R_sqrt(n_paths);
    for (std::size_t t = 0; t < n_paths; ++t) R_sqrt[t] = stats::psd_sqrt(config.R[t]);

    SimOutput out;
    out.truth.reserve(config.targets.size());
    for (std::size_t i = 0; i < config.targets.size(); ++i) {
        const TargetSpec& spec = config.targets[i];
        if (spec.birth_k < 1 || spec.death_k > config.num_scans || spec.death_k < spec.birth_k)
            throw ConfigError("simulate: target lifetime outside scan range");
        TruthTrack tt;
        tt.id = static_cast<int>(i);
        tt.birth_k = spec.birth_k;
        GroundState x = spec.x0;
        tt.x.push_back(x);
        for (int k = spec.birth_k + 1; k <= spec.death_k; ++k) {
            x = propagate(x, config.motion);
            if (config.process_noise) x += Q_sqrt * draw4(st_proc);
            tt.x.push_back(x);
        }
        out.truth.push_back(std::move(tt));
    }

    out.scans.resize(static_cast<std::size_t>(config.num_scans));
    for (int k = 1; k <= config.num_scans; ++k) {
        ScanData& scan = out.scans[static_cast<std::size_t>(k - 1)];
        scan.k = k;
        for (const TruthTrack& tt : out.truth) {
            if (!tt.alive_at(k)) continue;
            const GroundState& x = tt.at(k);
            for (std::size_t t = 0; t < n_paths; ++t) {
                if (!st_det.bernoulli(config.p_d[t])) continue;
                SlantMeasurement y = slant_measure(x, config.geometry.paths[t], config.geometry.d);
                y += R_sqrt[t] * draw3(st_meas);
                scan.ys.push_back(y);
                scan.provenance.push_back({tt.id, static_cast<int>(t) + 1});
            }
        }
        const int n_clutter = st_clut.poisson(config.clutter_per_scan);
        for (int c = 0; c < n_clutter; ++c) {
            SlantMeasurement y;
            y[0] = st_clut.uniform(config.region.r_min, config.region.r_max);
            y[1] = st_clut.uniform(config.region.r_rate_min, config.region.r_rate_max);
            y[2] = st_clut.uniform(config.region.zeta_min, config.region.zeta_max);
            scan.ys.push_back(y);
            scan.provenance.push_back({-1, 0});
        }
    }
    return out;
}

} // namespace jdtvb
