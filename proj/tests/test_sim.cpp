#include "doctest.h"

#include <cmath>
#include <set>

#include "jdtvb/errors.hpp"
#include "jdtvb/sim.hpp"
#include "jdtvb/stats.hpp"

#include "checks.hpp"

using namespace jdtvb;

namespace {

ScenarioConfig small_scenario() {
    ScenarioConfig cfg;
    Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
    Q(0, 0) = 8e-6;
    Q(0, 1) = Q(1, 0) = 4e-6;
    Q(1, 1) = 1e-6;
    Q(2, 2) = 1e-6;
    Q(2, 3) = Q(3, 2) = 1e-8;
    Q(3, 3) = 1e-7;
    cfg.motion = cv_model(16.0, stats::nearest_psd(Q));
    cfg.geometry.d = 100.0;
    cfg.geometry.paths = standard_path_table(100.0, 260.0);
    Eigen::Vector3d rdiag(25.0, 1e-6, 9e-6);
    cfg.R.assign(4, Eigen::Matrix3d(rdiag.asDiagonal()));
    cfg.p_d.assign(4, 0.5);
    cfg.clutter_per_scan = 20.0;
    cfg.region = {1500.0, 2000.0, -0.524, 0.524, 0.428, 0.608};
    cfg.num_scans = 12;
    TargetSpec t1;
    t1.x0 << 1700.0, 0.1, 0.48, 8.7e-5;
    t1.birth_k = 1;
    t1.death_k = 10;
    TargetSpec t2;
    t2.x0 << 1900.0, -0.2, 0.55, 8.7e-5;
    t2.birth_k = 4;
    t2.death_k = 12;
    cfg.targets = {t1, t2};
    return cfg;
}

} // namespace

TEST_CASE("simulate is deterministic in the seed") {
    const ScenarioConfig cfg = small_scenario();
    const SimOutput a = simulate(cfg, 42);
    const SimOutput b = simulate(cfg, 42);
    const SimOutput c = simulate(cfg, 43);
    REQUIRE(a.scans.size() == b.scans.size());
    bool equal = true, differ = false;
    for (std::size_t k = 0; k < a.scans.size(); ++k) {
        equal = equal && a.scans[k].ys.size() == b.scans[k].ys.size();
        if (!equal) break;
        for (std::size_t j = 0; j < a.scans[k].ys.size(); ++j) {
            equal = equal && a.scans[k].ys[j] == b.scans[k].ys[j];
            equal = equal && a.scans[k].provenance[j].target == b.scans[k].provenance[j].target;
        }
        if (k < c.scans.size() && a.scans[k].ys.size() == c.scans[k].ys.size()) {
            for (std::size_t j = 0; j < a.scans[k].ys.size(); ++j)
                differ = differ || a.scans[k].ys[j] != c.scans[k].ys[j];
        } else {
            differ = true;
        }
    }
    CHECK(equal);
    CHECK(differ);
    for (std::size_t t = 0; t < a.truth.size(); ++t)
        for (std::size_t j = 0; j < a.truth[t].x.size(); ++j)
            CHECK(a.truth[t].x[j] == b.truth[t].x[j]);
}

TEST_CASE("truth windows and provenance are consistent") {
    const ScenarioConfig cfg = small_scenario();
    const SimOutput out = simulate(cfg, 7);
    REQUIRE(out.truth.size() == 2);
    CHECK(out.truth[0].birth_k == 1);
    CHECK(out.truth[0].death_k() == 10);
    CHECK(out.truth[1].birth_k == 4);
    CHECK(out.truth[1].death_k() == 12);

    for (const ScanData& scan : out.scans) {
        std::set<std::pair<int, int>> seen;
        for (const Provenance& p : scan.provenance) {
            if (p.target < 0) {
                CHECK(p.path == 0);
                continue;
            }
            CHECK(p.path >= 1);
            CHECK(p.path <= 4);
            // A target emits at most one return per path per scan.
            CHECK(seen.emplace(p.target, p.path).second);
            CHECK(out.truth[static_cast<std::size_t>(p.target)].alive_at(scan.k));
        }
    }
}

TEST_CASE("noise free truth follows the closed form") {
    ScenarioConfig cfg = small_scenario();
    cfg.process_noise = false;
    const SimOutput out = simulate(cfg, 3);
    const TruthTrack& t = out.truth[0];
    GroundState x = cfg.targets[0].x0;
    for (int k = t.birth_k; k <= t.death_k(); ++k) {
        CHECK((t.at(k) - x).norm() <= 1e-12);
        x = propagate(x, cfg.motion);
    }
}

TEST_CASE("clutter statistics") {
    ScenarioConfig cfg = small_scenario();
    cfg.targets.clear(); // clutter only
    cfg.num_scans = 400;
    const SimOutput out = simulate(cfg, 11);
    double count = 0.0;
    for (const ScanData& scan : out.scans) {
        for (std::size_t j = 0; j < scan.ys.size(); ++j) {
            CHECK(scan.provenance[j].target == -1);
            CHECK(cfg.region.contains(scan.ys[j]));
        }
        count += static_cast<double>(scan.ys.size());
    }
    const double mean = count / cfg.num_scans;
    // 5 sigma band around the Poisson mean of 20
    CHECK_ABS(mean, cfg.clutter_per_scan, 5.0 * std::sqrt(cfg.clutter_per_scan / cfg.num_scans));
}

TEST_CASE("detection rate approaches p_d") {
    ScenarioConfig cfg = small_scenario();
    cfg.clutter_per_scan = 0.0;
    cfg.num_scans = 30;
    cfg.targets.resize(1);
    cfg.targets[0].death_k = 30;
    int detections = 0, possible = 0;
    for (int seed = 0; seed < 40; ++seed) {
        const SimOutput out = simulate(cfg, static_cast<std::uint64_t>(seed));
        for (const ScanData& scan : out.scans) detections += static_cast<int>(scan.ys.size());
        possible += cfg.num_scans * 4;
    }
    const double rate = static_cast<double>(detections) / possible;
    CHECK_ABS(rate, 0.5, 5.0 * std::sqrt(0.25 / possible));
}

TEST_CASE("config validation") {
    ScenarioConfig cfg = small_scenario();
    cfg.num_scans = 0;
    CHECK_THROWS_AS(simulate(cfg, 1), ConfigError);

    cfg = small_scenario();
    cfg.targets[0].death_k = 99; // outside scan range
    CHECK_THROWS_AS(simulate(cfg, 1), ConfigError);

    cfg = small_scenario();
    cfg.R.pop_back();
    CHECK_THROWS_AS(simulate(cfg, 1), ConfigError);
}
