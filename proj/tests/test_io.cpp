#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "checks.hpp"
#include "doctest.h"
#include "json.hpp"

#include "jdtvb/errors.hpp"
#include "jdtvb/io.hpp"
#include "jdtvb/metrics.hpp"
#include "jdtvb/tracker.hpp"

using namespace jdtvb;

namespace {

std::string tmp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "jdtvb_io_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

const char* kConfigText = R"json({
  "scenario": {
    "scan_period": 16.0,
    "num_scans": 10,
    "process_noise": [[8e-6, 4e-6, 0, 0], [4e-6, 1e-6, 0, 0],
                      [0, 0, 1e-6, 1e-8], [0, 0, 1e-8, 1e-7]],
    "geometry": {"d": 100.0, "h_E": 100.0, "h_F": 260.0},
    "measurement_noise_diag": [25.0, 1e-6, 9e-6],
    "detection_prob": 0.5,
    "clutter_per_scan": 100.0,
    "region": {"r": [1500.0, 2000.0], "r_rate": [-0.524, 0.524], "zeta": [0.428, 0.608]},
    "targets": [
      {"x0": [1700.0, 0.1, 0.48, 8.7e-5], "birth": 1, "death": 10},
      {"x0": [1950.0, -0.25, 0.55, 8.7e-5], "birth": 3, "death": 8}
    ],
    "process_noise_enabled": true
  },
  "tracker": {
    "gate_prob": 0.971,
    "vb_tol": 1e-5,
    "max_iterations": 20,
    "confirm": 0.6,
    "maintain": 0.85,
    "evidence_form": "symmetric",
    "init": {"gates": [85.0, 0.007, 0.04]},
    "lbp": {"max_iters": 200, "tol": 1e-8, "damping": 0.3},
    "threads": 2
  }
})json";

ScenarioConfig tiny_scene() {
    ScenarioConfig sc;
    Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
    Q.diagonal() << 8e-6, 1e-6, 1e-8, 1e-9;
    sc.motion = cv_model(16.0, Q);
    sc.geometry.d = 100.0;
    sc.geometry.paths = standard_path_table(100.0, 260.0);
    sc.R.assign(4, Eigen::Matrix3d(Eigen::Vector3d(25.0, 1e-6, 9e-6).asDiagonal()));
    sc.p_d.assign(4, 1.0);
    sc.clutter_per_scan = 5.0;
    sc.region = Region{1500.0, 2000.0, -0.524, 0.524, 0.428, 0.608};
    sc.num_scans = 10;
    sc.targets = {{GroundState(1700.0, 0.1, 0.48, 8.7e-5), 1, 10},
                  {GroundState(1950.0, -0.25, 0.55, 8.7e-5), 1, 10}};
    sc.process_noise = false;
    return sc;
}

} // namespace

TEST_CASE("config parse picks up every field") {
    const io::LoadedConfig cfg = io::parse_config(kConfigText);
    CHECK(cfg.scenario.motion.T_s == 16.0);
    CHECK(cfg.scenario.num_scans == 10);
    CHECK(cfg.scenario.geometry.d == 100.0);
    REQUIRE(cfg.scenario.geometry.paths.size() == 4);
    CHECK(cfg.scenario.geometry.paths[0].label == "EE");
    REQUIRE(cfg.scenario.R.size() == 4);
    CHECK(cfg.scenario.R[2](0, 0) == 25.0);
    CHECK(cfg.scenario.R[2](2, 2) == 9e-6);
    REQUIRE(cfg.scenario.p_d.size() == 4);
    CHECK(cfg.scenario.p_d[3] == 0.5);
    CHECK(cfg.scenario.clutter_per_scan == 100.0);
    CHECK(cfg.scenario.region.r_min == 1500.0);
    CHECK(cfg.scenario.region.zeta_max == 0.608);
    REQUIRE(cfg.scenario.targets.size() == 2);
    CHECK(cfg.scenario.targets[1].birth_k == 3);
    CHECK(cfg.scenario.targets[1].death_k == 8);
    CHECK(cfg.scenario.targets[1].x0[0] == 1950.0);
    CHECK(cfg.scenario.process_noise);

    CHECK(cfg.tracker.gate_prob == 0.971);
    CHECK(cfg.tracker.tol == 1e-5);
    CHECK(cfg.tracker.delta_b == 0.6);
    CHECK(cfg.tracker.delta_m == 0.85);
    CHECK(cfg.tracker.evidence_form == existence::EvidenceForm::Symmetric);
    CHECK(cfg.tracker.init_gates[0] == 85.0);
    CHECK(cfg.tracker.lbp.max_iters == 200);
    CHECK(cfg.tracker.lbp.damping == 0.3);
    CHECK(cfg.tracker.threads == 2);
    // defaults fill the rest
    CHECK(cfg.tracker.p_d_dormant == 0.05);
    CHECK(cfg.tracker.ut.beta == 2.0);

    // the stored process noise is the nearest PSD projection
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(cfg.scenario.motion.Q);
    CHECK(es.eigenvalues().minCoeff() >= -1e-18);
}

TEST_CASE("config serialization round trips") {
    const io::LoadedConfig a = io::parse_config(kConfigText);
    const io::LoadedConfig b = io::parse_config(io::serialize_config(a));

    CHECK(b.scenario.motion.T_s == a.scenario.motion.T_s);
    CHECK(b.scenario.num_scans == a.scenario.num_scans);
    CHECK((b.scenario.motion.Q - a.scenario.motion.Q).cwiseAbs().maxCoeff() < 1e-18);
    CHECK(b.scenario.clutter_per_scan == a.scenario.clutter_per_scan);
    CHECK(b.scenario.region.r_rate_min == a.scenario.region.r_rate_min);
    REQUIRE(b.scenario.targets.size() == a.scenario.targets.size());
    for (std::size_t i = 0; i < a.scenario.targets.size(); ++i) {
        CHECK((b.scenario.targets[i].x0 - a.scenario.targets[i].x0).cwiseAbs().maxCoeff() == 0.0);
        CHECK(b.scenario.targets[i].birth_k == a.scenario.targets[i].birth_k);
        CHECK(b.scenario.targets[i].death_k == a.scenario.targets[i].death_k);
    }
    CHECK(b.tracker.gate_prob == a.tracker.gate_prob);
    CHECK(b.tracker.evidence_form == a.tracker.evidence_form);
    CHECK((b.tracker.init_gates - a.tracker.init_gates).cwiseAbs().maxCoeff() == 0.0);
    CHECK(b.tracker.lbp.tol == a.tracker.lbp.tol);
    CHECK(b.tracker.threads == a.tracker.threads);

    // canonical form is stable from the second generation on
    const std::string s1 = io::serialize_config(b);
    const io::LoadedConfig c = io::parse_config(s1);
    CHECK((c.scenario.motion.Q - b.scenario.motion.Q).cwiseAbs().maxCoeff() < 1e-18);

    CHECK(io::config_hash(a) == io::config_hash(a));
    io::LoadedConfig tweaked = a;
    tweaked.tracker.gate_prob = 0.99;
    CHECK(io::config_hash(tweaked) != io::config_hash(a));

    const std::string path = tmp_path("config.json");
    io::save_config(path, a);
    const io::LoadedConfig d = io::load_config(path);
    CHECK(io::config_hash(d) == io::config_hash(b));
}

TEST_CASE("config validation rejects bad input") {
    CHECK_THROWS_AS(io::parse_config("{ not json"), ParseError);
    CHECK_THROWS_AS(io::parse_config("{}"), ParseError);
    CHECK_THROWS_AS(io::parse_config(R"({"scenario": {}})"), ParseError);

    nlohmann::json j = nlohmann::json::parse(kConfigText);
    {
        nlohmann::json bad = j;
        bad["tracker"]["evidence_form"] = "banana";
        CHECK_THROWS_AS(io::parse_config(bad.dump()), ParseError);
    }
    {
        nlohmann::json bad = j;
        bad["scenario"]["measurement_noise_diag"] = {25.0, 1e-6};
        CHECK_THROWS_AS(io::parse_config(bad.dump()), ParseError);
    }
    {
        nlohmann::json bad = j;
        bad["scenario"]["process_noise"].erase(3);
        CHECK_THROWS_AS(io::parse_config(bad.dump()), ParseError);
    }
    {
        nlohmann::json bad = j;
        bad["scenario"]["targets"][0]["x0"] = {1700.0, 0.1, 0.48};
        CHECK_THROWS_AS(io::parse_config(bad.dump()), ParseError);
    }
    {
        nlohmann::json bad = j;
        bad["tracker"]["init"]["gates"] = {85.0, 0.007};
        CHECK_THROWS_AS(io::parse_config(bad.dump()), ParseError);
    }
    {
        nlohmann::json bad = j;
        bad["scenario"].erase("region");
        CHECK_THROWS_AS(io::parse_config(bad.dump()), ParseError);
    }
}

TEST_CASE("scan csv round trips bitwise") {
    const ScenarioConfig sc = tiny_scene();
    const SimOutput sim = simulate(sc, 21);
    const std::string path = tmp_path("scans.csv");
    io::write_scans_csv(path, sim.scans);
    const std::vector<ScanData> back = io::read_scans_csv(path);

    REQUIRE(back.size() == sim.scans.size());
    for (std::size_t s = 0; s < back.size(); ++s) {
        CHECK(back[s].k == sim.scans[s].k);
        REQUIRE(back[s].ys.size() == sim.scans[s].ys.size());
        for (std::size_t m = 0; m < back[s].ys.size(); ++m) {
            for (int d = 0; d < 3; ++d) CHECK(back[s].ys[m][d] == sim.scans[s].ys[m][d]);
            CHECK(back[s].provenance[m].target == sim.scans[s].provenance[m].target);
            CHECK(back[s].provenance[m].path == sim.scans[s].provenance[m].path);
        }
    }
}

TEST_CASE("scan csv keeps empty scans") {
    std::vector<ScanData> scans(3);
    for (int k = 1; k <= 3; ++k) scans[static_cast<std::size_t>(k - 1)].k = k;
    scans[0].ys.push_back(SlantMeasurement(1711.0, 0.1, 0.47));
    scans[0].provenance.push_back(Provenance{0, 1});
    scans[2].ys.push_back(SlantMeasurement(1800.0, -0.2, 0.5));
    scans[2].provenance.push_back(Provenance{-1, 0});

    const std::string path = tmp_path("sparse_scans.csv");
    io::write_scans_csv(path, scans);
    const std::vector<ScanData> back = io::read_scans_csv(path);
    REQUIRE(back.size() == 3);
    CHECK(back[0].ys.size() == 1);
    CHECK(back[1].ys.empty());
    CHECK(back[1].k == 2);
    CHECK(back[2].provenance[0].target == -1);
    CHECK(back[2].provenance[0].path == 0);

    CHECK_THROWS_AS(io::read_scans_csv(tmp_path("missing.csv")), ParseError);
}

TEST_CASE("truth csv round trips bitwise") {
    const ScenarioConfig sc = tiny_scene();
    const SimOutput sim = simulate(sc, 22);
    const std::string path = tmp_path("truth.csv");
    io::write_truth_csv(path, sim.truth);
    const std::vector<TruthTrack> back = io::read_truth_csv(path);

    REQUIRE(back.size() == sim.truth.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].id == sim.truth[i].id);
        CHECK(back[i].birth_k == sim.truth[i].birth_k);
        REQUIRE(back[i].x.size() == sim.truth[i].x.size());
        for (std::size_t s = 0; s < back[i].x.size(); ++s)
            CHECK((back[i].x[s] - sim.truth[i].x[s]).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("track csv reproduces the in-memory metric report") {
    const ScenarioConfig sc = tiny_scene();
    const SimOutput sim = simulate(sc, 23);
    VbConfig cfg;
    cfg.evidence_form = existence::EvidenceForm::Symmetric;
    const TrackerResult res = run_tracker(sim.scans, sc, cfg);

    std::vector<std::string> labels;
    for (const auto& p : sc.geometry.paths) labels.push_back(p.label);
    const std::string path = tmp_path("tracks.csv");
    io::write_tracks_csv(path, res.state, labels);

    std::vector<metrics::EstTrack> mem = metrics::extract_tracks(res.state);
    std::vector<metrics::EstTrack> disk = io::read_est_tracks_csv(path);
    REQUIRE_FALSE(mem.empty());
    REQUIRE(mem.size() == disk.size());

    auto by_id = [](const metrics::EstTrack& a, const metrics::EstTrack& b) { return a.id < b.id; };
    std::sort(mem.begin(), mem.end(), by_id);
    std::sort(disk.begin(), disk.end(), by_id);
    for (std::size_t i = 0; i < mem.size(); ++i) {
        CHECK(disk[i].id == mem[i].id);
        CHECK(disk[i].first_k == mem[i].first_k);
        CHECK(disk[i].last_k == mem[i].last_k);
        REQUIRE(disk[i].x.size() == mem[i].x.size());
        for (std::size_t s = 0; s < mem[i].x.size(); ++s)
            CHECK((disk[i].x[s] - mem[i].x[s]).cwiseAbs().maxCoeff() == 0.0);
    }

    const metrics::MetricReport a = metrics::compute_metrics(sim.truth, mem, 0.0);
    const metrics::MetricReport b = metrics::compute_metrics(sim.truth, disk, 0.0);
    CHECK(a.tdsr == b.tdsr);
    CHECK(a.atlr == b.atlr);
    CHECK(a.anft == b.anft);
    CHECK(a.aftl == b.aftl);
    CHECK(a.n_matched_scans == b.n_matched_scans);
    REQUIRE(a.rmse_r_km.has_value() == b.rmse_r_km.has_value());
    if (a.rmse_r_km) {
        CHECK(*a.rmse_r_km == *b.rmse_r_km);
        CHECK(*a.rmse_b_mrad == *b.rmse_b_mrad);
    }
}

TEST_CASE("existence csv covers every candidate scan") {
    const ScenarioConfig sc = tiny_scene();
    const SimOutput sim = simulate(sc, 24);
    VbConfig cfg;
    cfg.evidence_form = existence::EvidenceForm::Symmetric;
    const TrackerResult res = run_tracker(sim.scans, sc, cfg);

    const std::string path = tmp_path("existence.csv");
    io::write_existence_csv(path, res.state);

    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "target,k,q,decision");
    std::size_t rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    std::size_t expect = 0;
    for (const auto& c : res.state.tracks)
        expect += static_cast<std::size_t>(static_cast<int>(c.q_s.size()) - c.birth_k + 1);
    CHECK(rows == expect);
}

TEST_CASE("metrics json carries the gate and null rmse") {
    metrics::RunRecord rec;
    rec.seed = 42;
    rec.ok = true;
    rec.report.tdsr = 0.5;
    rec.report.n_truth = 2;
    metrics::MonteCarloResult mc;
    mc.runs = {rec};
    mc.aggregate = metrics::aggregate_mean(mc.runs);

    const std::string path = tmp_path("metrics.json");
    io::write_metrics_json(path, mc, metrics::MatchOptions{});

    std::ifstream in(path);
    REQUIRE(in.good());
    const nlohmann::json j = nlohmann::json::parse(in);
    CHECK(j.at("match_gate").at("ground_range_km").get<double>() == 20.0);
    CHECK_ABS(j.at("match_gate").at("bearing_mrad").get<double>(), 10.0, 1e-12);
    CHECK(j.at("match_gate").at("rule").is_string());
    CHECK(j.at("aggregate").at("tdsr").get<double>() == 0.5);
    CHECK(j.at("aggregate").at("rmse_r_km").is_null());
    REQUIRE(j.at("runs").size() == 1);
    CHECK(j.at("runs").at(0).at("seed").get<std::uint64_t>() == 42);
    CHECK(j.at("runs").at(0).at("ok").get<bool>());
}

TEST_CASE("manifest json is complete") {
    io::RunManifest m;
    m.config_hash = 0xdeadbeef01234567ULL;
    m.seed = 7;
    m.iterations = 3;
    m.converged = true;
    m.history.resize(3);
    m.history[1].bound = -12.5;
    m.init_ms = 1.25;
    m.total_ms = 99.0;
    m.n_candidates = 9;
    m.n_confirmed = 6;

    const std::string path = tmp_path("manifest.json");
    io::write_manifest_json(path, m);

    std::ifstream in(path);
    REQUIRE(in.good());
    const nlohmann::json j = nlohmann::json::parse(in);
    CHECK(j.at("config_hash").get<std::string>() == "deadbeef01234567");
    CHECK(j.at("seed").get<std::uint64_t>() == 7);
    CHECK(j.at("iterations").get<int>() == 3);
    CHECK(j.at("converged").get<bool>());
    REQUIRE(j.at("per_iteration").size() == 3);
    CHECK(j.at("per_iteration").at(1).at("bound").get<double>() == -12.5);
    CHECK(j.at("n_candidates").get<int>() == 9);
}
