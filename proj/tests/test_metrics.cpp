#include <algorithm>
#include <cmath>
#include <vector>

#include "checks.hpp"
#include "doctest.h"
#include "jdtvb/errors.hpp"
#include "jdtvb/metrics.hpp"

using namespace jdtvb;
using namespace jdtvb::metrics;

namespace {

TruthTrack make_truth(int id, int birth, int death, double g0, double vg, double theta) {
    TruthTrack t;
    t.id = id;
    t.birth_k = birth;
    for (int k = birth; k <= death; ++k)
        t.x.push_back(GroundState(g0 + vg * (k - birth), vg / 16.0, theta, 0.0));
    return t;
}

EstTrack make_est(int id, int first, int last, double g0, double vg, double theta) {
    EstTrack e;
    e.id = id;
    e.first_k = first;
    e.last_k = last;
    for (int k = first; k <= last; ++k)
        e.x.push_back(GroundState(g0 + vg * (k - first), vg / 16.0, theta, 0.0));
    return e;
}

EstTrack shift_errors(const EstTrack& base, const std::vector<double>& dg,
                      const std::vector<double>& dtheta) {
    EstTrack e = base;
    for (std::size_t i = 0; i < e.x.size(); ++i) {
        e.x[i][0] += dg[i % dg.size()];
        e.x[i][2] += dtheta[i % dtheta.size()];
    }
    return e;
}

} // namespace

TEST_CASE("perfect tracks score perfectly") {
    std::vector<TruthTrack> truth = {make_truth(0, 1, 20, 1700.0, 1.6, 0.48),
                                     make_truth(1, 5, 25, 1900.0, -2.0, 0.55)};
    std::vector<EstTrack> est = {make_est(0, 1, 20, 1700.0, 1.6, 0.48),
                                 make_est(1, 5, 25, 1900.0, -2.0, 0.55)};
    const MetricReport rep = compute_metrics(truth, est, 1.5);
    CHECK(rep.tdsr == 1.0);
    CHECK(rep.atlr == 1.0);
    CHECK(rep.anft == 0.0);
    CHECK(rep.aftl == 0.0);
    REQUIRE(rep.rmse_r_km.has_value());
    REQUIRE(rep.rmse_b_mrad.has_value());
    CHECK(*rep.rmse_r_km == 0.0);
    CHECK(*rep.rmse_b_mrad == 0.0);
    CHECK(rep.acc_seconds == 1.5);
    CHECK(rep.n_matched == 2);
    CHECK(rep.n_matched_scans == 20 + 21);
}

TEST_CASE("offset beyond the gate is a false track") {
    std::vector<TruthTrack> truth = {make_truth(0, 1, 20, 1700.0, 1.6, 0.48)};
    // 30 km of constant range error: normalized distance 1.5, no match
    std::vector<EstTrack> est = {make_est(0, 1, 20, 1730.0, 1.6, 0.48)};
    const MetricReport rep = compute_metrics(truth, est, 0.0);
    CHECK(rep.tdsr == 0.0);
    CHECK(rep.n_matched == 0);
    CHECK(rep.anft == 1.0);
    CHECK(rep.aftl == 20.0);
    CHECK_FALSE(rep.rmse_r_km.has_value());
    CHECK_FALSE(rep.rmse_b_mrad.has_value());
}

TEST_CASE("disjoint windows never match") {
    std::vector<TruthTrack> truth = {make_truth(0, 1, 5, 1700.0, 0.0, 0.48)};
    std::vector<EstTrack> est = {make_est(0, 10, 12, 1700.0, 0.0, 0.48)};
    const MetricReport rep = compute_metrics(truth, est, 0.0);
    CHECK(rep.n_matched == 0);
    CHECK(rep.anft == 1.0);
}

TEST_CASE("latency shows up in the track length ratio") {
    std::vector<TruthTrack> truth = {make_truth(0, 1, 20, 1700.0, 1.6, 0.48)};
    std::vector<EstTrack> est = {make_est(0, 3, 20, 1700.0 + 2 * 1.6, 1.6, 0.48)};
    const MetricReport rep = compute_metrics(truth, est, 0.0);
    CHECK(rep.tdsr == 1.0);
    CHECK_ABS(rep.atlr, 18.0 / 20.0, 1e-12);
}

TEST_CASE("rmse arithmetic over matched scans") {
    std::vector<TruthTrack> truth = {make_truth(0, 1, 4, 1700.0, 1.6, 0.48)};
    const EstTrack base = make_est(0, 1, 4, 1700.0, 1.6, 0.48);
    std::vector<EstTrack> est = {shift_errors(base, {1.0, 2.0, 2.0, 3.0}, {2e-3})};
    const MetricReport rep = compute_metrics(truth, est, 0.0);
    CHECK(rep.n_matched == 1);
    CHECK(rep.n_matched_scans == 4);
    REQUIRE(rep.rmse_r_km.has_value());
    REQUIRE(rep.rmse_b_mrad.has_value());
    CHECK_ABS(*rep.rmse_r_km, std::sqrt((1.0 + 4.0 + 4.0 + 9.0) / 4.0), 1e-12);
    CHECK_ABS(*rep.rmse_b_mrad, 2.0, 1e-9);
}

TEST_CASE("matching is greedy on distance and one-to-one") {
    std::vector<TruthTrack> truth = {make_truth(0, 1, 20, 1700.0, 0.0, 0.48)};
    std::vector<EstTrack> est = {make_est(7, 1, 20, 1706.0, 0.0, 0.48),
                                 make_est(9, 1, 20, 1702.0, 0.0, 0.48)};
    const MatchResult m = match_tracks(truth, est);
    CHECK(m.est_of_truth[0] == 1);
    CHECK(m.truth_of_est[0] == -1);
    CHECK(m.truth_of_est[1] == 0);

    const MetricReport rep = compute_metrics(truth, est, 0.0);
    CHECK(rep.n_matched == 1);
    CHECK(rep.anft == 1.0);
    CHECK(rep.n_matched + rep.n_false == rep.n_confirmed);
    REQUIRE(rep.rmse_r_km.has_value());
    CHECK_ABS(*rep.rmse_r_km, 2.0, 1e-12);
}

TEST_CASE("estimate order does not change the report") {
    std::vector<TruthTrack> truth = {make_truth(0, 1, 20, 1700.0, 1.6, 0.48),
                                     make_truth(1, 5, 25, 1900.0, -2.0, 0.55)};
    std::vector<EstTrack> est = {make_est(0, 1, 20, 1701.0, 1.6, 0.48),
                                 make_est(1, 5, 25, 1902.0, -2.0, 0.55),
                                 make_est(2, 1, 9, 1500.0, 0.0, 0.60)};
    std::vector<EstTrack> rev(est.rbegin(), est.rend());
    const MetricReport a = compute_metrics(truth, est, 0.0);
    const MetricReport b = compute_metrics(truth, rev, 0.0);
    CHECK(a.tdsr == b.tdsr);
    CHECK(a.atlr == b.atlr);
    CHECK(a.anft == b.anft);
    CHECK(a.aftl == b.aftl);
    CHECK(*a.rmse_r_km == *b.rmse_r_km);
    CHECK(*a.rmse_b_mrad == *b.rmse_b_mrad);
    CHECK(a.n_matched == b.n_matched);
}

TEST_CASE("empty inputs behave") {
    std::vector<TruthTrack> truth = {make_truth(0, 1, 10, 1700.0, 0.0, 0.48)};
    const MetricReport none = compute_metrics(truth, {}, 0.0);
    CHECK(none.tdsr == 0.0);
    CHECK(none.atlr == 0.0);
    CHECK(none.anft == 0.0);
    CHECK_FALSE(none.rmse_r_km.has_value());

    std::vector<EstTrack> est = {make_est(0, 1, 10, 1700.0, 0.0, 0.48)};
    const MetricReport no_truth = compute_metrics({}, est, 0.0);
    CHECK(no_truth.tdsr == 0.0);
    CHECK(no_truth.anft == 1.0);
    CHECK(no_truth.aftl == 10.0);
}

TEST_CASE("track extraction keeps only confirmed active windows") {
    VbState st;
    Candidate c;
    c.id = 4;
    c.birth_k = 1;
    c.confirmed = true;
    c.first_active = 2;
    c.last_active = 4;
    for (int k = 1; k <= 6; ++k) {
        c.x_fused.push_back(GroundState(1000.0 + k, 0.0, 0.5, 0.0));
        c.P_fused.push_back(Eigen::Matrix4d::Identity());
    }
    Candidate dormant = c;
    dormant.id = 5;
    dormant.confirmed = false;
    Candidate never = c;
    never.id = 6;
    never.first_active = -1;
    never.last_active = -1;
    st.tracks = {c, dormant, never};

    const auto est = extract_tracks(st);
    REQUIRE(est.size() == 1);
    CHECK(est[0].id == 4);
    CHECK(est[0].first_k == 2);
    CHECK(est[0].last_k == 4);
    CHECK(est[0].length() == 3);
    CHECK(est[0].x[0][0] == 1002.0);
    CHECK(est[0].x[2][0] == 1004.0);
}

TEST_CASE("aggregation averages successful runs only") {
    RunRecord a;
    a.ok = true;
    a.report.tdsr = 1.0;
    a.report.atlr = 0.8;
    a.report.anft = 2.0;
    a.report.aftl = 4.0;
    a.report.acc_seconds = 2.0;
    a.report.rmse_r_km = 1.0;
    a.report.rmse_b_mrad = 3.0;
    a.report.n_matched = 2;

    RunRecord b;
    b.ok = true;
    b.report.tdsr = 0.5;
    b.report.atlr = 0.6;
    b.report.anft = 0.0;
    b.report.aftl = 0.0;
    b.report.acc_seconds = 4.0;
    b.report.n_matched = 1;
    // no matched scans in run b: no rmse contribution

    RunRecord bad;
    bad.ok = false;
    bad.report.tdsr = 123.0;

    const MetricReport agg = aggregate_mean({a, b, bad});
    CHECK_ABS(agg.tdsr, 0.75, 1e-15);
    CHECK_ABS(agg.atlr, 0.7, 1e-15);
    CHECK_ABS(agg.anft, 1.0, 1e-15);
    CHECK_ABS(agg.aftl, 2.0, 1e-15);
    CHECK_ABS(agg.acc_seconds, 3.0, 1e-15);
    REQUIRE(agg.rmse_r_km.has_value());
    CHECK_ABS(*agg.rmse_r_km, 1.0, 1e-15);
    CHECK(agg.n_matched == 3);

    const MetricReport empty = aggregate_mean({bad});
    CHECK(empty.tdsr == 0.0);
    CHECK_FALSE(empty.rmse_r_km.has_value());
}

TEST_CASE("monte carlo driver is seeded and validated") {
    ScenarioConfig sc;
    Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
    Q.diagonal() << 8e-6, 1e-6, 1e-8, 1e-9;
    sc.motion = cv_model(16.0, Q);
    sc.geometry.d = 100.0;
    sc.geometry.paths = standard_path_table(100.0, 260.0);
    sc.R.assign(4, Eigen::Matrix3d(Eigen::Vector3d(25.0, 1e-6, 9e-6).asDiagonal()));
    sc.p_d.assign(4, 1.0);
    sc.clutter_per_scan = 0.0;
    sc.region = Region{1500.0, 2000.0, -0.524, 0.524, 0.428, 0.608};
    sc.num_scans = 8;
    sc.targets = {{GroundState(1700.0, 0.1, 0.48, 8.7e-5), 1, 8}};
    sc.process_noise = false;

    VbConfig cfg;
    cfg.evidence_form = existence::EvidenceForm::Symmetric;

    CHECK_THROWS_AS(run_monte_carlo(sc, cfg, 0, 1), ConfigError);

    const MonteCarloResult mc = run_monte_carlo(sc, cfg, 2, 100);
    REQUIRE(mc.runs.size() == 2);
    CHECK(mc.runs[0].seed == 100);
    CHECK(mc.runs[1].seed == 101);
    CHECK(mc.n_failed == 0);
    for (const auto& r : mc.runs) {
        CHECK(r.ok);
        CHECK(r.report.tdsr == 1.0);
    }
    CHECK(mc.aggregate.tdsr == 1.0);
}
