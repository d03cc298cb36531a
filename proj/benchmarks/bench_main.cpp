#include <benchmark/benchmark.h>

#include <vector>

#include <Eigen/Dense>

#include "jdtvb/assoc.hpp"
#include "jdtvb/existence.hpp"
#include "jdtvb/rng.hpp"
#include "jdtvb/sim.hpp"
#include "jdtvb/smoothing.hpp"
#include "jdtvb/tracker.hpp"

using namespace jdtvb;

namespace {

Eigen::MatrixXd random_chi(int nt, int ne, rng::Stream& rs) {
    Eigen::MatrixXd chi(nt + 1, ne + 1);
    for (int i = 0; i <= nt; ++i)
        for (int j = 0; j <= ne; ++j) chi(i, j) = rs.uniform(-5.0, 5.0);
    chi(0, 0) = 0.0;
    return chi;
}

ScenarioConfig bench_scenario(int num_scans, double clutter) {
    ScenarioConfig sc;
    sc.motion = cv_model(16.0, Eigen::Matrix4d(
                                   Eigen::Vector4d(8e-6, 1e-6, 1e-8, 1e-9).asDiagonal()));
    sc.geometry.d = 100.0;
    sc.geometry.paths = standard_path_table(100.0, 260.0);
    sc.R.assign(4, Eigen::Vector3d(25.0, 1e-6, 9e-6).asDiagonal());
    sc.p_d.assign(4, 0.5);
    sc.clutter_per_scan = clutter;
    sc.region = Region{1500.0, 2000.0, -0.524, 0.524, 0.428, 0.608};
    sc.num_scans = num_scans;
    sc.targets = {
        TargetSpec{Eigen::Vector4d(1700.0, 0.1, 0.48, 8.7e-5), 1, num_scans},
        TargetSpec{Eigen::Vector4d(1950.0, -0.25, 0.55, 8.7e-5), 1, num_scans},
    };
    sc.process_noise = true;
    return sc;
}

void BM_Lbp(benchmark::State& state) {
    const int nt = static_cast<int>(state.range(0));
    const int ne = static_cast<int>(state.range(1));
    rng::Stream rs(99, 1);
    const Eigen::MatrixXd chi = random_chi(nt, ne, rs);
    assoc::AssignmentProblem prob;
    prob.chi = chi;
    for (auto _ : state) {
        const auto m = assoc::run_lbp(prob);
        benchmark::DoNotOptimize(m.E.sum());
    }
}
BENCHMARK(BM_Lbp)->Args({3, 10})->Args({6, 30})->Args({6, 100})->Args({10, 200});

void BM_UkfUrts(benchmark::State& state) {
    const int K = static_cast<int>(state.range(0));
    rng::Stream rs(99, 2);
    const MotionModel model = cv_model(
        16.0, Eigen::Matrix4d(Eigen::Vector4d(8e-6, 1e-6, 1e-8, 1e-9).asDiagonal()));
    const auto paths = standard_path_table(100.0, 260.0);
    const Eigen::Matrix3d R = Eigen::Vector3d(25.0, 1e-6, 9e-6).asDiagonal();

    Eigen::Vector4d x = Eigen::Vector4d(1700.0, 0.1, 0.48, 8.7e-5);
    std::vector<smoothing::PseudoMeasurement> meas;
    for (int k = 0; k < K; ++k) {
        if (k > 0) x = propagate(x, model);
        smoothing::PseudoMeasurement pm;
        pm.y = slant_measure(x, paths[0], 100.0);
        pm.R = R;
        pm.valid = true;
        meas.push_back(pm);
    }
    const Eigen::Matrix4d P0 = Eigen::Vector4d(100.0, 0.04, 1e-4, 1e-6).asDiagonal();
    const Eigen::Vector4d x0(1700.0, 0.1, 0.48, 8.7e-5);

    for (auto _ : state) {
        const auto fwd = smoothing::ukf_forward(
            [&](const Eigen::Vector4d& s) { return propagate(s, model); }, model.Q,
            [&](const Eigen::Vector4d& s) {
                return Eigen::VectorXd(slant_measure(s, paths[0], 100.0));
            },
            R, meas, x0, P0);
        const auto smooth = smoothing::urts_backward(fwd);
        benchmark::DoNotOptimize(smooth.x.back()[0]);
    }
}
BENCHMARK(BM_UkfUrts)->Arg(15)->Arg(30)->Arg(60);

void BM_Tracker(benchmark::State& state) {
    const double clutter = static_cast<double>(state.range(0));
    const ScenarioConfig sc = bench_scenario(20, clutter);
    const SimOutput sim = simulate(sc, 5);
    VbConfig cfg;
    cfg.evidence_form = existence::EvidenceForm::Symmetric;
    for (auto _ : state) {
        const TrackerResult tr = run_tracker(sim.scans, sc, cfg);
        benchmark::DoNotOptimize(tr.state.iterations_run);
    }
}
BENCHMARK(BM_Tracker)->Arg(25)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
