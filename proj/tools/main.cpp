// jdtvb command line. Subcommands cover the full pipeline: simulate a
// scenario, track a scan file, evaluate tracks against truth, run a
// Monte Carlo batch, and emit figure-ready CSV for a single run.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "jdtvb/errors.hpp"
#include "jdtvb/io.hpp"
#include "jdtvb/metrics.hpp"
#include "jdtvb/sim.hpp"
#include "jdtvb/tracker.hpp"

using namespace jdtvb;

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) { std::filesystem::create_directories(dir); }

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

io::LoadedConfig load_with_overrides(const std::string& config_path, int iters, int threads) {
    io::LoadedConfig lc = io::load_config(config_path);
    if (iters > 0) lc.tracker.max_iterations = iters;
    if (threads > 0) lc.tracker.threads = threads;
    return lc;
}

void print_report(const metrics::MetricReport& rep) {
    std::printf("TDSR %.4f  ATLR %.4f  ANFT %.3f  AFTL %.3f", rep.tdsr, rep.atlr, rep.anft,
                rep.aftl);
    if (rep.rmse_r_km) std::printf("  RMSER %.4f km", *rep.rmse_r_km);
    if (rep.rmse_b_mrad) std::printf("  RMSEB %.4f mrad", *rep.rmse_b_mrad);
    std::printf("  (%d truth, %d confirmed, %d matched, %d false)\n", rep.n_truth,
                rep.n_confirmed, rep.n_matched, rep.n_false);
}

io::RunManifest make_manifest(const io::LoadedConfig& lc, std::uint64_t seed,
                              const TrackerResult& tr) {
    io::RunManifest m;
    m.config_hash = io::config_hash(lc);
    m.seed = seed;
    m.iterations = tr.state.iterations_run;
    m.converged = tr.state.converged;
    m.history = tr.state.history;
    m.init_ms = tr.init_ms;
    m.total_ms = tr.total_ms;
    m.n_candidates = static_cast<int>(tr.state.tracks.size());
    for (const auto& c : tr.state.tracks)
        if (c.confirmed) ++m.n_confirmed;
    return m;
}

std::vector<std::string> path_labels(const ScenarioConfig& sc) {
    std::vector<std::string> labels;
    for (const auto& p : sc.geometry.paths) labels.push_back(p.label);
    return labels;
}

int cmd_simulate(const std::string& config_path, std::uint64_t seed, const std::string& out_dir) {
    const io::LoadedConfig lc = io::load_config(config_path);
    const SimOutput sim = simulate(lc.scenario, seed);
    ensure_dir(out_dir);
    io::write_scans_csv(join(out_dir, "scans.csv"), sim.scans);
    io::write_truth_csv(join(out_dir, "truth.csv"), sim.truth);
    std::size_t n_meas = 0;
    for (const auto& s : sim.scans) n_meas += s.ys.size();
    std::printf("simulated %d scans, %zu targets, %zu measurements -> %s\n",
                lc.scenario.num_scans, sim.truth.size(), n_meas, out_dir.c_str());
    return 0;
}

int cmd_track(const std::string& config_path, const std::string& scans_path,
              const std::string& truth_path, std::uint64_t seed, int iters, int threads,
              const std::string& out_dir) {
    io::LoadedConfig lc = load_with_overrides(config_path, iters, threads);
    lc.tracker.collect_history = true;
    const std::vector<ScanData> scans = io::read_scans_csv(scans_path);
    const TrackerResult tr = run_tracker(scans, lc.scenario, lc.tracker);

    ensure_dir(out_dir);
    io::write_tracks_csv(join(out_dir, "tracks.csv"), tr.state, path_labels(lc.scenario));
    io::write_existence_csv(join(out_dir, "existence.csv"), tr.state);
    io::write_manifest_json(join(out_dir, "manifest.json"), make_manifest(lc, seed, tr));

    int n_confirmed = 0;
    for (const auto& c : tr.state.tracks)
        if (c.confirmed) ++n_confirmed;
    std::printf("tracked %zu scans: %zu candidates, %d confirmed, %d iterations%s, %.1f ms\n",
                scans.size(), tr.state.tracks.size(), n_confirmed, tr.state.iterations_run,
                tr.state.converged ? " (converged)" : "", tr.total_ms);

    if (!truth_path.empty()) {
        const auto truth = io::read_truth_csv(truth_path);
        const auto est = metrics::extract_tracks(tr.state);
        const auto rep = metrics::compute_metrics(truth, est, tr.total_ms / 1e3);
        io::write_metrics_json(join(out_dir, "metrics.json"), rep, metrics::MatchOptions{});
        print_report(rep);
    }
    return 0;
}

int cmd_evaluate(const std::string& tracks_path, const std::string& truth_path,
                 const std::string& out_dir) {
    const auto est = io::read_est_tracks_csv(tracks_path);
    const auto truth = io::read_truth_csv(truth_path);
    const auto rep = metrics::compute_metrics(truth, est, 0.0);
    ensure_dir(out_dir);
    io::write_metrics_json(join(out_dir, "metrics.json"), rep, metrics::MatchOptions{});
    print_report(rep);
    return 0;
}

int cmd_mc(const std::string& config_path, int runs, std::uint64_t seed0, int iters, int threads,
           const std::string& out_dir) {
    const io::LoadedConfig lc = load_with_overrides(config_path, iters, 0);
    const double t0 = now_seconds();
    const metrics::MonteCarloResult mc =
        metrics::run_monte_carlo(lc.scenario, lc.tracker, runs, seed0, {}, threads);
    const double wall = now_seconds() - t0;

    ensure_dir(out_dir);
    io::write_metrics_json(join(out_dir, "metrics.json"), mc, metrics::MatchOptions{});

    nlohmann::json man;
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(io::config_hash(lc)));
    man["config_hash"] = hex;
    man["seed0"] = seed0;
    man["n_runs"] = runs;
    man["n_failed"] = mc.n_failed;
    man["threads"] = threads;
    man["wall_seconds"] = wall;
    man["runs"] = nlohmann::json::array();
    for (const auto& r : mc.runs) {
        nlohmann::json row;
        row["seed"] = r.seed;
        row["ok"] = r.ok;
        row["iterations"] = r.iterations;
        row["converged"] = r.converged;
        row["tracker_seconds"] = r.report.acc_seconds;
        man["runs"].push_back(row);
    }
    std::ofstream out(join(out_dir, "manifest.json"));
    out << man.dump(2) << "\n";

    std::printf("%d runs (%d failed) in %.1f s, seeds %llu..%llu\n", runs, mc.n_failed, wall,
                static_cast<unsigned long long>(seed0),
                static_cast<unsigned long long>(seed0 + static_cast<std::uint64_t>(runs) - 1));
    print_report(mc.aggregate);
    return 0;
}

int cmd_plotdata(const std::string& config_path, std::uint64_t seed, int iters, int threads,
                 const std::string& out_dir) {
    io::LoadedConfig lc = load_with_overrides(config_path, iters, threads);
    lc.tracker.collect_history = true;
    const SimOutput sim = simulate(lc.scenario, seed);
    const TrackerResult tr = run_tracker(sim.scans, lc.scenario, lc.tracker);
    ensure_dir(out_dir);

    {
        std::ofstream out(join(out_dir, "convergence.csv"));
        out << "iteration,bound,max_delta,assoc_ms,detect_ms,smooth_ms\n";
        for (std::size_t r = 0; r < tr.state.history.size(); ++r) {
            const auto& row = tr.state.history[r];
            out << (r + 1) << ',' << fmt17(row.bound) << ',' << fmt17(row.max_delta) << ','
                << fmt17(row.assoc_ms) << ',' << fmt17(row.detect_ms) << ','
                << fmt17(row.smooth_ms) << "\n";
        }
    }

    {
        std::ofstream out(join(out_dir, "iteration_metrics.csv"));
        out << "iteration,tdsr,atlr,anft,rmse_r_km,rmse_b_mrad\n";
        for (std::size_t r = 0; r < tr.snapshots.size(); ++r) {
            const auto est = metrics::extract_tracks(tr.snapshots[r]);
            const auto rep = metrics::compute_metrics(sim.truth, est, 0.0);
            out << (r + 1) << ',' << fmt17(rep.tdsr) << ',' << fmt17(rep.atlr) << ','
                << fmt17(rep.anft) << ',' << (rep.rmse_r_km ? fmt17(*rep.rmse_r_km) : "") << ','
                << (rep.rmse_b_mrad ? fmt17(*rep.rmse_b_mrad) : "") << "\n";
        }
    }

    {
        std::ofstream out(join(out_dir, "trajectories.csv"));
        out << "kind,id,k,g,g_rate,theta,theta_rate\n";
        for (const auto& t : sim.truth)
            for (int k = t.birth_k; k <= t.death_k(); ++k) {
                const Eigen::Vector4d& x = t.at(k);
                out << "truth," << t.id << ',' << k << ',' << fmt17(x[0]) << ',' << fmt17(x[1])
                    << ',' << fmt17(x[2]) << ',' << fmt17(x[3]) << "\n";
            }
        for (const auto& e : metrics::extract_tracks(tr.state))
            for (int k = e.first_k; k <= e.last_k; ++k) {
                const Eigen::Vector4d& x = e.at(k);
                out << "track," << e.id << ',' << k << ',' << fmt17(x[0]) << ',' << fmt17(x[1])
                    << ',' << fmt17(x[2]) << ',' << fmt17(x[3]) << "\n";
            }
    }

    io::write_existence_csv(join(out_dir, "existence.csv"), tr.state);
    io::write_truth_csv(join(out_dir, "truth.csv"), sim.truth);
    io::write_tracks_csv(join(out_dir, "tracks.csv"), tr.state, path_labels(lc.scenario));

    std::printf("plot data for seed %llu -> %s (%zu iterations)\n",
                static_cast<unsigned long long>(seed), out_dir.c_str(),
                tr.state.history.size());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"joint detection and tracking of multipath targets"};
    app.require_subcommand(1);

    std::string config_path;
    std::string scans_path;
    std::string tracks_path;
    std::string truth_path;
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    int runs = 100;
    int iters = 0;
    int threads = 1;

    CLI::App* sim = app.add_subcommand("simulate", "generate a scenario and emit scans CSV");
    sim->add_option("--config", config_path, "scenario/tracker config JSON")->required();
    sim->add_option("--seed", seed, "simulation seed");
    sim->add_option("--out-dir", out_dir, "output directory");

    CLI::App* trk = app.add_subcommand("track", "run the tracker on a scans CSV");
    trk->add_option("--config", config_path, "scenario/tracker config JSON")->required();
    trk->add_option("--scans", scans_path, "input scans CSV")->required();
    trk->add_option("--truth", truth_path, "optional truth CSV for metrics");
    trk->add_option("--seed", seed, "seed recorded in the manifest");
    trk->add_option("--iters", iters, "override coordination rounds (1 = single-round baseline)");
    trk->add_option("--threads", threads, "candidate-level worker threads");
    trk->add_option("--out-dir", out_dir, "output directory");

    CLI::App* ev = app.add_subcommand("evaluate", "compute metrics from tracks and truth CSV");
    ev->add_option("--tracks", tracks_path, "estimated tracks CSV")->required();
    ev->add_option("--truth", truth_path, "truth CSV")->required();
    ev->add_option("--out-dir", out_dir, "output directory");

    CLI::App* mc = app.add_subcommand("mc", "simulate and track a batch of seeded runs");
    mc->add_option("--config", config_path, "scenario/tracker config JSON")->required();
    mc->add_option("--runs", runs, "number of runs");
    mc->add_option("--seed", seed, "first seed; run m uses seed + m");
    mc->add_option("--iters", iters, "override coordination rounds (1 = single-round baseline)");
    mc->add_option("--threads", threads, "concurrent runs");
    mc->add_option("--out-dir", out_dir, "output directory");

    CLI::App* plot = app.add_subcommand("plotdata", "emit figure-ready CSV for one run");
    plot->add_option("--config", config_path, "scenario/tracker config JSON")->required();
    plot->add_option("--seed", seed, "simulation seed");
    plot->add_option("--iters", iters, "override coordination rounds");
    plot->add_option("--threads", threads, "candidate-level worker threads");
    plot->add_option("--out-dir", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(config_path, seed, out_dir);
        if (trk->parsed())
            return cmd_track(config_path, scans_path, truth_path, seed, iters, threads, out_dir);
        if (ev->parsed()) return cmd_evaluate(tracks_path, truth_path, out_dir);
        if (mc->parsed()) return cmd_mc(config_path, runs, seed, iters, threads, out_dir);
        if (plot->parsed()) return cmd_plotdata(config_path, seed, iters, threads, out_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
