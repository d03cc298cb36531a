#include "jdtvb/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "jdtvb/errors.hpp"
#include "jdtvb/geometry.hpp"

namespace jdtvb::metrics {

namespace {

template <typename Track>
std::vector<EstTrack> extract_impl(const std::vector<Track>& tracks) {
    std::vector<EstTrack> out;
    for (const Track& c : tracks) {
        if (!c.confirmed || c.first_active < 1 || c.last_active < c.first_active) continue;
        EstTrack e;
        e.id = c.id;
        e.first_k = c.first_active;
        e.last_k = c.last_active;
        e.x.reserve(static_cast<std::size_t>(e.length()));
        for (int k = e.first_k; k <= e.last_k; ++k)
            e.x.push_back(c.x_fused[static_cast<std::size_t>(k - 1)]);
        out.push_back(std::move(e));
    }
    return out;
}

// Time-averaged normalized distance over the overlap window; +inf when disjoint.
double pair_distance(const TruthTrack& t, const EstTrack& e, const MatchOptions& opts) {
    const int lo = std::max(t.birth_k, e.first_k);
    const int hi = std::min(t.death_k(), e.last_k);
    if (lo > hi) return std::numeric_limits<double>::infinity();
    double acc = 0.0;
    for (int k = lo; k <= hi; ++k) {
        const Eigen::Vector4d& xt = t.at(k);
        const Eigen::Vector4d& xe = e.at(k);
        const double dg = (xt[kG] - xe[kG]) / opts.gate_g;
        const double dth = (xt[kTheta] - xe[kTheta]) / opts.gate_theta;
        acc += std::sqrt(dg * dg + dth * dth);
    }
    return acc / (hi - lo + 1);
}

} // namespace

std::vector<EstTrack> extract_tracks(const VbState& state) {
    return extract_impl(state.tracks);
}

std::vector<EstTrack> extract_tracks(const std::vector<CandidateSnapshot>& snap) {
    return extract_impl(snap);
}

MatchResult match_tracks(const std::vector<TruthTrack>& truth,
                         const std::vector<EstTrack>& est, const MatchOptions& opts) {
    MatchResult res;
    res.truth_of_est.assign(est.size(), -1);
    res.est_of_truth.assign(truth.size(), -1);

    struct Pair {
        double d;
        int ti, ei;
    };
    std::vector<Pair> pairs;
    for (std::size_t ti = 0; ti < truth.size(); ++ti) {
        for (std::size_t ei = 0; ei < est.size(); ++ei) {
            const double d = pair_distance(truth[ti], est[ei], opts);
            if (d < 1.0) pairs.push_back({d, static_cast<int>(ti), static_cast<int>(ei)});
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.d != b.d) return a.d < b.d;
        if (a.ti != b.ti) return a.ti < b.ti;
        return a.ei < b.ei;
    });
    for (const Pair& p : pairs) {
        if (res.est_of_truth[static_cast<std::size_t>(p.ti)] >= 0) continue;
        if (res.truth_of_est[static_cast<std::size_t>(p.ei)] >= 0) continue;
        res.est_of_truth[static_cast<std::size_t>(p.ti)] = p.ei;
        res.truth_of_est[static_cast<std::size_t>(p.ei)] = p.ti;
    }
    return res;
}

MetricReport compute_metrics(const std::vector<TruthTrack>& truth,
                             const std::vector<EstTrack>& est, double tracker_seconds,
                             const MatchOptions& opts) {
    const MatchResult match = match_tracks(truth, est, opts);
    MetricReport rep;
    rep.n_truth = static_cast<int>(truth.size());
    rep.n_confirmed = static_cast<int>(est.size());
    rep.acc_seconds = tracker_seconds;

    double atlr_sum = 0.0;
    double se_r = 0.0, se_b = 0.0;
    int matched_scans = 0;
    for (std::size_t ti = 0; ti < truth.size(); ++ti) {
        const int ei = match.est_of_truth[ti];
        if (ei < 0) continue;
        ++rep.n_matched;
        const TruthTrack& t = truth[ti];
        const EstTrack& e = est[static_cast<std::size_t>(ei)];
        const int lo = std::max(t.birth_k, e.first_k);
        const int hi = std::min(t.death_k(), e.last_k);
        const int overlap = hi - lo + 1;
        const int lifetime = t.death_k() - t.birth_k + 1;
        atlr_sum += static_cast<double>(overlap) / lifetime;
        for (int k = lo; k <= hi; ++k) {
            const double dg = t.at(k)[kG] - e.at(k)[kG];
            const double dth = t.at(k)[kTheta] - e.at(k)[kTheta];
            se_r += dg * dg;
            se_b += dth * dth;
            ++matched_scans;
        }
    }
    rep.n_matched_scans = matched_scans;
    rep.tdsr = truth.empty() ? 0.0 : static_cast<double>(rep.n_matched) / rep.n_truth;
    rep.atlr = rep.n_matched > 0 ? atlr_sum / rep.n_matched : 0.0;
    if (matched_scans > 0) {
        rep.rmse_r_km = std::sqrt(se_r / matched_scans);
        rep.rmse_b_mrad = std::sqrt(se_b / matched_scans) * 1e3;
    }

    double false_len = 0.0;
    for (std::size_t ei = 0; ei < est.size(); ++ei) {
        if (match.truth_of_est[ei] >= 0) continue;
        ++rep.n_false;
        false_len += est[ei].length();
    }
    rep.anft = rep.n_false;
    rep.aftl = rep.n_false > 0 ? false_len / rep.n_false : 0.0;
    return rep;
}

MetricReport aggregate_mean(const std::vector<RunRecord>& runs) {
    MetricReport agg;
    int n = 0;
    double se_r = 0.0, se_b = 0.0;
    int n_r = 0, n_b = 0;
    for (const RunRecord& r : runs) {
        if (!r.ok) continue;
        ++n;
        agg.tdsr += r.report.tdsr;
        agg.atlr += r.report.atlr;
        agg.anft += r.report.anft;
        agg.aftl += r.report.aftl;
        agg.acc_seconds += r.report.acc_seconds;
        agg.n_truth += r.report.n_truth;
        agg.n_confirmed += r.report.n_confirmed;
        agg.n_matched += r.report.n_matched;
        agg.n_false += r.report.n_false;
        agg.n_matched_scans += r.report.n_matched_scans;
        if (r.report.rmse_r_km) {
            se_r += *r.report.rmse_r_km;
            ++n_r;
        }
        if (r.report.rmse_b_mrad) {
            se_b += *r.report.rmse_b_mrad;
            ++n_b;
        }
    }
    if (n == 0) return agg;
    agg.tdsr /= n;
    agg.atlr /= n;
    agg.anft /= n;
    agg.aftl /= n;
    agg.acc_seconds /= n;
    if (n_r > 0) agg.rmse_r_km = se_r / n_r;
    if (n_b > 0) agg.rmse_b_mrad = se_b / n_b;
    return agg;
}

MonteCarloResult run_monte_carlo(const ScenarioConfig& scenario, const VbConfig& cfg,
                                 int n_runs, std::uint64_t seed0, const MatchOptions& opts,
                                 int threads) {
    if (n_runs < 1) throw ConfigError("run_monte_carlo: n_runs must be >= 1");
    MonteCarloResult out;
    out.runs.resize(static_cast<std::size_t>(n_runs));

    auto one_run = [&](int m) {
        RunRecord& rec = out.runs[static_cast<std::size_t>(m)];
        rec.seed = seed0 + static_cast<std::uint64_t>(m);
        try {
            const SimOutput sim = simulate(scenario, rec.seed);
            const auto t0 = std::chrono::steady_clock::now();
            const TrackerResult tr = run_tracker(sim.scans, scenario, cfg);
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const auto est = extract_tracks(tr.state);
            rec.report = compute_metrics(sim.truth, est, secs, opts);
            rec.iterations = tr.state.iterations_run;
            rec.converged = tr.state.converged;
            rec.ok = true;
        } catch (const std::exception&) {
            rec.ok = false;
        }
    };

    threads = std::max(1, std::min(threads, n_runs));
    if (threads == 1) {
        for (int m = 0; m < n_runs; ++m) one_run(m);
    } else {
        std::atomic<int> next{0};
        auto worker = [&] {
            for (;;) {
                const int m = next.fetch_add(1);
                if (m >= n_runs) return;
                one_run(m);
            }
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const RunRecord& r : out.runs)
        if (!r.ok) ++out.n_failed;
    out.aggregate = aggregate_mean(out.runs);
    return out;
}

} // namespace jdtvb::metrics
