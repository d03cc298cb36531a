#include "jdtvb/tracker.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <numeric>
#include <thread>

#include "jdtvb/errors.hpp"
#include "jdtvb/geometry.hpp"
#include "jdtvb/stats.hpp"

namespace jdtvb {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

struct Seed {
    int birth_k = 1;
    Eigen::Vector4d x = Eigen::Vector4d::Zero();
    Eigen::Matrix4d P = Eigen::Matrix4d::Identity();
    Eigen::Vector2d q = Eigen::Vector2d(0.5, 0.5);
    int below = 0;
    bool dead = false;
    std::vector<Eigen::Vector4d> hist_x;
    std::vector<Eigen::Matrix4d> hist_P;
    std::vector<Eigen::Vector2d> hist_q;
};

struct BackProjection {
    Eigen::Vector3d x3 = Eigen::Vector3d::Zero(); // [g, g_rate, theta]
    Eigen::Matrix3d P3 = Eigen::Matrix3d::Identity();
    bool valid = false;
};

struct Hypothesis {
    std::vector<int> members;   // indices into the cluster's measurement list
    std::vector<int> path_of;   // same length, path index per member
    double score = 0.0;
    bool valid = false;
};

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int a) {
        while (parent[static_cast<std::size_t>(a)] != a) {
            parent[static_cast<std::size_t>(a)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
            a = parent[static_cast<std::size_t>(a)];
        }
        return a;
    }
    void unite(int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); }
};

double pair_distance(const BackProjection& a, const BackProjection& b) {
    return stats::mahalanobis2(a.x3 - b.x3, a.P3 + b.P3);
}

// Mean pairwise back-projection distance of one member-to-path assignment.
double hypothesis_score(const std::vector<BackProjection>& bp, int n_paths,
                        const std::vector<int>& members, const std::vector<int>& path_of) {
    double total = 0.0;
    int pairs = 0;
    for (std::size_t a = 0; a < members.size(); ++a) {
        for (std::size_t b = a + 1; b < members.size(); ++b) {
            const BackProjection& pa =
                bp[static_cast<std::size_t>(members[a] * n_paths + path_of[a])];
            const BackProjection& pb =
                bp[static_cast<std::size_t>(members[b] * n_paths + path_of[b])];
            total += pair_distance(pa, pb);
            ++pairs;
        }
    }
    return pairs > 0 ? total / pairs : 0.0;
}

void enumerate_assignments(const std::vector<BackProjection>& bp, int n_paths,
                           const std::vector<int>& members, std::vector<int>& path_of,
                           std::vector<bool>& used_path, std::size_t depth, Hypothesis& best) {
    if (depth == members.size()) {
        const double s = hypothesis_score(bp, n_paths, members, path_of);
        if (!best.valid || s < best.score) {
            best.valid = true;
            best.score = s;
            best.members = members;
            best.path_of = path_of;
        }
        return;
    }
    for (int t = 0; t < n_paths; ++t) {
        if (used_path[static_cast<std::size_t>(t)]) continue;
        const BackProjection& cand =
            bp[static_cast<std::size_t>(members[depth] * n_paths + t)];
        if (!cand.valid) continue;
        used_path[static_cast<std::size_t>(t)] = true;
        path_of[depth] = t;
        enumerate_assignments(bp, n_paths, members, path_of, used_path, depth + 1, best);
        used_path[static_cast<std::size_t>(t)] = false;
    }
}

void enumerate_subsets(const std::vector<int>& pool, int size, std::size_t start,
                       std::vector<int>& current, const std::vector<BackProjection>& bp,
                       int n_paths, Hypothesis& best) {
    if (static_cast<int>(current.size()) == size) {
        std::vector<int> path_of(current.size(), -1);
        std::vector<bool> used_path(static_cast<std::size_t>(n_paths), false);
        enumerate_assignments(bp, n_paths, current, path_of, used_path, 0, best);
        return;
    }
    for (std::size_t i = start; i < pool.size(); ++i) {
        current.push_back(pool[i]);
        enumerate_subsets(pool, size, i + 1, current, bp, n_paths, best);
        current.pop_back();
    }
}

constexpr double kDedupScaleG = 10.0;
constexpr double kDedupScaleGRate = 5e-3;
constexpr double kDedupScaleTheta = 5e-3;
constexpr double kDedupScaleThetaRate = 5e-4;

double seed_distance(const Seed& a, const Seed& b, int K) {
    const int lo = std::max(a.birth_k, b.birth_k);
    const int hi = K;
    int count = 0;
    double acc = 0.0;
    for (int k = lo; k <= hi; ++k) {
        const std::size_t ia = static_cast<std::size_t>(k - a.birth_k);
        const std::size_t ib = static_cast<std::size_t>(k - b.birth_k);
        if (ia >= a.hist_x.size() || ib >= b.hist_x.size()) break;
        const Eigen::Vector4d d = a.hist_x[ia] - b.hist_x[ib];
        const double nd = std::sqrt(
            (std::pow(d[kG] / kDedupScaleG, 2) + std::pow(d[kGRate] / kDedupScaleGRate, 2) +
             std::pow(d[kTheta] / kDedupScaleTheta, 2) +
             std::pow(d[kThetaRate] / kDedupScaleThetaRate, 2)) /
            4.0);
        acc += nd;
        ++count;
    }
    if (count < 2) return std::numeric_limits<double>::infinity();
    return acc / count;
}

} // namespace

VbState initialize(const std::vector<ScanData>& scans, const ScenarioConfig& scenario,
                   const VbConfig& cfg) {
    const int K = static_cast<int>(scans.size());
    if (K == 0) throw ConfigError("initialize: no scans");
    const int n_paths = static_cast<int>(scenario.geometry.paths.size());
    const double d = scenario.geometry.d;
    const double gamma = stats::chi2_quantile(cfg.gate_prob, 3.0);
    const existence::MetaModel meta = existence::make_meta_model(cfg.stay_prob, cfg.prior_active);
    Eigen::VectorXd pd_active(n_paths), pd_dormant(n_paths);
    for (int t = 0; t < n_paths; ++t) {
        pd_active[t] = scenario.p_d[static_cast<std::size_t>(t)];
        pd_dormant[t] = cfg.p_d_dormant;
    }

    std::vector<Seed> seeds;
    std::vector<Seed> retired;
    for (int k = 1; k <= K; ++k) {
        const ScanData& scan = scans[static_cast<std::size_t>(k - 1)];
        const int ne = static_cast<int>(scan.ys.size());
        std::vector<bool> used(static_cast<std::size_t>(ne), false);

        // Extend live seeds with gated nearest-measurement updates.
        for (Seed& seed : seeds) {
            if (seed.dead) continue;
            seed.x = scenario.motion.F * seed.x;
            seed.P = scenario.motion.F * seed.P * scenario.motion.F.transpose() +
                     scenario.motion.Q;
            seed.P = 0.5 * (seed.P + seed.P.transpose()).eval();
            std::vector<bool> detected(static_cast<std::size_t>(n_paths), false);
            int usable_paths = 0;
            for (int t = 0; t < n_paths; ++t) {
                const PropagationPath& path = scenario.geometry.paths[static_cast<std::size_t>(t)];
                try {
                    Eigen::VectorXd zp;
                    Eigen::MatrixXd S;
                    auto h = [&](const Eigen::Vector4d& xs) -> Eigen::VectorXd {
                        return slant_measure(xs, path, d);
                    };
                    smoothing::ut_predict_measurement(
                        seed.x, seed.P, h, scenario.R[static_cast<std::size_t>(t)], zp, S, cfg.ut);
                    ++usable_paths;
                    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
                    if (ldlt.info() != Eigen::Success) continue;
                    int best_j = -1;
                    double best_d = gamma;
                    for (int j = 0; j < ne; ++j) {
                        const Eigen::VectorXd diff = scan.ys[static_cast<std::size_t>(j)] - zp;
                        const double dist = diff.dot(ldlt.solve(diff));
                        if (dist <= gamma) {
                            used[static_cast<std::size_t>(j)] = true;
                            if (dist <= best_d) {
                                best_d = dist;
                                best_j = j;
                            }
                        }
                    }
                    if (best_j >= 0) {
                        smoothing::ut_update(seed.x, seed.P, h,
                                             scenario.R[static_cast<std::size_t>(t)],
                                             scan.ys[static_cast<std::size_t>(best_j)], cfg.ut);
                        detected[static_cast<std::size_t>(t)] = true;
                    }
                } catch (const Error&) {
                    continue; // path unusable at this state
                }
            }
            if (usable_paths == 0) {
                seed.dead = true;
                continue;
            }
            const Eigen::Vector2d b = existence::detection_evidence(detected, pd_active, pd_dormant);
            Eigen::Vector2d q = (meta.T * seed.q).cwiseProduct(b);
            seed.q = q / q.sum();
            seed.hist_x.push_back(seed.x);
            seed.hist_P.push_back(seed.P);
            seed.hist_q.push_back(seed.q);
            if (seed.q[1] < cfg.delta_s)
                ++seed.below;
            else
                seed.below = 0;
            if (seed.below >= cfg.init_prune_patience || seed.q[1] < cfg.init_hard_floor)
                seed.dead = true;
        }

        // Cluster leftover measurements and spawn new seeds.
        std::vector<int> free_idx;
        for (int j = 0; j < ne; ++j)
            if (!used[static_cast<std::size_t>(j)]) free_idx.push_back(j);
        const int nf = static_cast<int>(free_idx.size());
        UnionFind uf(nf);
        for (int a = 0; a < nf; ++a) {
            for (int b = a + 1; b < nf; ++b) {
                const Eigen::Vector3d diff = scan.ys[static_cast<std::size_t>(free_idx[a])] -
                                             scan.ys[static_cast<std::size_t>(free_idx[b])];
                if (std::abs(diff[0]) <= cfg.init_gates[0] &&
                    std::abs(diff[1]) <= cfg.init_gates[1] &&
                    std::abs(diff[2]) <= cfg.init_gates[2])
                    uf.unite(a, b);
            }
        }
        std::vector<std::vector<int>> clusters(static_cast<std::size_t>(nf));
        for (int a = 0; a < nf; ++a)
            clusters[static_cast<std::size_t>(uf.find(a))].push_back(free_idx[a]);

        for (std::vector<int>& cluster : clusters) {
            if (static_cast<int>(cluster.size()) < 2) continue;
            if (static_cast<int>(cluster.size()) > 12) {
                std::sort(cluster.begin(), cluster.end(), [&](int a, int b) {
                    return scan.ys[static_cast<std::size_t>(a)][0] <
                           scan.ys[static_cast<std::size_t>(b)][0];
                });
                const double med =
                    scan.ys[static_cast<std::size_t>(cluster[cluster.size() / 2])][0];
                std::sort(cluster.begin(), cluster.end(), [&](int a, int b) {
                    return std::abs(scan.ys[static_cast<std::size_t>(a)][0] - med) <
                           std::abs(scan.ys[static_cast<std::size_t>(b)][0] - med);
                });
                cluster.resize(12);
            }
            // Back-project every (measurement, path) pair once.
            const int nc = static_cast<int>(cluster.size());
            std::vector<BackProjection> bp(static_cast<std::size_t>(nc * n_paths));
            for (int a = 0; a < nc; ++a) {
                for (int t = 0; t < n_paths; ++t) {
                    BackProjection& e = bp[static_cast<std::size_t>(a * n_paths + t)];
                    const PropagationPath& path =
                        scenario.geometry.paths[static_cast<std::size_t>(t)];
                    try {
                        const GroundState gx =
                            back_project(scan.ys[static_cast<std::size_t>(cluster[a])], path, d);
                        const Eigen::Matrix3d J = back_project_jacobian(
                            scan.ys[static_cast<std::size_t>(cluster[a])], path, d);
                        e.x3 << gx[kG], gx[kGRate], gx[kTheta];
                        e.P3 = J * scenario.R[static_cast<std::size_t>(t)] * J.transpose();
                        e.P3 = 0.5 * (e.P3 + e.P3.transpose()).eval();
                        e.valid = true;
                    } catch (const Error&) {
                        e.valid = false;
                    }
                }
            }
            std::vector<int> local(static_cast<std::size_t>(nc));
            std::iota(local.begin(), local.end(), 0);
            std::vector<bool> taken(static_cast<std::size_t>(nc), false);
            for (;;) {
                std::vector<int> pool;
                for (int a = 0; a < nc; ++a)
                    if (!taken[static_cast<std::size_t>(a)]) pool.push_back(a);
                if (static_cast<int>(pool.size()) < 2) break;
                Hypothesis best;
                for (int size = std::min<int>(n_paths, static_cast<int>(pool.size()));
                     size >= 2 && !best.valid; --size) {
                    Hypothesis h;
                    std::vector<int> current;
                    enumerate_subsets(pool, size, 0, current, bp, n_paths, h);
                    if (h.valid && h.score <= cfg.init_consistency_gate) best = h;
                }
                if (!best.valid) break;

                Eigen::Matrix3d Lambda = Eigen::Matrix3d::Zero();
                Eigen::Vector3d eta = Eigen::Vector3d::Zero();
                for (std::size_t a = 0; a < best.members.size(); ++a) {
                    const BackProjection& e = bp[static_cast<std::size_t>(
                        best.members[a] * n_paths + best.path_of[a])];
                    const Eigen::Matrix3d Pinv = e.P3.ldlt().solve(Eigen::Matrix3d::Identity());
                    Lambda += Pinv;
                    eta += Pinv * e.x3;
                }
                const Eigen::Matrix3d Sigma = Lambda.ldlt().solve(Eigen::Matrix3d::Identity());
                const Eigen::Vector3d mu = Sigma * eta;

                Seed seed;
                seed.birth_k = k;
                seed.x << mu[0], mu[1], mu[2], 0.0;
                seed.P.setZero();
                seed.P.topLeftCorner<3, 3>() = 0.5 * (Sigma + Sigma.transpose());
                seed.P(3, 3) = cfg.init_theta_rate_sigma * cfg.init_theta_rate_sigma;
                std::vector<bool> detected(static_cast<std::size_t>(n_paths), false);
                for (int pt : best.path_of) detected[static_cast<std::size_t>(pt)] = true;
                const Eigen::Vector2d b =
                    existence::detection_evidence(detected, pd_active, pd_dormant);
                Eigen::Vector2d q = meta.prior.cwiseProduct(b);
                seed.q = q / q.sum();
                seed.hist_x.push_back(seed.x);
                seed.hist_P.push_back(seed.P);
                seed.hist_q.push_back(seed.q);
                if (seed.q[1] >= cfg.init_hard_floor) seeds.push_back(std::move(seed));
                for (int m : best.members) taken[static_cast<std::size_t>(m)] = true;
            }
        }
        // Dead seeds with enough history stay on file as candidates: a target
        // that leaves the scene mid run must still reach the tracker, which
        // owns the termination decision. A pure clutter seed is pruned within
        // init_prune_patience extensions of birth, so anything longer lived
        // carries multi-scan support.
        const std::size_t keep_len = static_cast<std::size_t>(cfg.init_prune_patience) + 3;
        for (Seed& s : seeds)
            if (s.dead && s.hist_x.size() >= keep_len) retired.push_back(std::move(s));
        seeds.erase(std::remove_if(seeds.begin(), seeds.end(),
                                   [](const Seed& s) { return s.dead; }),
                    seeds.end());
    }
    for (Seed& s : retired) seeds.push_back(std::move(s));

    // Deduplicate overlapping seeds, keeping the older one.
    std::sort(seeds.begin(), seeds.end(),
              [](const Seed& a, const Seed& b) { return a.birth_k < b.birth_k; });
    std::vector<bool> drop(seeds.size(), false);
    for (std::size_t a = 0; a < seeds.size(); ++a) {
        if (drop[a]) continue;
        for (std::size_t b = a + 1; b < seeds.size(); ++b) {
            if (drop[b]) continue;
            if (seed_distance(seeds[a], seeds[b], K) < cfg.init_dedup_dist) drop[b] = true;
        }
    }

    VbState st;
    int id = 0;
    for (std::size_t sidx = 0; sidx < seeds.size(); ++sidx) {
        if (drop[sidx]) continue;
        const Seed& seed = seeds[sidx];
        Candidate c;
        c.id = id++;
        c.birth_k = seed.birth_k;
        c.x0 = seed.hist_x.front();
        c.P0 = seed.hist_P.front();
        c.paths.resize(static_cast<std::size_t>(n_paths));
        c.x_fused.assign(static_cast<std::size_t>(K), seed.hist_x.front());
        c.P_fused.assign(static_cast<std::size_t>(K), seed.hist_P.front());
        c.path_w.assign(static_cast<std::size_t>(K),
                        Eigen::VectorXd::Constant(n_paths, 1.0 / n_paths));
        c.q_s.assign(static_cast<std::size_t>(K), Eigen::Vector2d(1.0, 0.0));
        c.s_hard.assign(static_cast<std::size_t>(K), 0);
        for (int t = 0; t < n_paths; ++t) {
            PathTrack& pt = c.paths[static_cast<std::size_t>(t)];
            pt.x.assign(static_cast<std::size_t>(K), seed.hist_x.front());
            pt.P.assign(static_cast<std::size_t>(K), seed.hist_P.front());
            pt.y_pred.assign(static_cast<std::size_t>(K), Eigen::Vector3d::Zero());
            pt.S.assign(static_cast<std::size_t>(K), Eigen::Matrix3d::Identity());
            pt.ok.assign(static_cast<std::size_t>(K), 0);
        }
        for (int k = seed.birth_k; k <= K; ++k) {
            const std::size_t h = static_cast<std::size_t>(k - seed.birth_k);
            if (h >= seed.hist_x.size()) break;
            const std::size_t ki = static_cast<std::size_t>(k - 1);
            c.x_fused[ki] = seed.hist_x[h];
            c.P_fused[ki] = seed.hist_P[h];
            c.q_s[ki] = seed.hist_q[h];
            for (int t = 0; t < n_paths; ++t) {
                PathTrack& pt = c.paths[static_cast<std::size_t>(t)];
                pt.x[ki] = seed.hist_x[h];
                pt.P[ki] = seed.hist_P[h];
                const PropagationPath& path = scenario.geometry.paths[static_cast<std::size_t>(t)];
                try {
                    pt.y_pred[ki] = slant_measure(pt.x[ki], path, d);
                    const auto H = measurement_jacobian(pt.x[ki], path, d);
                    pt.S[ki] = H * pt.P[ki] * H.transpose() +
                               scenario.R[static_cast<std::size_t>(t)];
                    pt.ok[ki] = 1;
                } catch (const Error&) {
                    pt.ok[ki] = 0;
                }
            }
        }
        st.tracks.push_back(std::move(c));
    }
    return st;
}

// ---------------------------------------------------------------------------
// One coordination round
// ---------------------------------------------------------------------------

namespace {

struct AssocResult {
    assoc::AssignmentMarginals m;
    Eigen::MatrixXd chi;
    std::vector<int> rows;                   // candidate index per interior row
    std::vector<int> cols;                   // scan measurement index per interior column
    std::vector<std::vector<int>> row_gated; // per interior row: interior column indices
};

int find_row(const std::vector<int>& rows, int candidate) {
    const auto it = std::lower_bound(rows.begin(), rows.end(), candidate);
    if (it == rows.end() || *it != candidate) return -1;
    return static_cast<int>(it - rows.begin()) + 1;
}

} // namespace

bool vb_iterate(VbState& state, const std::vector<ScanData>& scans,
                const ScenarioConfig& scenario, const VbConfig& cfg) {
    const int K = static_cast<int>(scans.size());
    const int n_paths = static_cast<int>(scenario.geometry.paths.size());
    const int n_tracks = static_cast<int>(state.tracks.size());
    const double d = scenario.geometry.d;
    const double gamma = stats::chi2_quantile(cfg.gate_prob, 3.0);
    const double lambda = std::max(scenario.clutter_density(), 1e-12);
    const double p_c = scenario.clutter_pdf();
    const existence::MetaModel meta = existence::make_meta_model(cfg.stay_prob, cfg.prior_active);
    Eigen::VectorXd pd_active(n_paths), pd_dormant(n_paths);
    for (int t = 0; t < n_paths; ++t) {
        pd_active[t] = scenario.p_d[static_cast<std::size_t>(t)];
        pd_dormant[t] = cfg.p_d_dormant;
    }

    IterationStats stats_row;
    if (n_tracks == 0) {
        state.history.push_back(stats_row);
        ++state.iterations_run;
        state.converged = true;
        return true;
    }

    // --- (2.1) data association per (scan, path), then path weights.
    auto t0 = Clock::now();
    std::vector<std::vector<AssocResult>> ar(static_cast<std::size_t>(K));
    for (auto& v : ar) v.resize(static_cast<std::size_t>(n_paths));

    parallel_for(K * n_paths, cfg.threads, [&](int flat) {
        const int k = flat / n_paths + 1;
        const int tau = flat % n_paths;
        const ScanData& scan = scans[static_cast<std::size_t>(k - 1)];
        AssocResult& res = ar[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(tau)];

        std::vector<assoc::TargetAssocInput> inputs;
        std::vector<int> col_of_meas(scan.ys.size(), -1);
        for (int i = 0; i < n_tracks; ++i) {
            const Candidate& c = state.tracks[static_cast<std::size_t>(i)];
            if (!c.alive_at(k)) continue;
            const PathTrack& pt = c.paths[static_cast<std::size_t>(tau)];
            const std::size_t ki = static_cast<std::size_t>(k - 1);
            if (!pt.ok[ki]) continue;
            assoc::TargetAssocInput in;
            in.y_pred = pt.y_pred[ki];
            in.S = pt.S[ki];
            const Eigen::Matrix3d& R = scenario.R[static_cast<std::size_t>(tau)];
            in.trace_term =
                3.0 - in.S.ldlt().solve(R).trace();
            in.q_active = c.q_s[ki][1];
            try {
                in.gated = smoothing::gate(in.y_pred, in.S, scan.ys, gamma);
            } catch (const Error&) {
                continue;
            }
            res.rows.push_back(i);
            for (int j : in.gated) {
                if (col_of_meas[static_cast<std::size_t>(j)] < 0) {
                    col_of_meas[static_cast<std::size_t>(j)] = static_cast<int>(res.cols.size());
                    res.cols.push_back(j);
                }
            }
            inputs.push_back(std::move(in));
        }
        if (res.rows.empty()) return;

        std::vector<Eigen::Vector3d> ys;
        ys.reserve(res.cols.size());
        for (int j : res.cols) ys.push_back(scan.ys[static_cast<std::size_t>(j)]);
        res.row_gated.resize(res.rows.size());
        for (std::size_t r = 0; r < inputs.size(); ++r) {
            for (int& j : inputs[r].gated) {
                const int cidx = col_of_meas[static_cast<std::size_t>(j)];
                res.row_gated[r].push_back(cidx + 1);
                j = cidx;
            }
        }
        const assoc::AssignmentProblem prob = assoc::build_problem(
            inputs, ys, scenario.p_d[static_cast<std::size_t>(tau)], cfg.p_d_dormant, lambda,
            p_c);
        res.chi = prob.chi;
        res.m = assoc::run_lbp(prob, cfg.lbp);
    });

    // Path weights from the previous round's per-path moments.
    parallel_for(n_tracks, cfg.threads, [&](int i) {
        Candidate& c = state.tracks[static_cast<std::size_t>(i)];
        if (c.failed) return;
        for (int k = c.birth_k; k <= K; ++k) {
            const std::size_t ki = static_cast<std::size_t>(k - 1);
            std::vector<Eigen::Vector4d> xs;
            std::vector<Eigen::Matrix4d> Ps;
            for (int t = 0; t < n_paths; ++t) {
                xs.push_back(c.paths[static_cast<std::size_t>(t)].x[ki]);
                Ps.push_back(c.paths[static_cast<std::size_t>(t)].P[ki]);
            }
            try {
                c.path_w[ki] = assoc::path_weights(xs, Ps);
            } catch (const Error&) {
                c.path_w[ki] = Eigen::VectorXd::Constant(n_paths, 1.0 / n_paths);
            }
        }
    });
    stats_row.assoc_ms = ms_since(t0);

    // --- (2.2) existence detection.
    t0 = Clock::now();
    parallel_for(n_tracks, cfg.threads, [&](int i) {
        Candidate& c = state.tracks[static_cast<std::size_t>(i)];
        if (c.failed) {
            c.confirmed = false;
            std::fill(c.s_hard.begin(), c.s_hard.end(), 0);
            return;
        }
        const int span = K - c.birth_k + 1;
        std::vector<Eigen::Vector2d> b(static_cast<std::size_t>(span));
        for (int k = c.birth_k; k <= K; ++k) {
            const std::size_t ki = static_cast<std::size_t>(k - 1);
            Eigen::VectorXd miss = Eigen::VectorXd::Ones(n_paths);
            for (int t = 0; t < n_paths; ++t) {
                const AssocResult& res =
                    ar[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(t)];
                const int row = find_row(res.rows, i);
                if (row > 0) miss[t] = res.m.E(row, 0);
            }
            const auto xi = existence::xi_evidence(c.path_w[ki], miss, pd_active, pd_dormant);
            b[static_cast<std::size_t>(k - c.birth_k)] = existence::evidence_b(xi, cfg.evidence_form);
        }
        const auto q = existence::forward_backward(b, meta);
        for (int k = c.birth_k; k <= K; ++k)
            c.q_s[static_cast<std::size_t>(k - 1)] = q[static_cast<std::size_t>(k - c.birth_k)];
        const auto dec = existence::decide_track(q, cfg.delta_b, cfg.delta_m);
        c.confirmed = dec.confirmed;
        std::fill(c.s_hard.begin(), c.s_hard.end(), 0);
        for (int k = c.birth_k; k <= K; ++k)
            c.s_hard[static_cast<std::size_t>(k - 1)] =
                dec.active[static_cast<std::size_t>(k - c.birth_k)];
        c.first_active = dec.first_active >= 0 ? c.birth_k + dec.first_active : -1;
        c.last_active = dec.last_active >= 0 ? c.birth_k + dec.last_active : -1;
    });
    stats_row.detect_ms = ms_since(t0);

    // --- (2.3) per-path smoothing, then fusion.
    t0 = Clock::now();
    std::vector<Eigen::Vector4d> prev_fused;
    prev_fused.reserve(static_cast<std::size_t>(n_tracks) * static_cast<std::size_t>(K));
    for (const Candidate& c : state.tracks)
        for (int k = 0; k < K; ++k) prev_fused.push_back(c.x_fused[static_cast<std::size_t>(k)]);

    std::unique_ptr<std::atomic<bool>[]> fail_flags(new std::atomic<bool>[n_tracks]);
    for (int i = 0; i < n_tracks; ++i) fail_flags[i].store(state.tracks[i].failed);

    parallel_for(n_tracks * n_paths, cfg.threads, [&](int flat) {
        const int i = flat / n_paths;
        const int tau = flat % n_paths;
        Candidate& c = state.tracks[static_cast<std::size_t>(i)];
        if (c.failed) return;
        const PropagationPath& path = scenario.geometry.paths[static_cast<std::size_t>(tau)];
        const Eigen::Matrix3d& R = scenario.R[static_cast<std::size_t>(tau)];
        const int span = K - c.birth_k + 1;
        std::vector<smoothing::PseudoMeasurement> meas(static_cast<std::size_t>(span));
        for (int k = c.birth_k; k <= K; ++k) {
            const AssocResult& res =
                ar[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(tau)];
            const int row = find_row(res.rows, i);
            if (row <= 0) continue;
            const auto& gated = res.row_gated[static_cast<std::size_t>(row - 1)];
            if (gated.empty()) continue;
            std::vector<Eigen::VectorXd> ys;
            Eigen::VectorXd w(static_cast<Eigen::Index>(gated.size()));
            for (std::size_t g = 0; g < gated.size(); ++g) {
                const int cidx = gated[g];
                ys.push_back(scans[static_cast<std::size_t>(k - 1)]
                                 .ys[static_cast<std::size_t>(res.cols[static_cast<std::size_t>(
                                     cidx - 1)])]);
                w[static_cast<Eigen::Index>(g)] = res.m.E(row, cidx);
            }
            meas[static_cast<std::size_t>(k - c.birth_k)] =
                smoothing::pseudo_measurement(ys, w, res.m.E(row, 0), R);
        }
        auto f = [&](const Eigen::Vector4d& xs) -> Eigen::Vector4d {
            return scenario.motion.F * xs;
        };
        auto h = [&](const Eigen::Vector4d& xs) -> Eigen::VectorXd {
            return slant_measure(xs, path, d);
        };
        PathTrack& pt = c.paths[static_cast<std::size_t>(tau)];
        try {
            const auto fwd =
                smoothing::ukf_forward(f, scenario.motion.Q, h, R, meas, c.x0, c.P0, cfg.ut);
            const auto sm = smoothing::urts_backward(fwd);
            for (int k = c.birth_k; k <= K; ++k) {
                const std::size_t ki = static_cast<std::size_t>(k - 1);
                const std::size_t local = static_cast<std::size_t>(k - c.birth_k);
                pt.x[ki] = sm.x[local];
                pt.P[ki] = sm.P[local];
                try {
                    pt.y_pred[ki] = slant_measure(pt.x[ki], path, d);
                    const auto H = measurement_jacobian(pt.x[ki], path, d);
                    pt.S[ki] = H * pt.P[ki] * H.transpose() + R;
                    pt.ok[ki] = 1;
                } catch (const Error&) {
                    pt.ok[ki] = 0;
                }
            }
        } catch (const Error&) {
            fail_flags[i].store(true);
        }
    });
    for (int i = 0; i < n_tracks; ++i) {
        Candidate& c = state.tracks[static_cast<std::size_t>(i)];
        if (fail_flags[i].load() && !c.failed) {
            c.failed = true;
            c.confirmed = false;
            std::fill(c.s_hard.begin(), c.s_hard.end(), 0);
            for (auto& q : c.q_s) q = Eigen::Vector2d(1.0, 0.0);
        }
    }

    std::atomic<std::uint64_t> max_delta_bits{0};
    auto update_max = [&](double v) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof(v));
        std::uint64_t cur = max_delta_bits.load();
        for (;;) {
            double cv = 0.0;
            std::memcpy(&cv, &cur, sizeof(cv));
            if (v <= cv) return;
            if (max_delta_bits.compare_exchange_weak(cur, bits)) return;
        }
    };
    parallel_for(n_tracks, cfg.threads, [&](int i) {
        Candidate& c = state.tracks[static_cast<std::size_t>(i)];
        if (c.failed) return;
        double local_max = 0.0;
        for (int k = c.birth_k; k <= K; ++k) {
            const std::size_t ki = static_cast<std::size_t>(k - 1);
            std::vector<Eigen::Vector4d> xs;
            std::vector<Eigen::Matrix4d> Ps;
            for (int t = 0; t < n_paths; ++t) {
                xs.push_back(c.paths[static_cast<std::size_t>(t)].x[ki]);
                Ps.push_back(c.paths[static_cast<std::size_t>(t)].P[ki]);
            }
            try {
                smoothing::fuse_moments(xs, Ps, c.path_w[ki], c.x_fused[ki], c.P_fused[ki]);
            } catch (const Error&) {
                // keep previous fused moments
            }
            const Eigen::Vector4d& prev =
                prev_fused[static_cast<std::size_t>(i) * static_cast<std::size_t>(K) + ki];
            for (int n = 0; n < 4; ++n) {
                const double scale = std::max(1.0, std::abs(c.x_fused[ki][n]));
                local_max = std::max(local_max, std::abs(c.x_fused[ki][n] - prev[n]) / scale);
            }
        }
        update_max(local_max);
    });
    double max_delta = 0.0;
    {
        std::uint64_t bits = max_delta_bits.load();
        std::memcpy(&max_delta, &bits, sizeof(max_delta));
    }
    stats_row.smooth_ms = ms_since(t0);

    // --- Bethe-approximated objective, monitored only.
    double bound = 0.0;
    for (int k = 0; k < K; ++k) {
        for (int t = 0; t < n_paths; ++t) {
            const AssocResult& res = ar[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)];
            if (res.rows.empty()) continue;
            bound += res.m.E.cwiseProduct(res.chi).sum();
            bound += assoc::bethe_entropy(res.m);
        }
    }
    for (const Candidate& c : state.tracks) {
        if (c.failed) continue;
        for (int k = c.birth_k; k <= K; ++k) {
            const std::size_t ki = static_cast<std::size_t>(k - 1);
            bound += stats::entropy(c.q_s[ki]);
            bound += stats::entropy(c.path_w[ki]);
            Eigen::LDLT<Eigen::Matrix4d> ldlt(c.P_fused[ki]);
            if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all())
                bound += 0.5 * ldlt.vectorD().array().log().sum() +
                         2.0 * std::log(2.0 * M_PI * std::exp(1.0));
        }
    }
    stats_row.bound = bound;
    stats_row.max_delta = max_delta;
    state.history.push_back(stats_row);
    ++state.iterations_run;
    const bool converged = max_delta < cfg.tol;
    state.converged = converged;
    return converged;
}

TrackerResult run_tracker(const std::vector<ScanData>& scans, const ScenarioConfig& scenario,
                          const VbConfig& cfg) {
    TrackerResult result;
    const auto t_start = Clock::now();
    result.state = initialize(scans, scenario, cfg);
    result.init_ms = ms_since(t_start);
    for (int r = 0; r < cfg.max_iterations; ++r) {
        const bool converged = vb_iterate(result.state, scans, scenario, cfg);
        if (cfg.collect_history) {
            std::vector<CandidateSnapshot> snap;
            snap.reserve(result.state.tracks.size());
            for (const Candidate& c : result.state.tracks) {
                CandidateSnapshot s;
                s.id = c.id;
                s.birth_k = c.birth_k;
                s.confirmed = c.confirmed;
                s.first_active = c.first_active;
                s.last_active = c.last_active;
                s.x_fused = c.x_fused;
                s.q_s = c.q_s;
                s.s_hard = c.s_hard;
                snap.push_back(std::move(s));
            }
            result.snapshots.push_back(std::move(snap));
        }
        if (converged) break;
    }
    result.total_ms = ms_since(t_start);
    return result;
}

} // namespace jdtvb
