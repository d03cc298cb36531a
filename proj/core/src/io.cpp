#include "jdtvb/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "jdtvb/errors.hpp"
#include "jdtvb/stats.hpp"

namespace jdtvb::io {

namespace {

using nlohmann::json;

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spill(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << text;
    if (!out) throw Error("write failed: " + path);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double to_double(const std::string& s, const std::string& where) {
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        throw ParseError("bad number '" + s + "' in " + where);
    return v;
}

int to_int(const std::string& s, const std::string& where) {
    const double v = to_double(s, where);
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
        throw ParseError("expected integer, got '" + s + "' in " + where);
    return i;
}

json report_to_json(const metrics::MetricReport& r) {
    json j;
    j["tdsr"] = r.tdsr;
    j["atlr"] = r.atlr;
    j["anft"] = r.anft;
    j["aftl"] = r.aftl;
    j["rmse_r_km"] = r.rmse_r_km ? json(*r.rmse_r_km) : json(nullptr);
    j["rmse_b_mrad"] = r.rmse_b_mrad ? json(*r.rmse_b_mrad) : json(nullptr);
    j["acc_seconds"] = r.acc_seconds;
    j["n_truth"] = r.n_truth;
    j["n_confirmed"] = r.n_confirmed;
    j["n_matched"] = r.n_matched;
    j["n_false"] = r.n_false;
    j["n_matched_scans"] = r.n_matched_scans;
    return j;
}

json gate_to_json(const metrics::MatchOptions& opts) {
    json j;
    j["ground_range_km"] = opts.gate_g;
    j["bearing_mrad"] = opts.gate_theta * 1e3;
    j["rule"] = "time-averaged normalized Euclidean distance below 1 over the overlap window";
    return j;
}

} // namespace

LoadedConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config parse: ") + e.what());
    }
    try {
        LoadedConfig out;
        const json& sc = j.at("scenario");
        const double T_s = sc.at("scan_period").get<double>();
        Eigen::Matrix4d Q;
        const json& qj = sc.at("process_noise");
        if (qj.size() != 4) throw ParseError("process_noise must be 4x4");
        for (int r = 0; r < 4; ++r) {
            if (qj.at(r).size() != 4) throw ParseError("process_noise must be 4x4");
            for (int c = 0; c < 4; ++c) Q(r, c) = qj.at(r).at(c).get<double>();
        }
        out.scenario.motion = cv_model(T_s, stats::nearest_psd(Q));

        const json& gj = sc.at("geometry");
        out.scenario.geometry.d = gj.at("d").get<double>();
        out.scenario.geometry.paths =
            standard_path_table(gj.at("h_E").get<double>(), gj.at("h_F").get<double>());
        const std::size_t n_paths = out.scenario.geometry.paths.size();

        const json& rj = sc.at("measurement_noise_diag");
        out.scenario.R.clear();
        if (!rj.empty() && rj.at(0).is_array()) {
            if (rj.size() != n_paths)
                throw ParseError("measurement_noise_diag: need one triple per path");
            for (std::size_t t = 0; t < n_paths; ++t) {
                if (rj.at(t).size() != 3)
                    throw ParseError("measurement_noise_diag entries must have 3 values");
                Eigen::Vector3d diag;
                for (int c = 0; c < 3; ++c) diag[c] = rj.at(t).at(c).get<double>();
                out.scenario.R.push_back(diag.asDiagonal());
            }
        } else {
            if (rj.size() != 3) throw ParseError("measurement_noise_diag must have 3 values");
            Eigen::Vector3d diag;
            for (int c = 0; c < 3; ++c) diag[c] = rj.at(c).get<double>();
            out.scenario.R.assign(n_paths, Eigen::Matrix3d(diag.asDiagonal()));
        }

        const json& pj = sc.at("detection_prob");
        out.scenario.p_d.clear();
        if (pj.is_array()) {
            if (pj.size() != n_paths) throw ParseError("detection_prob: need one value per path");
            for (std::size_t t = 0; t < n_paths; ++t)
                out.scenario.p_d.push_back(pj.at(t).get<double>());
        } else {
            out.scenario.p_d.assign(n_paths, pj.get<double>());
        }

        out.scenario.clutter_per_scan = sc.at("clutter_per_scan").get<double>();
        const json& reg = sc.at("region");
        out.scenario.region.r_min = reg.at("r").at(0).get<double>();
        out.scenario.region.r_max = reg.at("r").at(1).get<double>();
        out.scenario.region.r_rate_min = reg.at("r_rate").at(0).get<double>();
        out.scenario.region.r_rate_max = reg.at("r_rate").at(1).get<double>();
        out.scenario.region.zeta_min = reg.at("zeta").at(0).get<double>();
        out.scenario.region.zeta_max = reg.at("zeta").at(1).get<double>();
        out.scenario.num_scans = sc.at("num_scans").get<int>();
        out.scenario.process_noise = sc.value("process_noise_enabled", true);

        out.scenario.targets.clear();
        for (const json& tj : sc.at("targets")) {
            TargetSpec t;
            const json& x0 = tj.at("x0");
            if (x0.size() != 4) throw ParseError("target x0 must have 4 entries");
            for (int c = 0; c < 4; ++c) t.x0[c] = x0.at(c).get<double>();
            t.birth_k = tj.at("birth").get<int>();
            t.death_k = tj.at("death").get<int>();
            out.scenario.targets.push_back(t);
        }

        VbConfig& tc = out.tracker;
        const json tj = j.value("tracker", json::object());
        tc.gate_prob = tj.value("gate_prob", tc.gate_prob);
        tc.tol = tj.value("vb_tol", tc.tol);
        tc.max_iterations = tj.value("max_iterations", tc.max_iterations);
        tc.delta_b = tj.value("confirm", tc.delta_b);
        tc.delta_m = tj.value("maintain", tc.delta_m);
        tc.delta_s = tj.value("prune", tc.delta_s);
        tc.prior_active = tj.value("prior_active", tc.prior_active);
        tc.stay_prob = tj.value("transition_stay", tc.stay_prob);
        tc.p_d_dormant = tj.value("dormant_detection_prob", tc.p_d_dormant);
        const std::string form = tj.value("evidence_form", std::string("active_only"));
        if (form == "active_only")
            tc.evidence_form = existence::EvidenceForm::ActiveOnly;
        else if (form == "symmetric")
            tc.evidence_form = existence::EvidenceForm::Symmetric;
        else
            throw ParseError("evidence_form must be 'active_only' or 'symmetric'");
        if (tj.contains("init")) {
            const json& ij = tj.at("init");
            if (ij.contains("gates")) {
                if (ij.at("gates").size() != 3) throw ParseError("init.gates must have 3 values");
                for (int c = 0; c < 3; ++c) tc.init_gates[c] = ij.at("gates").at(c).get<double>();
            }
            tc.init_consistency_gate = ij.value("consistency_gate", tc.init_consistency_gate);
            tc.init_theta_rate_sigma = ij.value("theta_rate_sigma", tc.init_theta_rate_sigma);
            tc.init_prune_patience = ij.value("prune_patience", tc.init_prune_patience);
            tc.init_hard_floor = ij.value("hard_floor", tc.init_hard_floor);
            tc.init_dedup_dist = ij.value("dedup_dist", tc.init_dedup_dist);
        }
        if (tj.contains("lbp")) {
            const json& lj = tj.at("lbp");
            tc.lbp.max_iters = lj.value("max_iters", tc.lbp.max_iters);
            tc.lbp.tol = lj.value("tol", tc.lbp.tol);
            tc.lbp.damping = lj.value("damping", tc.lbp.damping);
        }
        if (tj.contains("ut")) {
            const json& uj = tj.at("ut");
            tc.ut.alpha = uj.value("alpha", tc.ut.alpha);
            tc.ut.beta = uj.value("beta", tc.ut.beta);
            tc.ut.kappa = uj.value("kappa", tc.ut.kappa);
        }
        tc.threads = tj.value("threads", tc.threads);
        return out;
    } catch (const json::exception& e) {
        throw ParseError(std::string("config schema: ") + e.what());
    }
}

LoadedConfig load_config(const std::string& path) { return parse_config(slurp(path)); }

std::string serialize_config(const LoadedConfig& cfg) {
    json sc;
    sc["scan_period"] = cfg.scenario.motion.T_s;
    sc["num_scans"] = cfg.scenario.num_scans;
    json qj = json::array();
    for (int r = 0; r < 4; ++r) {
        json row = json::array();
        for (int c = 0; c < 4; ++c) row.push_back(cfg.scenario.motion.Q(r, c));
        qj.push_back(row);
    }
    sc["process_noise"] = qj;
    sc["geometry"] = {{"d", cfg.scenario.geometry.d},
                      {"h_E", cfg.scenario.geometry.paths.front().h_t},
                      {"h_F", cfg.scenario.geometry.paths.back().h_t}};
    bool shared_R = true;
    for (const auto& R : cfg.scenario.R)
        if (!R.isApprox(cfg.scenario.R.front())) shared_R = false;
    if (shared_R) {
        sc["measurement_noise_diag"] = {cfg.scenario.R.front()(0, 0),
                                        cfg.scenario.R.front()(1, 1),
                                        cfg.scenario.R.front()(2, 2)};
    } else {
        json rj = json::array();
        for (const auto& R : cfg.scenario.R) rj.push_back({R(0, 0), R(1, 1), R(2, 2)});
        sc["measurement_noise_diag"] = rj;
    }
    bool shared_pd = true;
    for (double p : cfg.scenario.p_d)
        if (p != cfg.scenario.p_d.front()) shared_pd = false;
    if (shared_pd)
        sc["detection_prob"] = cfg.scenario.p_d.front();
    else
        sc["detection_prob"] = cfg.scenario.p_d;
    sc["clutter_per_scan"] = cfg.scenario.clutter_per_scan;
    sc["region"] = {{"r", {cfg.scenario.region.r_min, cfg.scenario.region.r_max}},
                    {"r_rate", {cfg.scenario.region.r_rate_min, cfg.scenario.region.r_rate_max}},
                    {"zeta", {cfg.scenario.region.zeta_min, cfg.scenario.region.zeta_max}}};
    json tjs = json::array();
    for (const TargetSpec& t : cfg.scenario.targets) {
        json e;
        e["x0"] = {t.x0[0], t.x0[1], t.x0[2], t.x0[3]};
        e["birth"] = t.birth_k;
        e["death"] = t.death_k;
        tjs.push_back(e);
    }
    sc["targets"] = tjs;
    sc["process_noise_enabled"] = cfg.scenario.process_noise;

    const VbConfig& tc = cfg.tracker;
    json tj;
    tj["gate_prob"] = tc.gate_prob;
    tj["vb_tol"] = tc.tol;
    tj["max_iterations"] = tc.max_iterations;
    tj["confirm"] = tc.delta_b;
    tj["maintain"] = tc.delta_m;
    tj["prune"] = tc.delta_s;
    tj["prior_active"] = tc.prior_active;
    tj["transition_stay"] = tc.stay_prob;
    tj["dormant_detection_prob"] = tc.p_d_dormant;
    tj["evidence_form"] =
        tc.evidence_form == existence::EvidenceForm::Symmetric ? "symmetric" : "active_only";
    tj["init"] = {{"gates", {tc.init_gates[0], tc.init_gates[1], tc.init_gates[2]}},
                  {"consistency_gate", tc.init_consistency_gate},
                  {"theta_rate_sigma", tc.init_theta_rate_sigma},
                  {"prune_patience", tc.init_prune_patience},
                  {"hard_floor", tc.init_hard_floor},
                  {"dedup_dist", tc.init_dedup_dist}};
    tj["lbp"] = {{"max_iters", tc.lbp.max_iters}, {"tol", tc.lbp.tol}, {"damping", tc.lbp.damping}};
    tj["ut"] = {{"alpha", tc.ut.alpha}, {"beta", tc.ut.beta}, {"kappa", tc.ut.kappa}};
    tj["threads"] = tc.threads;

    json root;
    root["scenario"] = sc;
    root["tracker"] = tj;
    return root.dump(2) + "\n";
}

void save_config(const std::string& path, const LoadedConfig& cfg) {
    spill(path, serialize_config(cfg));
}

std::uint64_t config_hash(const LoadedConfig& cfg) {
    const std::string s = serialize_config(cfg);
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

void write_scans_csv(const std::string& path, const std::vector<ScanData>& scans) {
    std::ostringstream out;
    out << "# num_scans=" << scans.size() << "\n";
    out << "k,r,r_dot,zeta,provenance\n";
    for (const ScanData& scan : scans) {
        for (std::size_t j = 0; j < scan.ys.size(); ++j) {
            const auto& y = scan.ys[j];
            out << scan.k << ',' << fmt17(y[0]) << ',' << fmt17(y[1]) << ',' << fmt17(y[2]) << ',';
            const Provenance& p = scan.provenance[j];
            if (p.target < 0)
                out << "c";
            else
                out << p.target << ':' << p.path;
            out << "\n";
        }
    }
    spill(path, out.str());
}

std::vector<ScanData> read_scans_csv(const std::string& path) {
    std::istringstream in(slurp(path));
    std::string line;
    if (!std::getline(in, line) || line.rfind("# num_scans=", 0) != 0)
        throw ParseError(path + ": missing num_scans header");
    const int K = to_int(line.substr(12), path);
    if (K < 0) throw ParseError(path + ": bad num_scans");
    if (!std::getline(in, line) || line != "k,r,r_dot,zeta,provenance")
        throw ParseError(path + ": bad column header");
    std::vector<ScanData> scans(static_cast<std::size_t>(K));
    for (int k = 1; k <= K; ++k) scans[static_cast<std::size_t>(k - 1)].k = k;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 5) throw ParseError(path + ": expected 5 columns, got line '" + line + "'");
        const int k = to_int(f[0], path);
        if (k < 1 || k > K) throw ParseError(path + ": scan index out of range");
        ScanData& scan = scans[static_cast<std::size_t>(k - 1)];
        scan.ys.emplace_back(to_double(f[1], path), to_double(f[2], path), to_double(f[3], path));
        Provenance p;
        if (f[4] != "c") {
            const auto colon = f[4].find(':');
            if (colon == std::string::npos) throw ParseError(path + ": bad provenance " + f[4]);
            p.target = to_int(f[4].substr(0, colon), path);
            p.path = to_int(f[4].substr(colon + 1), path);
        }
        scan.provenance.push_back(p);
    }
    return scans;
}

void write_truth_csv(const std::string& path, const std::vector<TruthTrack>& truth) {
    std::ostringstream out;
    out << "target,k,g,g_dot,theta,theta_dot\n";
    for (const TruthTrack& t : truth) {
        for (int k = t.birth_k; k <= t.death_k(); ++k) {
            const Eigen::Vector4d& x = t.at(k);
            out << t.id << ',' << k << ',' << fmt17(x[0]) << ',' << fmt17(x[1]) << ','
                << fmt17(x[2]) << ',' << fmt17(x[3]) << "\n";
        }
    }
    spill(path, out.str());
}

std::vector<TruthTrack> read_truth_csv(const std::string& path) {
    std::istringstream in(slurp(path));
    std::string line;
    if (!std::getline(in, line) || line != "target,k,g,g_dot,theta,theta_dot")
        throw ParseError(path + ": bad column header");
    std::map<int, std::map<int, Eigen::Vector4d>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 6) throw ParseError(path + ": expected 6 columns");
        const int id = to_int(f[0], path);
        const int k = to_int(f[1], path);
        Eigen::Vector4d x(to_double(f[2], path), to_double(f[3], path), to_double(f[4], path),
                          to_double(f[5], path));
        if (!rows[id].emplace(k, x).second) throw ParseError(path + ": duplicate truth row");
    }
    std::vector<TruthTrack> out;
    for (const auto& [id, by_k] : rows) {
        TruthTrack t;
        t.id = id;
        t.birth_k = by_k.begin()->first;
        int expect = t.birth_k;
        for (const auto& [k, x] : by_k) {
            if (k != expect++) throw ParseError(path + ": truth scans not contiguous");
            t.x.push_back(x);
        }
        out.push_back(std::move(t));
    }
    return out;
}

void write_tracks_csv(const std::string& path, const VbState& state,
                      const std::vector<std::string>& path_labels) {
    std::ostringstream out;
    out << "target,path,k,g,g_dot,theta,theta_dot,P11,P22,P33,P44\n";
    auto row = [&](int id, const std::string& label, int k, const Eigen::Vector4d& x,
                   const Eigen::Matrix4d& P) {
        out << id << ',' << label << ',' << k << ',' << fmt17(x[0]) << ',' << fmt17(x[1]) << ','
            << fmt17(x[2]) << ',' << fmt17(x[3]) << ',' << fmt17(P(0, 0)) << ',' << fmt17(P(1, 1))
            << ',' << fmt17(P(2, 2)) << ',' << fmt17(P(3, 3)) << "\n";
    };
    for (const Candidate& c : state.tracks) {
        if (!c.confirmed || c.first_active < 1) continue;
        for (int k = c.first_active; k <= c.last_active; ++k) {
            const std::size_t ki = static_cast<std::size_t>(k - 1);
            for (std::size_t t = 0; t < c.paths.size(); ++t)
                row(c.id, path_labels[t], k, c.paths[t].x[ki], c.paths[t].P[ki]);
            row(c.id, "fused", k, c.x_fused[ki], c.P_fused[ki]);
        }
    }
    spill(path, out.str());
}

std::vector<metrics::EstTrack> read_est_tracks_csv(const std::string& path) {
    std::istringstream in(slurp(path));
    std::string line;
    if (!std::getline(in, line) || line != "target,path,k,g,g_dot,theta,theta_dot,P11,P22,P33,P44")
        throw ParseError(path + ": bad column header");
    std::map<int, std::map<int, Eigen::Vector4d>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 11) throw ParseError(path + ": expected 11 columns");
        if (f[1] != "fused") continue;
        const int id = to_int(f[0], path);
        const int k = to_int(f[2], path);
        Eigen::Vector4d x(to_double(f[3], path), to_double(f[4], path), to_double(f[5], path),
                          to_double(f[6], path));
        if (!rows[id].emplace(k, x).second) throw ParseError(path + ": duplicate track row");
    }
    std::vector<metrics::EstTrack> out;
    for (const auto& [id, by_k] : rows) {
        metrics::EstTrack e;
        e.id = id;
        e.first_k = by_k.begin()->first;
        int expect = e.first_k;
        for (const auto& [k, x] : by_k) {
            if (k != expect++) throw ParseError(path + ": track scans not contiguous");
            e.x.push_back(x);
        }
        e.last_k = expect - 1;
        out.push_back(std::move(e));
    }
    return out;
}

void write_existence_csv(const std::string& path, const VbState& state) {
    std::ostringstream out;
    out << "target,k,q,decision\n";
    for (const Candidate& c : state.tracks) {
        const int K = static_cast<int>(c.q_s.size());
        for (int k = c.birth_k; k <= K; ++k) {
            const std::size_t ki = static_cast<std::size_t>(k - 1);
            out << c.id << ',' << k << ',' << fmt17(c.q_s[ki][1]) << ','
                << static_cast<int>(c.s_hard[ki]) << "\n";
        }
    }
    spill(path, out.str());
}

void write_metrics_json(const std::string& path, const metrics::MonteCarloResult& mc,
                        const metrics::MatchOptions& opts) {
    json j;
    j["match_gate"] = gate_to_json(opts);
    j["aggregate"] = report_to_json(mc.aggregate);
    j["n_failed"] = mc.n_failed;
    json runs = json::array();
    for (const auto& r : mc.runs) {
        json e;
        e["seed"] = r.seed;
        e["ok"] = r.ok;
        e["iterations"] = r.iterations;
        e["converged"] = r.converged;
        if (r.ok) e["report"] = report_to_json(r.report);
        runs.push_back(e);
    }
    j["runs"] = runs;
    spill(path, j.dump(2) + "\n");
}

void write_metrics_json(const std::string& path, const metrics::MetricReport& report,
                        const metrics::MatchOptions& opts) {
    json j;
    j["match_gate"] = gate_to_json(opts);
    j["report"] = report_to_json(report);
    spill(path, j.dump(2) + "\n");
}

void write_manifest_json(const std::string& path, const RunManifest& m) {
    json j;
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(m.config_hash));
    j["config_hash"] = std::string(hex);
    j["seed"] = m.seed;
    j["iterations"] = m.iterations;
    j["converged"] = m.converged;
    j["init_ms"] = m.init_ms;
    j["total_ms"] = m.total_ms;
    j["n_candidates"] = m.n_candidates;
    j["n_confirmed"] = m.n_confirmed;
    json hist = json::array();
    for (const IterationStats& s : m.history) {
        json e;
        e["bound"] = s.bound;
        e["max_delta"] = s.max_delta;
        e["assoc_ms"] = s.assoc_ms;
        e["detect_ms"] = s.detect_ms;
        e["smooth_ms"] = s.smooth_ms;
        hist.push_back(e);
    }
    j["per_iteration"] = hist;
    spill(path, j.dump(2) + "\n");
}

} // namespace jdtvb::io
