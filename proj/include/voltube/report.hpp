#pragma once

// Experiment orchestration: JSON config ingestion with a closed model-family
// registry, the ten experiment runners behind the CLI subcommands, and
// deterministic CSV/JSON artifact writers.
//
// Determinism contract: artifacts are pure functions of (config bytes, seed);
// numbers are printed with %.17g and '\n' endings, metadata never includes
// timestamps or worker counts, so reruns at any thread count are byte-equal.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "voltube/common.hpp"
#include "voltube/curves.hpp"
#include "voltube/estimate.hpp"
#include "voltube/heston.hpp"
#include "voltube/model.hpp"
#include "voltube/pricing.hpp"
#include "voltube/simulate.hpp"
#include "voltube/variational.hpp"

namespace voltube {

using json = nlohmann::json;

struct RunConfig {
    std::size_t n_paths = 100000;
    std::size_t n_steps = 0;  // 0: use default_n_steps(T)
    std::uint64_t seed = 42;
    Scheme scheme = Scheme::euler_full_truncation;
    unsigned threads = 1;
};

struct TargetConfig {
    std::vector<double> y_list;
    std::vector<int> j_list;
    std::vector<double> strikes;
    std::vector<double> p_list;
    std::vector<double> dt_list;
    std::vector<int> scaling_p_list = {1, 2};
    std::optional<double> k_min_abs;  // wing fit window; default: half the max |k|
};

struct OutputConfig {
    std::string directory = "out";
    bool write_csv = true;
    bool write_json = true;
};

struct ExperimentConfig {
    std::string family;
    ModelSpec spec;
    std::optional<HestonParams> heston;  // set when family == "heston"
    BoundOptions bound_options;
    RunConfig run;
    TargetConfig targets;
    OutputConfig output;
    std::uint64_t config_hash = 0;
    HypothesisReport hypothesis;  // filled by verify_config
    bool hypothesis_checked = false;

    std::size_t effective_steps() const {
        return run.n_steps > 0 ? run.n_steps : default_n_steps(spec.T);
    }
};

namespace detail {

inline double require_number(const json& j, const char* where) {
    if (!j.is_number()) throw config_error(std::string("config: expected number at ") + where);
    return j.get<double>();
}

inline std::vector<double> number_list(const json& j, const char* where) {
    if (!j.is_array()) throw config_error(std::string("config: expected array at ") + where);
    std::vector<double> out;
    for (const auto& e : j) out.push_back(require_number(e, where));
    return out;
}

inline std::string format_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline std::string format_hash(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace detail

// Parses a config document.  The model-family registry is closed: "heston" and
// "bounded_skew_heston" are the only coefficient families; an optional
// "custom_bounds" block overrides the declared K and the bound-chain C2/L.
inline ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw config_error(std::string("config: invalid JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    cfg.config_hash = fnv1a64(text);
    try {
        const json& model = j.at("model");
        cfg.family = model.at("family").get<std::string>();
        const double kappa = detail::require_number(model.at("kappa"), "model.kappa");
        const double theta = detail::require_number(model.at("theta"), "model.theta");
        const double xi = detail::require_number(model.at("xi"), "model.xi");
        const double rho = detail::require_number(model.at("rho"), "model.rho");
        const double V0 = detail::require_number(model.at("V0"), "model.V0");
        const double T = detail::require_number(model.at("T"), "model.T");
        if (cfg.family == "heston") {
            cfg.spec = make_heston(kappa, theta, xi, rho, V0, T);
            cfg.heston = HestonParams{kappa, theta, xi, rho, V0, T};
        } else if (cfg.family == "bounded_skew_heston") {
            const double eta0 = detail::require_number(model.at("eta0"), "model.eta0");
            const double eps = detail::require_number(model.at("eps"), "model.eps");
            cfg.spec = make_bounded_skew_heston(kappa, theta, xi, rho, V0, T, eta0, eps);
        } else {
            throw config_error("config: unknown model family '" + cfg.family + "'");
        }
        if (j.contains("custom_bounds")) {
            const json& cb = j.at("custom_bounds");
            if (cb.contains("K")) {
                cfg.spec.K = detail::require_number(cb.at("K"), "custom_bounds.K");
                cfg.spec.check();  // keeps K > 1 enforced
            }
            if (cb.contains("C2"))
                cfg.bound_options.C2 = detail::require_number(cb.at("C2"), "custom_bounds.C2");
            if (cb.contains("L"))
                cfg.bound_options.L_override =
                    detail::require_number(cb.at("L"), "custom_bounds.L");
        }
        if (j.contains("run")) {
            const json& r = j.at("run");
            if (r.contains("n_paths")) cfg.run.n_paths = r.at("n_paths").get<std::size_t>();
            if (r.contains("n_steps")) cfg.run.n_steps = r.at("n_steps").get<std::size_t>();
            if (r.contains("seed")) cfg.run.seed = r.at("seed").get<std::uint64_t>();
            if (r.contains("scheme"))
                cfg.run.scheme = scheme_from_name(r.at("scheme").get<std::string>());
            if (r.contains("threads")) cfg.run.threads = r.at("threads").get<unsigned>();
        }
        if (j.contains("targets")) {
            const json& t = j.at("targets");
            if (t.contains("y_list")) cfg.targets.y_list = detail::number_list(t.at("y_list"), "targets.y_list");
            if (t.contains("j_list")) {
                for (const auto& e : t.at("j_list"))
                    cfg.targets.j_list.push_back(e.get<int>());
            }
            if (t.contains("strikes"))
                cfg.targets.strikes = detail::number_list(t.at("strikes"), "targets.strikes");
            if (t.contains("p_list"))
                cfg.targets.p_list = detail::number_list(t.at("p_list"), "targets.p_list");
            if (t.contains("dt_list"))
                cfg.targets.dt_list = detail::number_list(t.at("dt_list"), "targets.dt_list");
            if (t.contains("scaling_p_list")) {
                cfg.targets.scaling_p_list.clear();
                for (const auto& e : t.at("scaling_p_list"))
                    cfg.targets.scaling_p_list.push_back(e.get<int>());
            }
            if (t.contains("k_min_abs"))
                cfg.targets.k_min_abs = detail::require_number(t.at("k_min_abs"), "targets.k_min_abs");
        }
        if (j.contains("output")) {
            const json& o = j.at("output");
            if (o.contains("directory")) cfg.output.directory = o.at("directory").get<std::string>();
            if (o.contains("formats")) {
                cfg.output.write_csv = false;
                cfg.output.write_json = false;
                for (const auto& f : o.at("formats")) {
                    const auto name = f.get<std::string>();
                    if (name == "csv") cfg.output.write_csv = true;
                    else if (name == "json") cfg.output.write_json = true;
                    else throw config_error("config: unknown output format '" + name + "'");
                }
            }
        }
    } catch (const json::exception& e) {
        throw config_error(std::string("config: schema violation: ") + e.what());
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw config_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

// Samples the regularity/growth hypotheses.  Violations throw unless
// allow_unverified; either way the report is retained for output metadata.
inline void verify_config(ExperimentConfig& cfg, bool allow_unverified = false,
                          std::size_t samples = 20000) {
    cfg.hypothesis = validate_hypotheses(cfg.spec, samples, cfg.run.seed);
    cfg.hypothesis_checked = true;
    if (!cfg.hypothesis.passes() && !allow_unverified) {
        throw hypothesis_error(
            "model fails hypothesis sampling: " +
            std::to_string(cfg.hypothesis.lipschitz_violations.size()) + " Lipschitz and " +
            std::to_string(cfg.hypothesis.bound_violations.size()) +
            " bound/growth violations recorded (rerun with --allow-unverified to proceed)");
    }
}

// Deterministic CSV writer: '#'-prefixed metadata preamble, mandatory header
// row, %.17g numbers, '\n' endings.
class CsvWriter {
  public:
    explicit CsvWriter(const std::filesystem::path& path) : os_(path, std::ios::binary) {
        if (!os_) throw config_error("cannot open for writing: " + path.string());
    }

    void comment(const std::string& key, const std::string& value) {
        os_ << "# " << key << ": " << value << "\n";
    }

    void header(const std::vector<std::string>& cols) {
        for (std::size_t i = 0; i < cols.size(); ++i)
            os_ << (i ? "," : "") << cols[i];
        os_ << "\n";
    }

    void row(const std::vector<double>& vals) {
        for (std::size_t i = 0; i < vals.size(); ++i)
            os_ << (i ? "," : "") << detail::format_g17(vals[i]);
        os_ << "\n";
    }

    void close() { os_.close(); }

  private:
    std::ofstream os_;
};

namespace detail {

// Shared metadata block: every artifact names the config hash, seed, version,
// scheme, and the unpinned constants C2/L so no report hides them.
inline void write_preamble(CsvWriter& w, const ExperimentConfig& cfg) {
    const BoundConstants b = tech_constants(cfg.spec, cfg.bound_options);
    w.comment("config_hash", format_hash(cfg.config_hash));
    w.comment("seed", std::to_string(cfg.run.seed));
    w.comment("version", kVersion);
    w.comment("scheme", scheme_name(cfg.run.scheme));
    w.comment("C2", format_g17(b.C2));
    w.comment("L", format_g17(b.L));
    w.comment("family", cfg.family);
    w.comment("model", cfg.spec.tag);
    w.comment("n_paths", std::to_string(cfg.run.n_paths));
    w.comment("n_steps", std::to_string(cfg.effective_steps()));
    if (cfg.hypothesis_checked && !cfg.hypothesis.passes()) {
        w.comment("hypothesis_violations",
                  std::to_string(cfg.hypothesis.lipschitz_violations.size() +
                                 cfg.hypothesis.bound_violations.size()));
    }
}

inline json metadata_json(const ExperimentConfig& cfg) {
    const BoundConstants b = tech_constants(cfg.spec, cfg.bound_options);
    json m;
    m["config_hash"] = format_hash(cfg.config_hash);
    m["seed"] = cfg.run.seed;
    m["version"] = kVersion;
    m["scheme"] = scheme_name(cfg.run.scheme);
    m["C2"] = b.C2;
    m["L"] = b.L;
    m["family"] = cfg.family;
    m["model"] = cfg.spec.tag;
    m["n_paths"] = cfg.run.n_paths;
    m["n_steps"] = cfg.effective_steps();
    if (cfg.hypothesis_checked && !cfg.hypothesis.passes()) {
        m["hypothesis_violations"] = cfg.hypothesis.lipschitz_violations.size() +
                                     cfg.hypothesis.bound_violations.size();
    }
    return m;
}

inline std::filesystem::path ensure_outdir(const ExperimentConfig& cfg) {
    std::filesystem::path dir(cfg.output.directory);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw config_error("cannot open for writing: " + path.string());
    os << j.dump(2) << "\n";
}

// Terminal-state collection through the chunked driver (path order preserved
// by in-order chunk merging).
struct TerminalAcc {
    std::vector<double> x, v;
    void merge(const TerminalAcc& o) {
        x.insert(x.end(), o.x.begin(), o.x.end());
        v.insert(v.end(), o.v.begin(), o.v.end());
    }
};

inline TerminalAcc collect_terminals(const ExperimentConfig& cfg) {
    return simulate_chunked<TerminalAcc>(
        cfg.spec, cfg.run.scheme, 0.0, cfg.spec.V0, 0.0, cfg.run.n_paths, cfg.effective_steps(),
        cfg.run.seed, cfg.run.threads,
        [](TerminalAcc& acc, std::size_t, const std::vector<double>& xs,
           const std::vector<double>& vs) {
            acc.x.push_back(xs.back());
            acc.v.push_back(vs.back());
        });
}

// Wraps terminal values as a single-knot batch so terminal estimators
// (tails, small balls, moments, KDE, smiles) can run without path storage.
inline PathBatch terminal_batch(const ExperimentConfig& cfg, TerminalAcc&& term) {
    PathBatch b;
    b.n_paths = term.x.size();
    b.n_steps = 0;
    b.t0 = 0.0;
    b.T = cfg.spec.T;
    b.dt = cfg.spec.T;
    b.scheme = cfg.run.scheme;
    b.seed = cfg.run.seed;
    b.spec_hash = cfg.spec.hash();
    b.xs = std::move(term.x);
    b.vs = std::move(term.v);
    return b;
}

inline json log_bound_json(const LogBound& b) {
    return json{{"log_const", b.log_const}, {"log_var", b.log_var}, {"log_neg", b.log_neg()}};
}

}  // namespace detail

// --- subcommand runners -----------------------------------------------------

// constants: the full bound-constant chain in log domain, plus thresholds and
// per-target exponents.
inline json run_constants(const ExperimentConfig& cfg) {
    std::optional<double> y;
    if (!cfg.targets.y_list.empty()) y = cfg.targets.y_list.front();
    const BoundConstants b = bound_constants(cfg.spec, cfg.bound_options, y);
    const YThreshold thr = y_threshold(cfg.spec.V0, cfg.spec.T);
    json out;
    out["metadata"] = detail::metadata_json(cfg);
    json c;
    c["R"] = b.R;
    c["c"] = b.c;
    c["lambda"] = b.lambda;
    c["gamma"] = b.gamma;
    c["C2"] = b.C2;
    c["L"] = b.L;
    c["L_T"] = b.L_T;
    c["Gamma_T"] = b.Gamma_T;
    c["Gamma"] = b.Gamma;
    c["mu"] = b.mu;
    c["log_q_mu"] = b.log_q_mu;
    c["phi"] = b.phi;
    c["log_Q"] = b.log_Q;
    c["log_c_star"] = b.log_c_star;
    c["log_c_T"] = b.log_c_T;
    c["log_d_T"] = b.log_d_T;
    c["log_e_T"] = b.log_e_T;
    c["log_ratio_d_c"] = b.log_ratio_d_c;
    c["log_ratio_e_c"] = b.log_ratio_e_c;
    c["rho_bar"] = b.rho_bar;
    c["epsilon0"] = b.epsilon0;
    c["q_sup"] = b.q_sup;
    c["log_q_sup"] = b.log_q_sup;
    c["delta0"] = b.delta0;
    if (y) c["h"] = b.h;
    out["constants"] = c;
    out["thresholds"] = {{"tube_bound", thr.tube_bound}, {"tail_extra", thr.tail_extra}};
    json per_y = json::array();
    for (double yy : cfg.targets.y_list) {
        json e;
        e["y"] = yy;
        if (std::abs(yy) > thr.tube_bound) {
            e["theorem"] = detail::log_bound_json(theorem_log_bound(yy, cfg.spec, cfg.bound_options));
        } else {
            e["theorem"] = nullptr;  // below the certified threshold
        }
        per_y.push_back(e);
    }
    out["targets"] = per_y;
    if (cfg.output.write_json) {
        detail::write_json_file(detail::ensure_outdir(cfg) / "constants.json", out);
    }
    return out;
}

// curves: one CSV per target y with the curve triple and per-knot linear
// Euler-Lagrange residual of u; nonlinear residual of v~ in the summary.
inline json run_curves(const ExperimentConfig& cfg) {
    if (cfg.targets.y_list.empty()) throw config_error("curves: targets.y_list is required");
    const auto dir = detail::ensure_outdir(cfg);
    const std::size_t steps = std::max<std::size_t>(cfg.effective_steps(), 16);
    json out;
    out["metadata"] = detail::metadata_json(cfg);
    json files = json::array();
    for (std::size_t i = 0; i < cfg.targets.y_list.size(); ++i) {
        const double y = cfg.targets.y_list[i];
        const CurveTriple c = optimal_curves(y, cfg.spec, steps);
        const double h = c.T / static_cast<double>(steps);
        double max_resid_u = 0.0;
        std::vector<double> resid(steps + 1, std::numeric_limits<double>::quiet_NaN());
        for (std::size_t k = 1; k < steps; ++k) {
            const double upp = (c.u[k + 1] - 2.0 * c.u[k] + c.u[k - 1]) / (h * h);
            resid[k] = upp - c.u[k] / 4.0;
            max_resid_u = std::max(max_resid_u, std::abs(resid[k]));
        }
        const double resid_v = el_residual(DiscreteCurve{c.grid, c.v_tilde});
        std::string name = "curves_" + std::to_string(i) + ".csv";
        if (cfg.output.write_csv) {
            CsvWriter w(dir / name);
            detail::write_preamble(w, cfg);
            w.comment("y", detail::format_g17(y));
            w.header({"t", "u", "u_prime", "x_tilde", "v_tilde", "r_tilde", "el_residual_u"});
            for (std::size_t k = 0; k <= steps; ++k) {
                w.row({c.grid[k], c.u[k], c.u_prime[k], c.x_tilde[k], c.v_tilde[k], c.r_tilde[k],
                       resid[k]});
            }
        }
        files.push_back({{"y", y},
                         {"file", name},
                         {"max_el_residual_u", max_resid_u},
                         {"el_residual_v_rel", resid_v}});
    }
    out["curves"] = files;
    if (cfg.output.write_json) detail::write_json_file(dir / "curves_summary.json", out);
    return out;
}

// variational: damped-Newton minimization against the analytic curve.
inline json run_variational(const ExperimentConfig& cfg) {
    if (cfg.targets.y_list.empty()) throw config_error("variational: targets.y_list is required");
    json out;
    out["metadata"] = detail::metadata_json(cfg);
    json rows = json::array();
    constexpr std::size_t kKnots = 200;
    for (double y : cfg.targets.y_list) {
        const CurveTriple c = optimal_curves(y, cfg.spec, kKnots);
        const double analytic = action(DiscreteCurve{c.grid, c.v_tilde});
        const MinimizeResult r = minimize_action(cfg.spec.V0, c.y_bar, cfg.spec.T, kKnots);
        const double numeric = action(r.curve);
        rows.push_back({{"y", y},
                        {"action_numeric", numeric},
                        {"action_analytic", analytic},
                        {"rel_gap", (numeric - analytic) / analytic},
                        {"newton_steps", r.newton_steps},
                        {"converged", r.converged},
                        {"grad_max", r.grad_max}});
    }
    out["variational"] = rows;
    if (cfg.output.write_json)
        detail::write_json_file(detail::ensure_outdir(cfg) / "variational.json", out);
    return out;
}

namespace detail {

// Per-chunk hit counters for a family of events evaluated on each path.
struct MultiHit {
    std::vector<std::size_t> hits;
    std::size_t n = 0;
    void merge(const MultiHit& o) {
        if (hits.size() < o.hits.size()) hits.resize(o.hits.size(), 0);
        for (std::size_t i = 0; i < o.hits.size(); ++i) hits[i] += o.hits[i];
        n += o.n;
    }
};

}  // namespace detail

// tube: grid-restricted tube-staying estimates for each target y, against the
// headline and direct exponent bounds.
inline json run_tube(const ExperimentConfig& cfg) {
    if (cfg.targets.y_list.empty()) throw config_error("tube: targets.y_list is required");
    const std::size_t steps = cfg.effective_steps();
    std::vector<CurveTriple> curves;
    std::vector<LogBound> theorems, raws;
    for (double y : cfg.targets.y_list) {
        const CurveTriple c = optimal_curves(y, cfg.spec, steps);
        const BoundConstants b = bound_constants(cfg.spec, cfg.bound_options, y);
        theorems.push_back(theorem_log_bound(y, cfg.spec, cfg.bound_options));
        raws.push_back(raw_tube_log_bound(c, b, cfg.spec.rho_bar()));
        curves.push_back(std::move(c));
    }
    const double dt = cfg.spec.T / static_cast<double>(steps);
    const auto counts = simulate_chunked<detail::MultiHit>(
        cfg.spec, cfg.run.scheme, 0.0, cfg.spec.V0, 0.0, cfg.run.n_paths, steps, cfg.run.seed,
        cfg.run.threads,
        [&](detail::MultiHit& acc, std::size_t, const std::vector<double>& xs,
            const std::vector<double>& vs) {
            if (acc.hits.size() < curves.size()) acc.hits.resize(curves.size(), 0);
            ++acc.n;
            for (std::size_t i = 0; i < curves.size(); ++i)
                if (path_in_tube(curves[i], 0.0, dt, xs, vs)) ++acc.hits[i];
        });
    json out;
    out["metadata"] = detail::metadata_json(cfg);
    out["estimator"] = "grid-restricted";
    json rows = json::array();
    const auto dir = detail::ensure_outdir(cfg);
    std::optional<CsvWriter> w;
    if (cfg.output.write_csv) {
        w.emplace(dir / "tube.csv");
        detail::write_preamble(*w, cfg);
        w->comment("estimator", "grid-restricted");
        w->header({"y", "p_hat", "ci_low", "ci_high", "theorem_log_bound", "raw_log_bound",
                   "theorem_log_neg", "raw_log_neg", "hits"});
    }
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const std::size_t hits = i < counts.hits.size() ? counts.hits[i] : 0;
        const MCEstimate e = clopper_pearson(hits, counts.n);
        const bool gate = hits >= 1 && std::log(e.ci_low) > theorems[i].log_value();
        if (w)
            w->row({cfg.targets.y_list[i], e.p_hat, e.ci_low, e.ci_high, theorems[i].log_value(),
                    raws[i].log_value(), theorems[i].log_neg(), raws[i].log_neg(),
                    static_cast<double>(hits)});
        rows.push_back({{"y", cfg.targets.y_list[i]},
                        {"p_hat", e.p_hat},
                        {"ci_low", e.ci_low},
                        {"ci_high", e.ci_high},
                        {"hits", hits},
                        {"theorem", detail::log_bound_json(theorems[i])},
                        {"raw", detail::log_bound_json(raws[i])},
                        {"gate_pass", gate}});
    }
    out["tube"] = rows;
    if (cfg.output.write_json) detail::write_json_file(dir / "tube_summary.json", out);
    return out;
}

// tails: terminal tail estimates per y, the tail-slope fit, bound gates, and
// the Fourier oracle column for the Heston family.
inline json run_tails(const ExperimentConfig& cfg) {
    if (cfg.targets.y_list.empty()) throw config_error("tails: targets.y_list is required");
    const PathBatch batch = detail::terminal_batch(cfg, detail::collect_terminals(cfg));
    const YThreshold thr = y_threshold(cfg.spec.V0, cfg.spec.T);
    const double tail_need = std::max(thr.tube_bound, thr.tail_extra);
    json out;
    out["metadata"] = detail::metadata_json(cfg);
    const auto dir = detail::ensure_outdir(cfg);
    std::optional<CsvWriter> w;
    if (cfg.output.write_csv) {
        w.emplace(dir / "tails.csv");
        detail::write_preamble(*w, cfg);
        w->header({"y", "up_p_hat", "up_ci_low", "up_ci_high", "down_p_hat", "down_ci_low",
                   "down_ci_high", "oracle_tail", "oracle_tilted", "bound_log_value",
                   "bound_log_neg", "up_hits"});
    }
    std::vector<std::pair<double, MCEstimate>> up_points;
    std::vector<double> oracle_logs;  // log oracle tails on the same grid (when available)
    json rows = json::array();
    for (double y : cfg.targets.y_list) {
        const auto [up, down] = terminal_tail(batch, y);
        up_points.emplace_back(y, up);
        double oracle = std::numeric_limits<double>::quiet_NaN();
        double tilted = 0.0;
        if (cfg.heston) {
            const double plain = tail(*cfg.heston, y);
            tilted = plain >= 1e-8 ? 0.0 : 1.0;
            oracle = tilted > 0.0 ? tail_tilted(*cfg.heston, y) : plain;
            oracle_logs.push_back(std::log(oracle));
        }
        double bound_log_value = std::numeric_limits<double>::quiet_NaN();
        double bound_log_neg = std::numeric_limits<double>::quiet_NaN();
        json bound_json = nullptr;
        bool gate = true;
        if (y > tail_need) {
            const TailBound tb = cdf_tail_log_bound(y, cfg.spec, cfg.bound_options);
            bound_log_value = tb.bound.log_value();
            bound_log_neg = tb.bound.log_neg();
            bound_json = detail::log_bound_json(tb.bound);
            gate = up.hits >= 1 && std::log(up.ci_low) > bound_log_value;
        }
        if (w)
            w->row({y, up.p_hat, up.ci_low, up.ci_high, down.p_hat, down.ci_low, down.ci_high,
                    oracle, tilted, bound_log_value, bound_log_neg,
                    static_cast<double>(up.hits)});
        rows.push_back({{"y", y},
                        {"up",
                         {{"p_hat", up.p_hat},
                          {"ci_low", up.ci_low},
                          {"ci_high", up.ci_high},
                          {"hits", up.hits}}},
                        {"down",
                         {{"p_hat", down.p_hat},
                          {"ci_low", down.ci_low},
                          {"ci_high", down.ci_high},
                          {"hits", down.hits}}},
                        {"oracle_tail", std::isnan(oracle) ? json(nullptr) : json(oracle)},
                        {"bound", bound_json},
                        {"gate_pass", gate}});
    }
    out["tails"] = rows;
    try {
        const SlopeFit fit = tail_slope(up_points);
        out["mc_slope"] = {{"slope", fit.slope},
                           {"stderr", fit.slope_stderr},
                           {"r_squared", fit.r_squared},
                           {"n_points", fit.points.size()},
                           {"excluded_y", fit.excluded_y}};
        if (cfg.heston) {
            // Oracle slope over the same qualifying y set.
            std::vector<double> xs, ys;
            for (const auto& [y, est] : up_points) {
                if (est.hits >= 30) {
                    xs.push_back(y);
                    ys.push_back(std::log(tail_tilted(*cfg.heston, y)));
                }
            }
            const LinearFit of = fit_line(xs, ys);
            out["oracle_slope"] = {{"slope", of.slope}, {"stderr", of.slope_stderr}};
        }
    } catch (const std::invalid_argument&) {
        out["mc_slope"] = nullptr;  // too few qualifying points to fit
    }
    if (cfg.output.write_json) detail::write_json_file(dir / "tails_summary.json", out);
    return out;
}

// smallballs: nested-radius terminal ball hits over (y, j) with chain bounds.
inline json run_smallballs(const ExperimentConfig& cfg) {
    if (cfg.targets.y_list.empty()) throw config_error("smallballs: targets.y_list is required");
    std::vector<int> js = cfg.targets.j_list;
    if (js.empty()) js = {0, 1, 2};
    const PathBatch batch = detail::terminal_batch(cfg, detail::collect_terminals(cfg));
    const YThreshold thr = y_threshold(cfg.spec.V0, cfg.spec.T);
    const double need = std::max({thr.tube_bound, 16.0, thr.tail_extra});
    json out;
    out["metadata"] = detail::metadata_json(cfg);
    const auto dir = detail::ensure_outdir(cfg);
    std::optional<CsvWriter> w;
    if (cfg.output.write_csv) {
        w.emplace(dir / "smallballs.csv");
        detail::write_preamble(*w, cfg);
        w->header({"y", "j", "radius", "p_hat", "ci_low", "ci_high", "bound_log_value",
                   "bound_log_neg", "hits"});
    }
    json rows = json::array();
    for (double y : cfg.targets.y_list) {
        for (int jj : js) {
            const double radius = std::pow(std::sqrt(std::abs(y)), 1.0 - jj);
            const MCEstimate e = small_ball(batch, y, cfg.spec.V0, radius);
            double bound_log_value = std::numeric_limits<double>::quiet_NaN();
            double bound_log_neg = std::numeric_limits<double>::quiet_NaN();
            json bound_json = nullptr;
            bool gate = true;
            if (std::abs(y) > need) {
                const SmallBallChain ch = small_ball_log_bound(y, jj, cfg.spec, cfg.bound_options);
                bound_log_value = ch.total.log_value();
                bound_log_neg = ch.total.log_neg();
                bound_json = detail::log_bound_json(ch.total);
                gate = e.hits >= 1 && std::log(e.ci_low) > bound_log_value;
            }
            if (w)
                w->row({y, static_cast<double>(jj), radius, e.p_hat, e.ci_low, e.ci_high,
                        bound_log_value, bound_log_neg, static_cast<double>(e.hits)});
            rows.push_back({{"y", y},
                            {"j", jj},
                            {"radius", radius},
                            {"p_hat", e.p_hat},
                            {"ci_low", e.ci_low},
                            {"ci_high", e.ci_high},
                            {"hits", e.hits},
                            {"bound", bound_json},
                            {"gate_pass", gate}});
        }
    }
    out["smallballs"] = rows;
    if (cfg.output.write_json) detail::write_json_file(dir / "smallballs_summary.json", out);
    return out;
}

// wings: MC smile, wing-slope fits, certified floors, and (Heston) the
// moment-formula comparison against oracle critical moments.
inline json run_wings(const ExperimentConfig& cfg) {
    if (cfg.targets.strikes.size() < 3) throw config_error("wings: targets.strikes is required");
    const PathBatch batch = detail::terminal_batch(cfg, detail::collect_terminals(cfg));
    const McSmile smile = smile_from_mc(batch, cfg.targets.strikes);
    double kmax = 0.0;
    for (double k : cfg.targets.strikes) kmax = std::max(kmax, std::abs(k));
    const double k_min_abs = cfg.targets.k_min_abs.value_or(0.5 * kmax);
    json out;
    out["metadata"] = detail::metadata_json(cfg);
    const auto dir = detail::ensure_outdir(cfg);
    std::optional<CsvWriter> w;
    if (cfg.output.write_csv) {
        w.emplace(dir / "wings.csv");
        detail::write_preamble(*w, cfg);
        w->header({"k", "implied_vol", "total_variance"});
    }
    for (const auto& pt : smile.points) {
        if (w) w->row({pt.k, pt.implied_vol, pt.T * pt.implied_vol * pt.implied_vol});
    }
    json dropped = json::array();
    for (const auto& [k, reason] : smile.dropped) dropped.push_back({{"k", k}, {"reason", reason}});
    out["dropped"] = dropped;
    try {
        const WingSlopes ws = wing_slopes(smile.points, k_min_abs);
        out["wing_slopes"] = {{"right", ws.right_slope},
                              {"left", ws.left_slope},
                              {"right_stderr", ws.right_fit.slope_stderr},
                              {"left_stderr", ws.left_fit.slope_stderr},
                              {"k_min_abs", k_min_abs},
                              {"right_window", {ws.right_window_lo, ws.right_window_hi}},
                              {"left_window", {ws.left_window_lo, ws.left_window_hi}}};
    } catch (const std::invalid_argument& e) {
        out["wing_slopes"] = nullptr;
        out["wing_slopes_error"] = e.what();
    }
    {
        // Certified wing floors lee_phi(c_T psi - 1) and lee_phi(c_T psi): the
        // ceiling c_T psi(rho_bar) is astronomically large, so the floors are
        // reported in log domain (they are doubles' zero in linear scale).
        const BoundConstants b = bound_constants(cfg.spec, cfg.bound_options);
        const double log_ceiling = b.log_c_T + log_psi(cfg.spec.rho_bar());
        out["floors"] = {{"log_p_ceiling", log_ceiling},
                         {"log_right_floor", detail::log_lee_phi_from_log(log_ceiling)},
                         {"log_left_floor", detail::log_lee_phi_from_log(log_ceiling)}};
    }
    if (cfg.heston) {
        const CriticalMoments cm = critical_moment(*cfg.heston);
        json oracle;
        oracle["p_star"] = cm.p_star;
        oracle["q_star"] = cm.q_star;
        oracle["p_capped"] = cm.p_capped;
        oracle["q_capped"] = cm.q_capped;
        oracle["lee_right"] = lee_phi(cm.p_star - 1.0);
        oracle["lee_left"] = lee_phi(cm.q_star);
        out["oracle"] = oracle;
    }
    if (cfg.output.write_json) detail::write_json_file(dir / "wings_summary.json", out);
    return out;
}

// moments: exponential-moment scan with the explosion diagnostic and, for
// Heston, the transform-side values and critical moments.
inline json run_moments(const ExperimentConfig& cfg) {
    if (cfg.targets.p_list.empty()) throw config_error("moments: targets.p_list is required");
    const PathBatch batch = detail::terminal_batch(cfg, detail::collect_terminals(cfg));
    json out;
    out["metadata"] = detail::metadata_json(cfg);
    const auto dir = detail::ensure_outdir(cfg);
    std::optional<CsvWriter> w;
    if (cfg.output.write_csv) {
        w.emplace(dir / "moments.csv");
        detail::write_preamble(*w, cfg);
        w->header({"p", "estimate", "max_share", "flagged", "oracle_value"});
    }
    json rows = json::array();
    for (double p : cfg.targets.p_list) {
        const ExpMoment m = exp_moment(batch, p);
        double oracle = std::numeric_limits<double>::quiet_NaN();
        if (cfg.heston && explosion_time(*cfg.heston, p) > cfg.heston->T) {
            oracle = std::exp(log_mgf(*cfg.heston, cplx(p, 0.0)).real());
        }
        if (w) w->row({p, m.estimate, m.max_share, m.flagged ? 1.0 : 0.0, oracle});
        rows.push_back({{"p", p},
                        {"estimate", m.estimate},
                        {"max_share", m.max_share},
                        {"flagged", m.flagged},
                        {"oracle_value", std::isnan(oracle) ? json(nullptr) : json(oracle)}});
    }
    out["moments"] = rows;
    if (cfg.heston) {
        const CriticalMoments cm = critical_moment(*cfg.heston);
        out["critical_moments"] = {{"p_star", cm.p_star},
                                   {"q_star", cm.q_star},
                                   {"p_capped", cm.p_capped},
                                   {"q_capped", cm.q_capped}};
    }
    if (cfg.output.write_json) detail::write_json_file(dir / "moments_summary.json", out);
    return out;
}

// scaling: variance-increment moment scaling in dt.
inline json run_scaling(const ExperimentConfig& cfg) {
    if (cfg.targets.dt_list.size() < 3) throw config_error("scaling: targets.dt_list (>=3) is required");
    json out;
    out["metadata"] = detail::metadata_json(cfg);
    const auto dir = detail::ensure_outdir(cfg);
    std::optional<CsvWriter> w;
    if (cfg.output.write_csv) {
        w.emplace(dir / "scaling.csv");
        detail::write_preamble(*w, cfg);
        w->header({"p", "log_dt", "log_moment"});
    }
    json rows = json::array();
    for (int p : cfg.targets.scaling_p_list) {
        const IncrementScaling s = increment_scaling(cfg.spec, p, cfg.targets.dt_list,
                                                     cfg.run.n_paths, cfg.run.seed, cfg.run.scheme);
        if (w)
            for (const auto& [ld, lm] : s.points) w->row({static_cast<double>(p), ld, lm});
        rows.push_back({{"p", p},
                        {"fitted_exponent", s.fitted_exponent},
                        {"stderr", s.slope_stderr},
                        {"r_squared", s.r_squared}});
    }
    out["scaling"] = rows;
    if (cfg.output.write_json) detail::write_json_file(dir / "scaling_summary.json", out);
    return out;
}

// density: terminal KDE with the Heston oracle overlay and a tail slope fit.
inline json run_density(const ExperimentConfig& cfg) {
    const PathBatch batch = detail::terminal_batch(cfg, detail::collect_terminals(cfg));
    std::vector<double> grid = cfg.targets.y_list;
    if (grid.empty()) {
        // Default grid: mean +- 4 sample standard deviations, 41 knots.
        double mean = 0.0;
        for (std::size_t p = 0; p < batch.n_paths; ++p) mean += batch.x(p, 0);
        mean /= static_cast<double>(batch.n_paths);
        double var = 0.0;
        for (std::size_t p = 0; p < batch.n_paths; ++p) {
            const double d = batch.x(p, 0) - mean;
            var += d * d;
        }
        var /= static_cast<double>(batch.n_paths - 1);
        const double sd = std::sqrt(var);
        for (int i = 0; i <= 40; ++i)
            grid.push_back(mean - 4.0 * sd + 8.0 * sd * static_cast<double>(i) / 40.0);
    }
    const auto kde = kde_log_density(batch, grid);
    json out;
    out["metadata"] = detail::metadata_json(cfg);
    const auto dir = detail::ensure_outdir(cfg);
    std::optional<CsvWriter> w;
    if (cfg.output.write_csv) {
        w.emplace(dir / "density.csv");
        detail::write_preamble(*w, cfg);
        w->header({"y", "kde_log_density", "oracle_log_density"});
    }
    std::vector<double> fit_y, fit_ld;
    double mean_x = 0.0;
    for (std::size_t p = 0; p < batch.n_paths; ++p) mean_x += batch.x(p, 0);
    mean_x /= static_cast<double>(batch.n_paths);
    for (const auto& [y, ld] : kde) {
        double oracle = std::numeric_limits<double>::quiet_NaN();
        if (cfg.heston) {
            const DensityPoint dp = density_at(*cfg.heston, y);
            if (dp.value > 0.0) oracle = std::log(dp.value);
        }
        if (w) w->row({y, ld, oracle});
        if (std::isfinite(ld) && y > mean_x) {
            fit_y.push_back(y);
            fit_ld.push_back(ld);
        }
    }
    if (fit_y.size() >= 3) {
        const LinearFit f = fit_line(fit_y, fit_ld);
        out["tail_slope"] = {{"slope", f.slope},
                             {"stderr", f.slope_stderr},
                             {"window", {fit_y.front(), fit_y.back()}},
                             {"n_points", fit_y.size()}};
    } else {
        out["tail_slope"] = nullptr;
    }
    if (cfg.output.write_json) detail::write_json_file(dir / "density_summary.json", out);
    return out;
}

// Dispatcher used by the CLI.
inline json run_subcommand(const std::string& name, const ExperimentConfig& cfg) {
    if (name == "constants") return run_constants(cfg);
    if (name == "curves") return run_curves(cfg);
    if (name == "variational") return run_variational(cfg);
    if (name == "tube") return run_tube(cfg);
    if (name == "tails") return run_tails(cfg);
    if (name == "smallballs") return run_smallballs(cfg);
    if (name == "wings") return run_wings(cfg);
    if (name == "moments") return run_moments(cfg);
    if (name == "scaling") return run_scaling(cfg);
    if (name == "density") return run_density(cfg);
    throw config_error("unknown subcommand: " + name);
}

}  // namespace voltube
