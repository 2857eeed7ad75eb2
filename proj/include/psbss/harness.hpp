#pragma once

// Monte-Carlo experiment runner: flat key=value experiment configs, sweep
// axes over the reference parameter set, paired model comparisons on shared
// channel draws, and versioned CSV emitters for the figure families.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "psbss/driver.hpp"

namespace psbss {

/// What the sweep varies. Power axes take dBm values, error axes take the
/// relative radii directly, `antennas` takes integer counts.
enum class SweepAxis {
    traffic,           // busy prior mu/lambda
    sbs_power,         // P_sbs, dBm
    interference_cap,  // per-PU cap, dBm
    rate_floor,        // per-SU floor, bits/s/Hz
    pu_interference,   // mean PU-to-SU interference, dBm
    su_csi_error,      // eps_s
    pu_csi_error,      // eps_p
    antennas,          // N_t
};

inline const char* to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::traffic: return "traffic";
        case SweepAxis::sbs_power: return "p_sbs_dbm";
        case SweepAxis::interference_cap: return "i_cap_dbm";
        case SweepAxis::rate_floor: return "min_rate_bps";
        case SweepAxis::pu_interference: return "i_bar_p_dbm";
        case SweepAxis::su_csi_error: return "eps_s";
        case SweepAxis::pu_csi_error: return "eps_p";
        case SweepAxis::antennas: return "n_tx";
    }
    return "?";
}

inline SweepAxis axis_from_string(const std::string& s) {
    for (SweepAxis a : {SweepAxis::traffic, SweepAxis::sbs_power,
                        SweepAxis::interference_cap, SweepAxis::rate_floor,
                        SweepAxis::pu_interference, SweepAxis::su_csi_error,
                        SweepAxis::pu_csi_error, SweepAxis::antennas}) {
        if (s == to_string(a)) return a;
    }
    throw std::invalid_argument("unknown sweep axis: " + s);
}

inline const char* to_string(Model m) {
    switch (m) {
        case Model::psbss: return "psbss";
        case Model::opportunistic: return "opportunistic";
        case Model::underlay: return "underlay";
    }
    return "?";
}

inline Model model_from_string(const std::string& s) {
    for (Model m : {Model::psbss, Model::opportunistic, Model::underlay}) {
        if (s == to_string(m)) return m;
    }
    throw std::invalid_argument("unknown model: " + s);
}

struct ExperimentConfig {
    ScenarioConfig scenario;
    LocalPredictor predictor{0.25, 0.7, 0};  // voters <= 0 means n_su + 1
    SensingConfig sensing;
    double target_p_f = 0.1;
    double target_p_d = 0.9;
    double traffic = 0.4;  // busy prior when traffic is not the sweep axis
    SweepAxis axis = SweepAxis::traffic;
    std::vector<double> grid{0.4};
    int trials = 100;
    std::uint64_t seed = 1;
    std::vector<Model> models{Model::psbss, Model::underlay, Model::opportunistic};
    DriverConfig driver;

    int voters() const { return predictor.voters > 0 ? predictor.voters : scenario.n_su + 1; }

    void validate() const {
        scenario.validate();
        sensing.validate();
        if (grid.empty()) throw std::invalid_argument("ExperimentConfig: empty grid");
        if (trials < 1) throw std::invalid_argument("ExperimentConfig: trials < 1");
        if (models.empty()) throw std::invalid_argument("ExperimentConfig: no models");
        if (!(target_p_f > 0.0 && target_p_f < 1.0) ||
            !(target_p_d > 0.0 && target_p_d < 1.0)) {
            throw std::invalid_argument("ExperimentConfig: targets outside (0,1)");
        }
    }
};

/// One grid point for one model. Means are over feasible trials only;
/// infeasible and failed trials stay in `trials` so nothing is dropped.
struct CellStats {
    double value = 0.0;
    Model model = Model::psbss;
    int trials = 0;
    int feasible = 0;
    int solver_failures = 0;
    double mean_rate_bits = 0.0;  // nan when no trial was feasible
    double stderr_bits = 0.0;
    double mean_iterations = 0.0;
};

struct SweepResult {
    SweepAxis axis = SweepAxis::traffic;
    std::vector<CellStats> cells;  // grid-major, model order within a point

    /// Nats become bits here, at emission, and nowhere earlier.
    void write_csv(std::ostream& os) const {
        os << "# psbss-sweep v1\n";
        os << "axis,value,model,trials,feasible,solver_failures,"
              "mean_rate_bits,stderr_bits,mean_iterations\n";
        os << std::setprecision(12);
        for (const auto& c : cells) {
            os << to_string(axis) << "," << c.value << "," << to_string(c.model)
               << "," << c.trials << "," << c.feasible << ","
               << c.solver_failures << "," << c.mean_rate_bits << ","
               << c.stderr_bits << "," << c.mean_iterations << "\n";
        }
    }
};

// ---- config file parsing ----

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    for (std::string tok; is >> tok;) out.push_back(tok);
    return out;
}

inline double num(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size()) {
        throw std::invalid_argument("config: bad number for " + key + ": " + v);
    }
    return x;
}

}  // namespace detail

/// Flat key = value text; '#' starts a comment, keys are dotted. Unknown keys
/// are errors so that a typo cannot silently run the default experiment.
inline ExperimentConfig parse_config(std::istream& is) {
    ExperimentConfig cfg;
    cfg.grid.clear();
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        auto n = [&] { return detail::num(key, val); };
        if (key == "trials") cfg.trials = static_cast<int>(n());
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(n());
        else if (key == "axis") cfg.axis = axis_from_string(val);
        else if (key == "grid") {
            for (const auto& tok : detail::split_ws(val)) {
                cfg.grid.push_back(detail::num(key, tok));
            }
        } else if (key == "models") {
            cfg.models.clear();
            for (const auto& tok : detail::split_ws(val)) {
                cfg.models.push_back(model_from_string(tok));
            }
        } else if (key == "traffic") cfg.traffic = n();
        else if (key == "p_f") cfg.target_p_f = n();
        else if (key == "p_d") cfg.target_p_d = n();
        else if (key == "predictor.p_wrong") cfg.predictor.p_wrong = n();
        else if (key == "predictor.p_success") cfg.predictor.p_success = n();
        else if (key == "predictor.voters") cfg.predictor.voters = static_cast<int>(n());
        else if (key == "sensing.gamma_db") cfg.sensing.gamma = db_to_linear(n());
        else if (key == "sensing.f_s") cfg.sensing.f_s = n();
        else if (key == "scenario.n_tx") cfg.scenario.n_tx = static_cast<int>(n());
        else if (key == "scenario.n_su") cfg.scenario.n_su = static_cast<int>(n());
        else if (key == "scenario.n_pu") cfg.scenario.n_pu = static_cast<int>(n());
        else if (key == "scenario.cell_radius") cfg.scenario.cell_radius = n();
        else if (key == "scenario.min_distance") cfg.scenario.min_distance = n();
        else if (key == "scenario.pl_exponent") cfg.scenario.pl_exponent = n();
        else if (key == "scenario.rician_k_db") cfg.scenario.rician_k_db = n();
        else if (key == "scenario.eps_s") cfg.scenario.eps_s = n();
        else if (key == "scenario.eps_p") cfg.scenario.eps_p = n();
        else if (key == "scenario.noise_dbm") cfg.scenario.noise_dbm = n();
        else if (key == "scenario.p_sbs_dbm") cfg.scenario.p_sbs_dbm = n();
        else if (key == "scenario.i_cap_dbm") cfg.scenario.i_cap_dbm = n();
        else if (key == "scenario.i_bar_p_dbm") cfg.scenario.i_bar_p_dbm = n();
        else if (key == "scenario.min_rate_bps") cfg.scenario.min_rate_bps = n();
        else if (key == "scenario.slot_T") cfg.scenario.slot_T = n();
        else if (key == "scenario.t_p") cfg.scenario.t_p = n();
        else if (key == "scenario.t_r") cfg.scenario.t_r = n();
        else if (key == "scenario.t_fc") cfg.scenario.t_fc = n();
        else if (key == "driver.eps_err") cfg.driver.eps_err = n();
        else if (key == "driver.max_iters") cfg.driver.max_iters = static_cast<int>(n());
        else if (key == "driver.init_max_iters") {
            cfg.driver.init_max_iters = static_cast<int>(n());
        } else {
            throw std::invalid_argument("config: unknown key " + key);
        }
    }
    if (cfg.grid.empty()) cfg.grid.push_back(cfg.traffic);
    cfg.validate();
    return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("config: cannot open " + path);
    return parse_config(f);
}

// ---- sweep machinery ----

/// Base config with the sweep axis pinned to one grid value.
inline ExperimentConfig at_grid_point(ExperimentConfig cfg, double v) {
    switch (cfg.axis) {
        case SweepAxis::traffic: cfg.traffic = v; break;
        case SweepAxis::sbs_power: cfg.scenario.p_sbs_dbm = v; break;
        case SweepAxis::interference_cap: cfg.scenario.i_cap_dbm = v; break;
        case SweepAxis::rate_floor: cfg.scenario.min_rate_bps = v; break;
        case SweepAxis::pu_interference: cfg.scenario.i_bar_p_dbm = v; break;
        case SweepAxis::su_csi_error: cfg.scenario.eps_s = v; break;
        case SweepAxis::pu_csi_error: cfg.scenario.eps_p = v; break;
        case SweepAxis::antennas: cfg.scenario.n_tx = static_cast<int>(v); break;
    }
    return cfg;
}

namespace detail {

struct TrialOutcome {
    bool attempted = false;
    bool feasible = false;
    bool solver_failure = false;
    double rate_nats = 0.0;
    double iterations = 0.0;
};

inline TrialOutcome run_trial(const ExperimentConfig& cfg, const Scenario& s,
                              const CaseProbabilities& probs, Model model) {
    DriverConfig dc = cfg.driver;
    dc.min_sensing_time = min_sensing_time(cfg.sensing, cfg.target_p_f, cfg.target_p_d);
    TrialOutcome out;
    out.attempted = true;
    try {
        const RunResult r = model == Model::psbss
                                ? run(s, probs, dc)
                                : run_baseline(s, probs, dc, model);
        out.feasible = r.feasible;
        out.rate_nats = r.objective;
        for (const auto& rec : r.trace.records) {
            if (!rec.init_phase) out.iterations += 1.0;
        }
    } catch (const std::exception&) {
        out.solver_failure = true;
    }
    return out;
}

inline int worker_count() {
    if (const char* env = std::getenv("PSBSS_WORKERS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

inline CellStats reduce(double value, Model model,
                        const std::vector<TrialOutcome>& outcomes) {
    CellStats c;
    c.value = value;
    c.model = model;
    c.trials = static_cast<int>(outcomes.size());
    double sum = 0.0, sumsq = 0.0, iters = 0.0;
    for (const auto& o : outcomes) {
        if (o.solver_failure) ++c.solver_failures;
        iters += o.iterations;
        if (!o.feasible) continue;
        ++c.feasible;
        sum += o.rate_nats;
        sumsq += o.rate_nats * o.rate_nats;
    }
    c.mean_iterations = c.trials > 0 ? iters / c.trials : 0.0;
    if (c.feasible == 0) {
        c.mean_rate_bits = std::numeric_limits<double>::quiet_NaN();
        c.stderr_bits = std::numeric_limits<double>::quiet_NaN();
        return c;
    }
    const double mean = sum / c.feasible;
    double se = 0.0;
    if (c.feasible > 1) {
        const double var =
            std::max(0.0, (sumsq - c.feasible * mean * mean) / (c.feasible - 1));
        se = std::sqrt(var / c.feasible);
    }
    c.mean_rate_bits = mean / std::numbers::ln2;
    c.stderr_bits = se / std::numbers::ln2;
    return c;
}

}  // namespace detail

/// Runs the configured sweep. Every model at a grid point consumes the same
/// per-trial scenario (checked by content hash), so comparisons are paired.
/// Trials are distributed over PSBSS_WORKERS threads and reduced by trial
/// index, making the output independent of scheduling order.
inline SweepResult run_experiment(const ExperimentConfig& base) {
    base.validate();
    SweepResult out;
    out.axis = base.axis;
    const int workers = std::min(detail::worker_count(), base.trials);
    for (double v : base.grid) {
        const ExperimentConfig cfg = at_grid_point(base, v);
        const TrafficModel tm = TrafficModel::from_intensity(cfg.traffic);
        LocalPredictor pred = cfg.predictor;
        pred.voters = cfg.voters();
        const CaseProbabilities probs = case_probabilities(
            tm, overall_prediction(tm, pred), cfg.target_p_f, cfg.target_p_d);

        const std::size_t n_models = cfg.models.size();
        std::vector<std::vector<detail::TrialOutcome>> results(
            cfg.trials, std::vector<detail::TrialOutcome>(n_models));
        std::atomic<int> next{0};
        auto work = [&] {
            for (int t = next.fetch_add(1); t < cfg.trials; t = next.fetch_add(1)) {
                const Scenario s = generate_scenario(cfg.seed, cfg.scenario,
                                                     static_cast<std::uint64_t>(t));
                const std::uint64_t h = scenario_hash(s);
                for (std::size_t mi = 0; mi < n_models; ++mi) {
                    results[t][mi] = detail::run_trial(cfg, s, probs, cfg.models[mi]);
                }
                if (scenario_hash(s) != h) {
                    throw std::logic_error("run_experiment: scenario mutated mid-trial");
                }
            }
        };
        if (workers <= 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < workers; ++w) pool.emplace_back(work);
            for (auto& th : pool) th.join();
        }
        for (std::size_t mi = 0; mi < n_models; ++mi) {
            std::vector<detail::TrialOutcome> column(cfg.trials);
            for (int t = 0; t < cfg.trials; ++t) column[t] = results[t][mi];
            out.cells.push_back(detail::reduce(v, cfg.models[mi], column));
        }
    }
    return out;
}

// ---- probability probe ----

/// Every probability the prediction/sensing pipeline produces for one
/// operating point, plus the sensing-only miss composite for comparison.
struct ProbabilityProfile {
    double traffic = 0.0;
    FusionResult fusion{};
    CaseProbabilities cases{};
    double sensing_only_pt10 = 0.0;
};

inline ProbabilityProfile probability_profile(const ExperimentConfig& cfg,
                                              double traffic) {
    const TrafficModel tm = TrafficModel::from_intensity(traffic);
    LocalPredictor pred = cfg.predictor;
    pred.voters = cfg.voters();
    ProbabilityProfile p;
    p.traffic = traffic;
    p.fusion = overall_prediction(tm, pred);
    p.cases = case_probabilities(tm, p.fusion, cfg.target_p_f, cfg.target_p_d);
    p.sensing_only_pt10 = sensing_only_composites(tm, cfg.target_p_d).first;
    return p;
}

/// One row per traffic-grid value; the grid is the config's own when the
/// sweep axis is traffic, otherwise 0.05..0.95.
inline void write_probe_csv(std::ostream& os, const ExperimentConfig& cfg) {
    os << "# psbss-probe v1\n";
    os << "traffic,q_wrong,q_success,pred_idle,pred_busy,"
          "p00,p01,p10,p11,pt00,pt01,pt10,pt11,phat0,phat1,sensing_only_pt10\n";
    os << std::setprecision(12);
    std::vector<double> grid;
    if (cfg.axis == SweepAxis::traffic) {
        grid = cfg.grid;
    } else {
        for (int i = 1; i <= 19; ++i) grid.push_back(0.05 * i);
    }
    for (double v : grid) {
        const ProbabilityProfile p = probability_profile(cfg, v);
        const auto& c = p.cases;
        os << p.traffic << "," << p.fusion.q_wrong << "," << p.fusion.q_success
           << "," << p.fusion.pred_idle << "," << p.fusion.pred_busy << ","
           << c.p00 << "," << c.p01 << "," << c.p10 << "," << c.p11 << ","
           << c.pt00 << "," << c.pt01 << "," << c.pt10 << "," << c.pt11 << ","
           << c.phat0 << "," << c.phat1 << "," << p.sensing_only_pt10 << "\n";
    }
}

/// Invariant sweep over a config: everything that must hold before an
/// experiment is worth running. Returns human-readable findings; empty means
/// the config is sound.
inline std::vector<std::string> validate_experiment(const ExperimentConfig& cfg) {
    std::vector<std::string> findings;
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        findings.emplace_back(e.what());
        return findings;
    }
    for (double v : cfg.grid) {
        const ExperimentConfig at = at_grid_point(cfg, v);
        std::ostringstream where;
        where << to_string(cfg.axis) << " = " << v << ": ";
        try {
            at.validate();
            const Scenario s = generate_scenario(at.seed, at.scenario, 0);
            s.validate();
            const ProbabilityProfile p = probability_profile(at, at.traffic);
            const auto& c = p.cases;
            const double total = c.pt00 + c.pt01 + c.pt10 + c.pt11;
            if (std::abs(total - 1.0) > 1e-12) {
                findings.push_back(where.str() + "composite probabilities do not sum to 1");
            }
            for (double q : {c.p00, c.p01, c.p10, c.p11, c.phat0, c.phat1}) {
                if (!(q >= 0.0 && q <= 1.0)) {
                    findings.push_back(where.str() + "case probability outside [0,1]");
                    break;
                }
            }
            const double ts =
                min_sensing_time(at.sensing, at.target_p_f, at.target_p_d);
            if (!(s.timing.t_pr + ts < s.timing.T)) {
                findings.push_back(
                    where.str() +
                    "minimum sensing time does not fit in the slot; raise sensing.f_s");
            }
        } catch (const std::exception& e) {
            findings.push_back(where.str() + e.what());
        }
    }
    return findings;
}

}  // namespace psbss
