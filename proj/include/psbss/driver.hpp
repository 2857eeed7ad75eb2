#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "psbss/conic.hpp"
#include "psbss/rates.hpp"
#include "psbss/surrogate.hpp"

namespace psbss {

struct DriverConfig {
    double eps_err = 1e-3;      // relative objective-change stopping tolerance
    int max_iters = 100;
    int init_max_iters = 30;    // feasibility-phase iteration cap
    double margin = 1e-7;
    double min_sensing_time = 0.0;   // Omega floor on t_s, seconds
    std::optional<double> fixed_t_s; // pins the sensing time when set
    conic::SolverSettings solver{};
};

struct IterationRecord {
    int iteration = 0;
    bool init_phase = false;
    // True objective in nats/s/Hz; during initialization this is the worst
    // min-rate margin instead (the quantity the phase drives to zero).
    double objective = 0.0;
    double surrogate = 0.0;
    double violation = 0.0;  // max(0, -min constraint slack)
    conic::SolveStatus status = conic::SolveStatus::Optimal;
    double delta_rel = 0.0;
};

struct IterationTrace {
    std::vector<IterationRecord> records;
    bool converged = false;
    std::string note;

    /// Rate objectives leave in bits here and nowhere else.
    void write_csv(std::ostream& os) const {
        os << "iteration,objective_bits,violation,status\n";
        for (const auto& r : records) {
            os << r.iteration << "," << r.objective / std::numbers::ln2 << ","
               << r.violation << "," << conic::to_string(r.status) << "\n";
        }
    }
};

struct InitResult {
    ExpansionPoint point;
    bool feasible = false;
    double best_margin = -std::numeric_limits<double>::infinity();
    IterationTrace trace;
};

struct RunResult {
    BeamformerSet beams;
    ExpansionPoint point;
    double objective = 0.0;  // nats/s/Hz at the returned point
    bool feasible = false;   // initialization succeeded
    bool converged = false;  // relative change dropped below eps_err
    IterationTrace trace;
};

namespace detail {

inline BeamformerSet to_beamformers(const Scenario& s, const ExpansionPoint& pt,
                                    Model model) {
    BeamformerSet b;
    const std::vector<Eigen::VectorXcd> none(
        s.num_sus(), Eigen::VectorXcd::Zero(s.n_tx));
    b.w0 = model == Model::underlay ? none : pt.w0;
    b.w1 = model == Model::opportunistic ? none : pt.w1;
    if (model != Model::underlay) {
        b.t_s = s.timing.T - s.timing.t_pr - s.timing.T / pt.tau;
    }
    return b;
}

// True objective and constraint slacks of the model each driver iterate is
// judged against. The full model delegates to the rates module; the two
// baselines use their own reduced constraint sets.
inline std::pair<double, ConstraintSlacks> evaluate(const Scenario& s,
                                                    const CaseProbabilities& probs,
                                                    const BeamformerSet& b,
                                                    Model model, double t_s_floor) {
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    if (model == Model::psbss) {
        const auto sl = constraint_slacks(s, probs, b, t_s_floor);
        const auto obj = sum_rate(s, probs, b);
        return {obj ? *obj : neg_inf, sl};
    }
    ConstraintSlacks sl;
    double obj = 0.0;
    if (model == Model::opportunistic) {
        const double frac = b.tx_fraction(s.timing);
        double power = 0.0;
        for (int k = 0; k < s.num_sus(); ++k) {
            power += probs.phat0 * b.w0[k].squaredNorm();
            const auto r00 = worst_case_rate(s, b, k, RateCase::c00);
            const auto r10 = worst_case_rate(s, b, k, RateCase::c10);
            const double rk = (r00 && r10)
                                  ? frac * (probs.pt00 * *r00 + probs.pt10 * *r10)
                                  : neg_inf;
            sl.rate.push_back(rk - s.sus[k].min_rate);
            obj += rk;
        }
        sl.power = s.p_sbs - frac * power;
        sl.sensing_time = b.t_s - t_s_floor;
        return {obj, sl};
    }
    // Underlay: busy-case rates only, no time split, unweighted caps.
    double power = 0.0;
    for (int k = 0; k < s.num_sus(); ++k) {
        power += b.w1[k].squaredNorm();
        const auto r11 = worst_case_rate(s, b, k, RateCase::c11);
        const double rk = r11 ? *r11 : neg_inf;
        // no rate floors in this model; the entry still flags undefined rates
        sl.rate.push_back(rk);
        obj += rk;
    }
    sl.power = s.p_sbs - power;
    for (const auto& pu : s.pus) {
        double intf = 0.0;
        for (int k = 0; k < s.num_sus(); ++k) {
            intf += std::norm(pu.g_est.dot(b.w1[k])) +
                    pu.delta_hat * b.w1[k].squaredNorm();
        }
        sl.interference.push_back(pu.i_cap - intf);
    }
    return {obj, sl};
}

inline ExpansionPoint blend(const ExpansionPoint& a, const ExpansionPoint& b,
                            double t) {
    ExpansionPoint out;
    out.tau = (1.0 - t) * a.tau + t * b.tau;
    auto mix = [t](const std::vector<Eigen::VectorXcd>& u,
                   const std::vector<Eigen::VectorXcd>& v) {
        std::vector<Eigen::VectorXcd> r(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) r[i] = (1.0 - t) * u[i] + t * v[i];
        return r;
    };
    out.w0 = mix(a.w0, b.w0);
    out.w1 = mix(a.w1, b.w1);
    return out;
}

inline double worst_rate_margin(const ConstraintSlacks& sl) {
    double m = std::numeric_limits<double>::infinity();
    for (double v : sl.rate) m = std::min(m, v);
    return m;
}

inline BuildOptions build_options(const DriverConfig& cfg, Model model,
                                  bool initialization) {
    BuildOptions opt;
    opt.model = model;
    opt.initialization = initialization;
    opt.min_sensing_time = cfg.min_sensing_time;
    opt.margin = cfg.margin;
    opt.fixed_t_s = cfg.fixed_t_s;
    return opt;
}

}  // namespace detail

/// Deterministic starting iterate: per-user matched filters with the power
/// split equally, then shrunk so the power and interference caps hold.
inline ExpansionPoint seed_point(const Scenario& s, const CaseProbabilities& probs,
                                 const DriverConfig& cfg, Model model) {
    const int K = s.num_sus();
    ExpansionPoint pt;
    const int sets = model == Model::psbss ? 2 : 1;
    const double per = s.p_sbs / (sets * K);
    std::vector<Eigen::VectorXcd> mf(K);
    for (int k = 0; k < K; ++k) {
        mf[k] = s.sus[k].h_est.normalized() * std::sqrt(per);
    }
    if (model != Model::underlay) pt.w0 = mf;
    if (model != Model::opportunistic) pt.w1 = mf;
    if (model != Model::underlay) {
        const double ts = cfg.fixed_t_s ? *cfg.fixed_t_s : cfg.min_sensing_time;
        pt.tau = s.timing.T / (s.timing.T - s.timing.t_pr - ts);
    }
    const auto [obj, sl] =
        detail::evaluate(s, probs, detail::to_beamformers(s, pt, model), model,
                         cfg.min_sensing_time);
    (void)obj;
    double shrink2 = 1.0;
    auto cap_ratio = [&](double slack, double cap) {
        // slack = cap - value; value > cap needs value scaled by cap/value
        if (slack < 0.0 && cap > 0.0) shrink2 = std::min(shrink2, cap / (cap - slack));
    };
    cap_ratio(sl.power, s.p_sbs);
    for (std::size_t m = 0; m < sl.interference.size(); ++m) {
        cap_ratio(sl.interference[m], s.pus[m].i_cap);
    }
    const double c = std::sqrt(shrink2);
    for (auto& w : pt.w0) w *= c;
    for (auto& w : pt.w1) w *= c;
    rotate_phases(s, pt);
    return pt;
}

/// Feasibility phase: repeatedly maximizes the worst min-rate margin until it
/// clears zero. Succeeds immediately (zero iterations) when the seed already
/// meets every rate floor; reports the best margin reached otherwise.
inline InitResult initialize(const Scenario& s, const CaseProbabilities& probs,
                             const DriverConfig& cfg, Model model = Model::psbss) {
    InitResult out;
    out.point = seed_point(s, probs, cfg, model);
    const auto opt = detail::build_options(cfg, model, true);
    for (int it = 0; it <= cfg.init_max_iters; ++it) {
        const auto [obj, sl] = detail::evaluate(
            s, probs, detail::to_beamformers(s, out.point, model), model,
            cfg.min_sensing_time);
        (void)obj;
        const double margin = detail::worst_rate_margin(sl);
        out.best_margin = std::max(out.best_margin, margin);
        if (margin >= 0.0) {
            out.feasible = true;
            return out;
        }
        if (it == cfg.init_max_iters) break;

        SubproblemSpec spec;
        try {
            spec = build_subproblem(s, probs, out.point, opt);
        } catch (const std::invalid_argument& e) {
            // e.g. the shrunk seed fell below the trust-region margin
            out.trace.note = std::string("initialization: ") + e.what();
            break;
        }
        const auto res = conic::solve(lower(spec), cfg.solver);
        IterationRecord rec;
        rec.iteration = it;
        rec.init_phase = true;
        rec.status = res.status;
        rec.surrogate = surrogate_objective(spec, res.x);
        if (res.status != conic::SolveStatus::Optimal) {
            out.trace.note = "initialization solve: " +
                             std::string(conic::to_string(res.status));
            out.trace.records.push_back(rec);
            break;
        }
        ExpansionPoint cand = extract_point(spec, res.x);
        rotate_phases(s, cand);
        const auto [cobj, csl] = detail::evaluate(
            s, probs, detail::to_beamformers(s, cand, model), model,
            cfg.min_sensing_time);
        (void)cobj;
        rec.objective = detail::worst_rate_margin(csl);
        rec.delta_rel = rec.objective - margin;
        out.trace.records.push_back(rec);
        out.point = cand;
    }
    out.trace.note = out.trace.note.empty()
                         ? "infeasible instance: best margin " +
                               std::to_string(out.best_margin)
                         : out.trace.note;
    return out;
}

namespace detail {

inline RunResult run_impl(const Scenario& s, const CaseProbabilities& probs,
                          const DriverConfig& cfg, Model model) {
    RunResult out;
    InitResult init = initialize(s, probs, cfg, model);
    out.trace = std::move(init.trace);
    out.point = init.point;
    out.feasible = init.feasible;
    out.beams = to_beamformers(s, out.point, model);
    if (!init.feasible) return out;

    const auto opt = build_options(cfg, model, false);
    auto [obj, sl] = evaluate(s, probs, out.beams, model, cfg.min_sensing_time);
    out.objective = obj;
    const int init_iters = static_cast<int>(out.trace.records.size());

    for (int it = 0; it < cfg.max_iters; ++it) {
        SubproblemSpec spec;
        try {
            spec = build_subproblem(s, probs, out.point, opt);
        } catch (const std::invalid_argument& e) {
            out.trace.note = std::string("expansion failed: ") + e.what();
            break;
        }
        const auto res = conic::solve(lower(spec), cfg.solver);

        IterationRecord rec;
        rec.iteration = init_iters + it;
        rec.status = res.status;
        rec.surrogate = surrogate_objective(spec, res.x);

        ExpansionPoint cand = extract_point(spec, res.x);
        rotate_phases(s, cand);
        auto [cobj, csl] =
            evaluate(s, probs, to_beamformers(s, cand, model), model,
                     cfg.min_sensing_time);
        const bool solver_ok = res.status == conic::SolveStatus::Optimal;
        bool ok = solver_ok && csl.min_slack() >= -1e-6 && cobj >= obj - 1e-7;
        if (!ok) {
            // One retry halfway back toward the previous (feasible) iterate.
            cand = blend(out.point, cand, 0.5);
            rotate_phases(s, cand);
            std::tie(cobj, csl) =
                evaluate(s, probs, to_beamformers(s, cand, model), model,
                         cfg.min_sensing_time);
            ok = csl.min_slack() >= -1e-6 && cobj >= obj - 1e-7;
            if (!ok) {
                out.trace.note = "stopped at iteration " + std::to_string(it) +
                                 ": " + conic::to_string(res.status);
                // The candidate was rejected; log the step with the objective
                // that was kept so the trace stays an ascent.
                rec.objective = obj;
                out.trace.records.push_back(rec);
                break;
            }
        }

        const double delta =
            std::abs(cobj - obj) / std::max(1.0, std::abs(cobj));
        rec.objective = cobj;
        rec.violation = std::max(0.0, -csl.min_slack());
        rec.delta_rel = delta;
        out.trace.records.push_back(rec);

        out.point = cand;
        obj = cobj;
        if (delta <= cfg.eps_err) {
            out.trace.converged = true;
            break;
        }
    }
    out.beams = to_beamformers(s, out.point, model);
    out.objective = obj;
    out.converged = out.trace.converged;
    return out;
}

}  // namespace detail

/// Full model: joint (w0, w1, t_s) ascent via successive inner approximation.
inline RunResult run(const Scenario& s, const CaseProbabilities& probs,
                     const DriverConfig& cfg = {}) {
    return detail::run_impl(s, probs, cfg, Model::psbss);
}

/// Reduced access models solved with the same machinery.
inline RunResult run_baseline(const Scenario& s, const CaseProbabilities& probs,
                              const DriverConfig& cfg, Model model) {
    if (model == Model::psbss) {
        throw std::invalid_argument("run_baseline: use run() for the full model");
    }
    return detail::run_impl(s, probs, cfg, model);
}

}  // namespace psbss
