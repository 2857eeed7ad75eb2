#pragma once

// Worst-case robust rate evaluation: per-case interference-plus-noise terms,
// worst-case rates, effective per-user rate, sum-rate objective, and the
// constraint slacks of the joint beamforming/sensing-time problem, all at an
// arbitrary candidate point.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "psbss/scenario.hpp"
#include "psbss/sensing.hpp"

namespace psbss {

/// Stacked per-user beamformers: w0 applies after an idle decision, w1
/// after a busy decision; t_s is the sensing time.
struct BeamformerSet {
    std::vector<Eigen::VectorXcd> w0;
    std::vector<Eigen::VectorXcd> w1;
    double t_s = 0.0;

    /// tau = T / (T - t_pr - t_s); valid iff t_s in (0, T - t_pr).
    double tau(const SlotTiming& t) const { return t.T / (t.T - t.t_pr - t_s); }
    /// Data-transmission fraction 1 - (t_pr + t_s)/T.
    double tx_fraction(const SlotTiming& t) const {
        return 1.0 - (t.t_pr + t_s) / t.T;
    }
};

enum class RateCase { c00, c01, c10, c11 };

inline bool case_uses_idle_beams(RateCase c) {
    return c == RateCase::c00 || c == RateCase::c10;
}
inline bool case_has_pu_interference(RateCase c) {
    return c == RateCase::c10 || c == RateCase::c11;
}

struct ChiTerms {
    double c00, c01, c10, c11;
};

/// Worst-case interference-plus-noise seen by SU k in each of the four
/// prediction-and-sensing cases.
inline ChiTerms chi_terms(const Scenario& s, const BeamformerSet& b, int k) {
    const auto& su = s.sus.at(k);
    double intra0 = 0.0, intra1 = 0.0;
    for (int j = 0; j < s.num_sus(); ++j) {
        if (j == k) continue;
        intra0 += std::norm(su.h_est.dot(b.w0[j])) + su.delta * b.w0[j].squaredNorm();
        intra1 += std::norm(su.h_est.dot(b.w1[j])) + su.delta * b.w1[j].squaredNorm();
    }
    ChiTerms chi;
    chi.c00 = intra0 + su.noise_var;
    chi.c01 = intra1 + su.noise_var;
    chi.c10 = intra0 + s.i_bar_p + su.noise_var;
    chi.c11 = intra1 + s.i_bar_p + su.noise_var;
    return chi;
}

/// Worst-case numerator |h_k^H w_k|^2 - delta_k ||w_k||^2 for the beam set
/// matching `c`. Non-positive values mean the worst-case SINR is undefined
/// at this point (outside any trust region); callers must reject such points.
inline double rate_numerator(const Scenario& s, const BeamformerSet& b, int k,
                             RateCase c) {
    const auto& su = s.sus.at(k);
    const auto& w = case_uses_idle_beams(c) ? b.w0[k] : b.w1[k];
    return std::norm(su.h_est.dot(w)) - su.delta * w.squaredNorm();
}

/// Worst-case rate in nats/s/Hz, or nullopt when the numerator is not
/// positive (infeasible-point signal, never clamped).
inline std::optional<double> worst_case_rate(const Scenario& s, const BeamformerSet& b,
                                             int k, RateCase c) {
    const double num = rate_numerator(s, b, k, c);
    if (!(num > 0.0)) return std::nullopt;
    const ChiTerms chi = chi_terms(s, b, k);
    const double den = c == RateCase::c00   ? chi.c00
                       : c == RateCase::c01 ? chi.c01
                       : c == RateCase::c10 ? chi.c10
                                            : chi.c11;
    return std::log1p(num / den);
}

/// Effective rate of SU k: transmission fraction times the composite-
/// probability-weighted mix of the four worst-case rates.
inline std::optional<double> effective_rate(const Scenario& s,
                                            const CaseProbabilities& probs,
                                            const BeamformerSet& b, int k) {
    const auto r00 = worst_case_rate(s, b, k, RateCase::c00);
    const auto r01 = worst_case_rate(s, b, k, RateCase::c01);
    const auto r10 = worst_case_rate(s, b, k, RateCase::c10);
    const auto r11 = worst_case_rate(s, b, k, RateCase::c11);
    if (!r00 || !r01 || !r10 || !r11) return std::nullopt;
    return b.tx_fraction(s.timing) * (probs.pt00 * *r00 + probs.pt01 * *r01 +
                                      probs.pt10 * *r10 + probs.pt11 * *r11);
}

/// Sum of effective rates over all SUs (the objective), nats/s/Hz.
inline std::optional<double> sum_rate(const Scenario& s, const CaseProbabilities& probs,
                                      const BeamformerSet& b) {
    double total = 0.0;
    for (int k = 0; k < s.num_sus(); ++k) {
        const auto r = effective_rate(s, probs, b, k);
        if (!r) return std::nullopt;
        total += *r;
    }
    return total;
}

/// Signed constraint slacks (bound minus value); all slacks >= -tol iff the
/// point is feasible. Rate slacks are -inf at points where a worst-case
/// rate is undefined.
struct ConstraintSlacks {
    double power = 0.0;
    std::vector<double> interference;
    double sensing_time = 0.0;
    std::vector<double> rate;

    double min_slack() const {
        double m = std::min(power, sensing_time);
        for (double v : interference) m = std::min(m, v);
        for (double v : rate) m = std::min(m, v);
        return m;
    }
};

/// `t_s_floor` is the sensing-time lower bound Omega(P_f, P_d, gamma).
inline ConstraintSlacks constraint_slacks(const Scenario& s,
                                          const CaseProbabilities& probs,
                                          const BeamformerSet& b, double t_s_floor) {
    ConstraintSlacks out;
    const double frac = b.tx_fraction(s.timing);
    double power = 0.0;
    for (int k = 0; k < s.num_sus(); ++k) {
        power += probs.phat0 * b.w0[k].squaredNorm() + probs.phat1 * b.w1[k].squaredNorm();
    }
    out.power = s.p_sbs - frac * power;
    for (const auto& pu : s.pus) {
        double intf = 0.0;
        for (int k = 0; k < s.num_sus(); ++k) {
            intf += probs.p10 * (std::norm(pu.g_est.dot(b.w0[k])) +
                                 pu.delta_hat * b.w0[k].squaredNorm());
            intf += (1.0 - probs.p10) * (std::norm(pu.g_est.dot(b.w1[k])) +
                                         pu.delta_hat * b.w1[k].squaredNorm());
        }
        out.interference.push_back(pu.i_cap - frac * intf);
    }
    out.sensing_time = b.t_s - t_s_floor;
    for (int k = 0; k < s.num_sus(); ++k) {
        const auto r = effective_rate(s, probs, b, k);
        out.rate.push_back(r ? *r - s.sus[k].min_rate
                             : -std::numeric_limits<double>::infinity());
    }
    return out;
}

}  // namespace psbss
