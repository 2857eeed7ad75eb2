#pragma once

// Energy-detector statistics and the four prediction-and-sensing cases:
// false-alarm/detection probabilities, case probabilities P_00..P_11,
// composite probabilities, and the sensing-time lower bound.

#include <cmath>
#include <optional>
#include <stdexcept>

#include "psbss/prediction.hpp"
#include "psbss/probmath.hpp"

namespace psbss {

/// Energy-detector configuration. `gamma` is the received SNR of the PU
/// signal at the secondary BS (linear), `f_s` the sampling frequency.
/// `detection_threshold` (energy units) is only needed for the raw
/// threshold-parameterized forms; the optimizer path works in the
/// (P_f, P_d) parameterization.
struct SensingConfig {
    double gamma = 0.0316227766016838;  // -15 dB
    double f_s = 1.5e6;
    double target_p_d = 0.9;
    std::optional<double> detection_threshold;
    double bs_noise_var = 1.0;

    void validate() const {
        if (!(gamma > 0.0)) throw std::domain_error("SensingConfig: gamma must be > 0");
        if (!(f_s > 0.0)) throw std::domain_error("SensingConfig: f_s must be > 0");
        if (!(target_p_d > 0.0 && target_p_d < 1.0)) {
            throw std::domain_error("SensingConfig: target_p_d outside (0,1)");
        }
    }
};

/// Raw false-alarm probability of the energy detector for an explicit
/// threshold, Q((eps/sigma^2 - 1) sqrt(t_s f_s)).
inline double false_alarm_from_threshold(const SensingConfig& cfg, double t_s) {
    cfg.validate();
    if (!cfg.detection_threshold) {
        throw std::domain_error("false_alarm_from_threshold: no threshold set");
    }
    const double r = *cfg.detection_threshold / cfg.bs_noise_var;
    return q_function((r - 1.0) * std::sqrt(t_s * cfg.f_s));
}

/// Raw detection probability for an explicit threshold,
/// Q((eps/sigma^2 - gamma - 1) sqrt(t_s f_s / (2 gamma + 1))).
inline double detection_from_threshold(const SensingConfig& cfg, double t_s) {
    cfg.validate();
    if (!cfg.detection_threshold) {
        throw std::domain_error("detection_from_threshold: no threshold set");
    }
    const double r = *cfg.detection_threshold / cfg.bs_noise_var;
    return q_function((r - cfg.gamma - 1.0) *
                      std::sqrt(t_s * cfg.f_s / (2.0 * cfg.gamma + 1.0)));
}

/// False-alarm probability for a given target detection probability,
/// P_f = Q(sqrt(2 gamma + 1) Qinv(P_d) + sqrt(t_s f_s) gamma).
/// Decreasing in t_s.
inline double false_alarm_given_pd(const SensingConfig& cfg, double t_s) {
    cfg.validate();
    if (!(t_s > 0.0)) throw std::domain_error("false_alarm_given_pd: t_s must be > 0");
    return q_function(std::sqrt(2.0 * cfg.gamma + 1.0) * q_inverse(cfg.target_p_d) +
                      std::sqrt(t_s * cfg.f_s) * cfg.gamma);
}

/// Minimum sensing time achieving the target (P_f, P_d) pair,
/// (1/(gamma^2 f_s)) [Qinv(P_f) - Qinv(P_d) sqrt(2 gamma + 1)]^2.
inline double min_sensing_time(const SensingConfig& cfg, double p_f, double p_d) {
    cfg.validate();
    const double root = q_inverse(p_f) - q_inverse(p_d) * std::sqrt(2.0 * cfg.gamma + 1.0);
    return root * root / (cfg.gamma * cfg.gamma * cfg.f_s);
}

/// The four prediction-and-sensing case probabilities plus composites.
/// p01 = 1 - p00, p11 = 1 - p10; the composites are weighted by the
/// channel-state priors and sum to one, with phat0 = pt00 + pt10 and
/// phat1 = pt01 + pt11.
struct CaseProbabilities {
    double p00, p01, p10, p11;
    double pt00, pt01, pt10, pt11;
    double phat0, phat1;
};

inline CaseProbabilities case_probabilities(const TrafficModel& traffic,
                                            const FusionResult& fusion,
                                            double p_f, double p_d) {
    if (!(p_f >= 0.0 && p_f <= 1.0) || !(p_d >= 0.0 && p_d <= 1.0)) {
        throw std::domain_error("case_probabilities: probabilities outside [0,1]");
    }
    const double h0 = traffic.prior_idle();
    const double h1 = traffic.prior_busy();
    if (!(fusion.pred_idle > 0.0) || !(fusion.pred_busy > 0.0)) {
        throw std::domain_error("case_probabilities: degenerate configuration, "
                                "predicted idle/busy probability is zero");
    }
    CaseProbabilities c;
    c.p00 = (1.0 - fusion.q_wrong) * h0 * (1.0 - p_f) / fusion.pred_idle;
    c.p01 = 1.0 - c.p00;
    c.p10 = (1.0 - fusion.q_success) * h1 * (1.0 - p_d) / fusion.pred_busy;
    c.p11 = 1.0 - c.p10;
    c.pt00 = h0 * c.p00;
    c.pt01 = h0 * (1.0 - c.p00);
    c.pt10 = h1 * c.p10;
    c.pt11 = h1 * (1.0 - c.p10);
    c.phat0 = c.pt00 + c.pt10;
    c.phat1 = c.pt01 + c.pt11;
    return c;
}

/// Composite miss-detection/detection probabilities of a sensing-only
/// scheme: Pt10 = Pr(H1)(1 - P_d), Pt11 = Pr(H1) P_d.
inline std::pair<double, double> sensing_only_composites(const TrafficModel& traffic,
                                                         double p_d) {
    const double h1 = traffic.prior_busy();
    return {h1 * (1.0 - p_d), h1 * p_d};
}

}  // namespace psbss
