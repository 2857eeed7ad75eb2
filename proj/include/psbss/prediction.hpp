#pragma once

// Cooperative spectrum prediction: traffic prior, per-node predictor
// accuracy, majority-rule fusion at the fusion center, and the overall
// predicted-idle/busy probabilities.

#include <cmath>
#include <stdexcept>

#include "psbss/probmath.hpp"

namespace psbss {

/// PU traffic model. Arrivals are Poisson(lambda), holding times are
/// binomial(mu); only the ratio mu/lambda enters as the busy prior.
struct TrafficModel {
    double lambda = 1.0;
    double mu = 0.4;

    double prior_busy() const {
        const double r = mu / lambda;
        if (!(r >= 0.0 && r <= 1.0)) {
            throw std::domain_error("TrafficModel: mu/lambda outside [0,1]");
        }
        return r;
    }
    double prior_idle() const { return 1.0 - prior_busy(); }

    static TrafficModel from_intensity(double busy_prob) {
        return TrafficModel{1.0, busy_prob};
    }
};

/// Per-node prediction accuracy shared by the K SUs and the secondary BS.
/// `voters` is the number of local predictors K+1.
struct LocalPredictor {
    double p_wrong = 0.25;
    double p_success = 0.7;
    int voters = 1;
};

/// Fused prediction probabilities at the FC.
struct FusionResult {
    double q_wrong;    // wrong prediction after majority fusion
    double q_success;  // successful prediction after majority fusion
    double pred_idle;  // overall probability of predicting idle
    double pred_busy;  // overall probability of predicting busy
};

/// Majority-rule fusion over `voters` local results; ties vote busy
/// (threshold ceil((K+1)/2)).
inline std::pair<double, double> fuse_majority(const LocalPredictor& pred) {
    if (pred.voters < 1) {
        throw std::domain_error("fuse_majority: need at least one voter");
    }
    const int n = pred.voters;
    const int thresh = (n + 1) / 2;  // ceil(n/2) for the busy decision
    return {binomial_tail(n, thresh, pred.p_wrong),
            binomial_tail(n, thresh, pred.p_success)};
}

inline FusionResult overall_prediction(const TrafficModel& traffic,
                                       double q_wrong, double q_success) {
    const double h0 = traffic.prior_idle();
    const double h1 = traffic.prior_busy();
    FusionResult r;
    r.q_wrong = q_wrong;
    r.q_success = q_success;
    r.pred_idle = (1.0 - q_wrong) * h0 + (1.0 - q_success) * h1;
    r.pred_busy = q_wrong * h0 + q_success * h1;
    return r;
}

inline FusionResult overall_prediction(const TrafficModel& traffic,
                                       const LocalPredictor& pred) {
    auto [qw, qs] = fuse_majority(pred);
    return overall_prediction(traffic, qw, qs);
}

}  // namespace psbss
