#include <catch2/catch_amalgamated.hpp>

#include "psbss/prediction.hpp"

using namespace psbss;

TEST_CASE("majority fusion with three voters") {
    LocalPredictor pred{0.25, 0.7, 3};
    auto [qw, qs] = fuse_majority(pred);
    CHECK(qw == Catch::Approx(0.15625).margin(1e-12));
    CHECK(qs == Catch::Approx(0.784).margin(1e-12));
}

TEST_CASE("single voter reduces to the local predictor") {
    LocalPredictor pred{0.25, 0.7, 1};
    auto [qw, qs] = fuse_majority(pred);
    CHECK(qw == Catch::Approx(0.25).margin(1e-15));
    CHECK(qs == Catch::Approx(0.7).margin(1e-15));
    CHECK_THROWS_AS(fuse_majority(LocalPredictor{0.25, 0.7, 0}), std::domain_error);
}

TEST_CASE("fusion matches exhaustive vote enumeration") {
    // enumerate all 2^n vote patterns; busy wins on >= ceil(n/2) votes
    auto enumerate = [](int n, double p) {
        double busy = 0.0;
        const int thresh = (n + 1) / 2;
        for (int mask = 0; mask < (1 << n); ++mask) {
            const int votes = __builtin_popcount(static_cast<unsigned>(mask));
            if (votes < thresh) continue;
            busy += std::pow(p, votes) * std::pow(1.0 - p, n - votes);
        }
        return busy;
    };
    for (int n = 1; n <= 13; ++n) {
        for (int pi = 1; pi <= 9; ++pi) {
            const double p = pi * 0.1;
            auto [qw, qs] = fuse_majority(LocalPredictor{p, p, n});
            CHECK(qw == Catch::Approx(enumerate(n, p)).margin(1e-12));
            CHECK(qs == qw);
        }
    }
}

TEST_CASE("overall prediction probabilities") {
    auto traffic = TrafficModel::from_intensity(0.4);  // Pr(H0) = 0.6
    auto r = overall_prediction(traffic, 0.15625, 0.784);
    CHECK(r.pred_busy == Catch::Approx(0.40735).margin(1e-12));
    CHECK(r.pred_idle == Catch::Approx(0.59265).margin(1e-12));
    CHECK(r.pred_idle + r.pred_busy == Catch::Approx(1.0).margin(1e-15));

    auto all_idle = overall_prediction(TrafficModel::from_intensity(0.0), 0.2, 0.9);
    CHECK(all_idle.pred_idle == Catch::Approx(0.8).margin(1e-15));

    auto perfect = overall_prediction(traffic, 0.0, 1.0);
    CHECK(perfect.pred_busy == Catch::Approx(traffic.prior_busy()).margin(1e-15));
}

TEST_CASE("fusion sharpens with more voters") {
    double prev_qs = 0.0, prev_qw = 1.0;
    for (int n = 1; n <= 25; n += 2) {
        auto [qw, qs] = fuse_majority(LocalPredictor{0.25, 0.7, n});
        CHECK(qs >= prev_qs - 1e-15);
        CHECK(qw <= prev_qw + 1e-15);
        prev_qs = qs;
        prev_qw = qw;
    }
    auto [qw25, qs25] = fuse_majority(LocalPredictor{0.25, 0.7, 25});
    CHECK(qs25 > 0.95);
    CHECK(qw25 < 0.01);
}

TEST_CASE("traffic prior validation") {
    CHECK(TrafficModel{2.0, 0.8}.prior_busy() == Catch::Approx(0.4).margin(1e-15));
    CHECK_THROWS_AS((TrafficModel{1.0, 1.5}.prior_busy()), std::domain_error);
}
