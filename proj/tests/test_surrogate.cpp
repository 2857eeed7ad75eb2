#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "psbss/conic.hpp"
#include "psbss/rng.hpp"
#include "psbss/surrogate.hpp"

using namespace psbss;

namespace {

double truth(double phi, double tau) { return std::log1p(1.0 / phi) / tau; }

CaseProbabilities default_probs() {
    const auto traffic = TrafficModel::from_intensity(0.4);
    const auto fusion = overall_prediction(traffic, LocalPredictor{0.25, 0.7, 7});
    return case_probabilities(traffic, fusion, 0.1, 0.9);
}

// Matched-filter seed scaled well inside the power and interference caps.
ExpansionPoint matched_filter_point(const Scenario& s, double tau) {
    ExpansionPoint p;
    p.tau = tau;
    const double per_user = 0.25 * s.p_sbs / s.num_sus();
    for (const auto& su : s.sus) {
        Eigen::VectorXcd w = su.h_est.normalized() * std::sqrt(per_user);
        p.w0.push_back(w);
        p.w1.push_back(w);
    }
    return p;
}

double sensing_floor() {
    return min_sensing_time(SensingConfig{}, 0.1, 0.9);
}

BeamformerSet to_beams(const Scenario& s, const ExpansionPoint& p) {
    BeamformerSet b;
    b.w0 = p.w0;
    b.w1 = p.w1;
    b.t_s = s.timing.T - s.timing.t_pr - s.timing.T / p.tau;
    return b;
}

}  // namespace

TEST_CASE("lower bound coefficients at a reference point") {
    const auto k = coefficients(1.0, 2.0);
    CHECK(k.a == Catch::Approx(std::log(2.0) + 0.25).epsilon(1e-12));
    CHECK(k.a == Catch::Approx(0.943147).margin(1e-6));
    CHECK(k.b == Catch::Approx(0.25).epsilon(1e-12));
    CHECK(k.c == Catch::Approx(0.173287).margin(1e-6));
    CHECK(k.a - k.b - 2.0 * k.c == Catch::Approx(0.5 * std::log(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(coefficients(0.0, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(coefficients(-1.0, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(coefficients(1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(coefficients(std::nan(""), 2.0), std::invalid_argument);

    // vanishing rate at huge phi
    CHECK(coefficients(1e12, 2.0).c < 1e-11);
}

TEST_CASE("tightness identity and gradient of the affine minorant") {
    CounterRng rng(7, 0, 0);
    for (int i = 0; i < 200; ++i) {
        const double phi = 0.1 + 99.9 * rng.uniform();
        const double tau = 1.01 + 48.99 * rng.uniform();
        const auto k = coefficients(phi, tau);
        REQUIRE(k.a > 0.0);
        REQUIRE(k.b > 0.0);
        REQUIRE(k.c > 0.0);
        CHECK(lower_bound_value(k, phi, tau) ==
              Catch::Approx(truth(phi, tau)).epsilon(1e-12));

        const double hp = 1e-5 * phi, ht = 1e-5 * tau;
        const double dphi = (truth(phi + hp, tau) - truth(phi - hp, tau)) / (2.0 * hp);
        const double dtau = (truth(phi, tau + ht) - truth(phi, tau - ht)) / (2.0 * ht);
        CHECK(-k.b == Catch::Approx(dphi).epsilon(1e-6));
        CHECK(-k.c == Catch::Approx(dtau).epsilon(1e-6));
    }
}

TEST_CASE("minorization over the whole domain") {
    const auto ref = coefficients(1.0, 2.0);
    const double at23 = lower_bound_value(ref, 2.0, 3.0);
    CHECK(at23 == Catch::Approx(-0.076713).margin(1e-6));
    CHECK(at23 <= truth(2.0, 3.0));

    CounterRng rng(11, 0, 0);
    for (int i = 0; i < 1000; ++i) {
        const double phi_n = 0.1 + 99.9 * rng.uniform();
        const double tau_n = 1.01 + 48.99 * rng.uniform();
        const double phi = 0.1 + 99.9 * rng.uniform();
        const double tau = 1.01 + 48.99 * rng.uniform();
        const auto k = coefficients(phi_n, tau_n);
        REQUIRE(lower_bound_value(k, phi, tau) <= truth(phi, tau) + 1e-12);
    }
}

TEST_CASE("per-iteration complexity estimate") {
    CHECK(complexity_estimate(8, 6, 3) ==
          Catch::Approx(133.0 * 133.0 * std::sqrt(71.0) * 204.0).epsilon(1e-12));
    CHECK(complexity_estimate(8, 6, 3) == Catch::Approx(3.04e7).epsilon(0.01));
    CHECK(complexity_estimate(1, 1, 0) ==
          Catch::Approx(81.0 * std::sqrt(13.0) * 22.0).epsilon(1e-12));
    CHECK(complexity_estimate(1, 1, 0) == Catch::Approx(6.43e3).epsilon(0.01));

    const double base = complexity_estimate(4, 3, 2);
    CHECK(complexity_estimate(5, 3, 2) > base);
    CHECK(complexity_estimate(4, 4, 2) > base);
    CHECK(complexity_estimate(4, 3, 3) > base);
    CHECK_THROWS_AS(complexity_estimate(0, 1, 0), std::invalid_argument);
}

TEST_CASE("subproblem dimensions match the counting argument") {
    const Scenario s = fixed_layout();
    const auto probs = default_probs();
    const auto pt = matched_filter_point(s, 1.2);
    const int K = s.num_sus(), M = s.num_pus();

    BuildOptions opt;
    opt.min_sensing_time = sensing_floor();
    const auto spec = build_subproblem(s, probs, pt, opt);
    CHECK(spec.decision_variable_count() == (2 * 8 + 6) * K + 1);
    CHECK(spec.decision_variable_count() == 133);
    CHECK(spec.layout.real_dim == (4 * 8 + 6) * K + 1);
    CHECK(spec.linear_count() == 3 * K + 1);
    CHECK(spec.quadratic_count() == 8 * K + M + 1);

    BuildOptions init = opt;
    init.initialization = true;
    const auto ispec = build_subproblem(s, probs, pt, init);
    CHECK(ispec.decision_variable_count() == spec.decision_variable_count() + 1);
    int margins = 0, floors = 0;
    for (const auto& lc : ispec.linear) {
        margins += lc.tag == ConstraintTag::init_margin;
        floors += lc.tag == ConstraintTag::min_rate;
    }
    CHECK(margins == K);
    CHECK(floors == 0);
    CHECK(ispec.linear_count() == spec.linear_count());

    SECTION("expansion point outside the trust region is rejected") {
        ExpansionPoint bad = pt;
        bad.w0[0] = -bad.w0[0];
        CHECK_THROWS_AS(build_subproblem(s, probs, bad, opt), std::invalid_argument);
        ExpansionPoint flat = pt;
        flat.tau = 1.0;
        CHECK_THROWS_AS(build_subproblem(s, probs, flat, opt), std::invalid_argument);
    }
}

TEST_CASE("surrogate rates are tight at the expansion point and minorize nearby") {
    const Scenario s = fixed_layout();
    const auto probs = default_probs();
    const auto pt = matched_filter_point(s, 1.25);
    BuildOptions opt;
    opt.min_sensing_time = sensing_floor();
    const auto spec = build_subproblem(s, probs, pt, opt);

    const Eigen::VectorXd x = lift_point(spec, s, pt);
    const BeamformerSet b = to_beams(s, pt);
    for (int k = 0; k < s.num_sus(); ++k) {
        double expect = 0.0;
        for (RateCase c : {RateCase::c00, RateCase::c01, RateCase::c10, RateCase::c11}) {
            const double w = c == RateCase::c00   ? probs.pt00
                             : c == RateCase::c01 ? probs.pt01
                             : c == RateCase::c10 ? probs.pt10
                                                  : probs.pt11;
            expect += w * *worst_case_rate(s, b, k, c) / pt.tau;
        }
        CHECK(surrogate_rate(spec, x, k) == Catch::Approx(expect).margin(1e-9));
    }
    CHECK(surrogate_objective(spec, x) ==
          Catch::Approx(*sum_rate(s, probs, b)).margin(1e-9));

    // random probes inside the trust regions stay below the true value
    CounterRng rng(3, 0, 0);
    int probes = 0;
    while (probes < 1000) {
        ExpansionPoint q = pt;
        q.tau = 1.02 + 0.5 * rng.uniform();
        for (auto* set : {&q.w0, &q.w1}) {
            for (auto& w : *set) {
                for (int i = 0; i < w.size(); ++i) {
                    w(i) *= 1.0 + 0.4 * (rng.uniform() - 0.5);
                    w(i) += std::complex<double>(rng.normal(), rng.normal()) *
                            (0.02 * w.norm());
                }
            }
        }
        Eigen::VectorXd xq;
        try {
            xq = lift_point(spec, s, q);
        } catch (const std::invalid_argument&) {
            continue;  // wandered outside a trust region
        }
        const BeamformerSet bq = to_beams(s, q);
        bool ok = true;
        for (int k = 0; k < s.num_sus() && ok; ++k) {
            double true_rate = 0.0;
            for (RateCase c :
                 {RateCase::c00, RateCase::c01, RateCase::c10, RateCase::c11}) {
                const auto r = worst_case_rate(s, bq, k, c);
                if (!r) { ok = false; break; }
                const double w = c == RateCase::c00   ? probs.pt00
                                 : c == RateCase::c01 ? probs.pt01
                                 : c == RateCase::c10 ? probs.pt10
                                                      : probs.pt11;
                true_rate += w * *r / q.tau;
            }
            if (!ok) break;
            REQUIRE(surrogate_rate(spec, xq, k) <= true_rate + 1e-10);
        }
        if (ok) ++probes;
    }
}

TEST_CASE("conic lowering structure") {
    SECTION("linear-only spec becomes a pure linear program") {
        SubproblemSpec spec;
        spec.layout.n_tx = 1;
        spec.layout.n_su = 1;
        spec.layout.real_dim = 2;
        spec.objective = Eigen::Vector2d(1.0, 0.0);
        LinearConstraint lc;
        lc.row = Eigen::Vector2d(1.0, 1.0);
        lc.rhs = 3.0;
        lc.tag = ConstraintTag::min_rate;
        spec.linear.push_back(lc);
        const auto p = lower(spec);
        REQUIRE(p.cones.size() == 1);
        CHECK(p.cones[0].type == conic::ConeType::Nonnegative);
        CHECK(p.num_rows() == 1);
    }
    SECTION("one quadratic becomes one rotated cone of dim(z)+2") {
        SubproblemSpec spec;
        spec.layout.real_dim = 3;
        spec.objective = Eigen::Vector3d::Zero();
        QuadConstraint q;
        q.F = Eigen::MatrixXd::Zero(1, 3);
        q.F(0, 0) = 1.0;
        q.f = Eigen::VectorXd::Zero(1);
        q.u = Eigen::Vector3d(0, 1, 0);
        q.v = Eigen::Vector3d(0, 0, 1);
        q.tag = ConstraintTag::ratio_epigraph;
        spec.quadratic.push_back(q);
        const auto p = lower(spec);
        REQUIRE(p.cones.size() == 1);
        CHECK(p.cones[0].type == conic::ConeType::RotatedSoc);
        CHECK(p.cones[0].dim == 3);
    }
}

TEST_CASE("solved subproblem: feasible-set nesting and tight epigraphs") {
    const Scenario s = fixed_layout();
    const auto probs = default_probs();
    const double floor_ts = sensing_floor();
    BuildOptions opt;
    opt.min_sensing_time = floor_ts;

    // Feasibility phase first so the rate floors cannot make the main
    // subproblem infeasible at the raw seed.
    ExpansionPoint pt = matched_filter_point(s, 1.25);
    BuildOptions init = opt;
    init.initialization = true;
    const auto ispec = build_subproblem(s, probs, pt, init);
    const auto ires = conic::solve(lower(ispec));
    REQUIRE(ires.status == conic::SolveStatus::Optimal);
    REQUIRE(surrogate_objective(ispec, ires.x) > 0.0);
    pt = extract_point(ispec, ires.x);
    rotate_phases(s, pt);

    const auto spec = build_subproblem(s, probs, pt, opt);
    const auto res = conic::solve(lower(spec));
    REQUIRE(res.status == conic::SolveStatus::Optimal);

    ExpansionPoint sol = extract_point(spec, res.x);
    const BeamformerSet b = to_beams(s, sol);
    const auto slacks = constraint_slacks(s, probs, b, floor_ts);
    CHECK(slacks.min_slack() >= -1e-6);

    // improvement over the starting point's surrogate value
    CHECK(surrogate_objective(spec, res.x) >=
          surrogate_objective(spec, lift_point(spec, s, pt)) - 1e-9);

    // Epigraph constraints bind at the optimum. The solver leaves rows with
    // tiny objective sensitivity slack, so push the epigraph variables to
    // their extreme values first; that move may not lower the objective.
    Eigen::VectorXd xt = res.x;
    tighten_epigraphs(spec, xt);
    CHECK(surrogate_objective(spec, xt) >= surrogate_objective(spec, res.x) - 1e-9);
    for (const auto& q : spec.quadratic) {
        if (q.tag != ConstraintTag::numerator_epigraph &&
            q.tag != ConstraintTag::ratio_epigraph) {
            continue;
        }
        const double lhs = (q.F * xt + q.f).squaredNorm();
        const double rhs = (q.u.dot(xt) + q.u0) * (q.v.dot(xt) + q.v0);
        CHECK(rhs - lhs <= 1e-6 * std::abs(rhs));
    }

    // any spec-feasible point is cone-feasible with identical objective
    const Eigen::VectorXd xl = lift_point(spec, s, pt);
    const auto p = lower(spec);
    CHECK(-p.c.dot(xl) == Catch::Approx(surrogate_objective(spec, xl) -
                                        spec.objective_offset).margin(1e-12));
    const Eigen::VectorXd slack = p.h - p.G * xl;
    int row = 0;
    for (const auto& cb : p.cones) {
        if (cb.type == conic::ConeType::Nonnegative) {
            CHECK(slack.segment(row, cb.dim).minCoeff() >= -1e-9);
        } else {
            const double uu = slack(row), vv = slack(row + 1);
            CHECK(uu >= -1e-9);
            CHECK(vv >= -1e-9);
            CHECK(2.0 * uu * vv >=
                  slack.segment(row + 2, cb.dim - 2).squaredNorm() - 1e-9);
        }
        row += cb.dim;
    }
}

TEST_CASE("baseline model structures") {
    const Scenario s = fixed_layout();
    const auto probs = default_probs();
    const auto pt = matched_filter_point(s, 1.25);
    const int K = s.num_sus();

    SECTION("idle-only access: no interference constraints, w0 only") {
        BuildOptions opt;
        opt.model = Model::opportunistic;
        opt.min_sensing_time = sensing_floor();
        const auto spec = build_subproblem(s, probs, pt, opt);
        CHECK(spec.layout.has_w0);
        CHECK_FALSE(spec.layout.has_w1);
        CHECK(spec.layout.has_tau);
        for (const auto& q : spec.quadratic) {
            CHECK(q.tag != ConstraintTag::interference);
        }
        CHECK(spec.linear_count() == 2 * K + 1);
        CHECK(spec.quadratic_count() == 4 * K + 1);
    }

    SECTION("always-on underlay: no time split, tight at tau = 1") {
        BuildOptions opt;
        opt.model = Model::underlay;
        const auto spec = build_subproblem(s, probs, pt, opt);
        CHECK_FALSE(spec.layout.has_tau);
        CHECK(spec.quadratic_count() == 3 * K + 1 + s.num_pus());

        const Eigen::VectorXd x = lift_point(spec, s, pt);
        BeamformerSet b;
        b.w0 = pt.w1;  // unused by the 11-case evaluator
        b.w1 = pt.w1;
        b.t_s = 0.0;
        for (int k = 0; k < K; ++k) {
            CHECK(surrogate_rate(spec, x, k) ==
                  Catch::Approx(*worst_case_rate(s, b, k, RateCase::c11)).margin(1e-9));
        }
    }
}

TEST_CASE("textual dump carries the tagged structure") {
    const Scenario s = fixed_layout();
    const auto spec = build_subproblem(s, default_probs(), matched_filter_point(s, 1.2),
                                       BuildOptions{});
    std::ostringstream os;
    spec.dump(os);
    const std::string text = os.str();
    CHECK(text.rfind("psbss-subproblem v1", 0) == 0);
    for (const char* tag : {"min_rate", "trust_linear", "trust_quadratic",
                            "numerator_epigraph", "ratio_epigraph", "power",
                            "interference", "sensing_time"}) {
        INFO(tag);
        CHECK(text.find(tag) != std::string::npos);
    }
}
