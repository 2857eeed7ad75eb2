#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "psbss/driver.hpp"
#include "psbss/prediction.hpp"
#include "psbss/sensing.hpp"

using namespace psbss;

namespace {

CaseProbabilities default_probs(double intensity = 0.4) {
    const TrafficModel tm = TrafficModel::from_intensity(intensity);
    const auto fusion = overall_prediction(tm, LocalPredictor{0.25, 0.7, 7});
    return case_probabilities(tm, fusion, 0.1, 0.9);
}

DriverConfig default_config() {
    DriverConfig cfg;
    cfg.min_sensing_time = min_sensing_time(SensingConfig{}, 0.1, 0.9);
    return cfg;
}

// Shared full-model run on the reference layout; several cases inspect it.
const RunResult& reference_run() {
    static const RunResult r = run(fixed_layout(), default_probs(), default_config());
    return r;
}

int main_iterations(const IterationTrace& tr) {
    int n = 0;
    for (const auto& rec : tr.records) {
        if (!rec.init_phase) ++n;
    }
    return n;
}

// Single-user scalar-channel scenario, no robustness, no PUs.
Scenario tiny_scenario() {
    Scenario s;
    s.n_tx = 1;
    s.p_sbs = 0.1;
    s.i_bar_p = 0.0;
    SuRecord su;
    su.h_est = Eigen::VectorXcd::Constant(1, std::complex<double>(1.0, 0.0));
    su.delta = 0.0;
    su.noise_var = 1e-3;
    su.min_rate = 0.0;
    s.sus = {su};
    return s;
}

}  // namespace

TEST_CASE("initialization is immediate when rate floors vanish") {
    Scenario s = fixed_layout();
    for (auto& su : s.sus) su.min_rate = 0.0;
    const auto init = initialize(s, default_probs(), default_config());
    REQUIRE(init.feasible);
    CHECK(init.trace.records.empty());
}

TEST_CASE("initialization reaches the rate floors with non-decreasing margins") {
    const auto init = initialize(fixed_layout(), default_probs(), default_config());
    REQUIRE(init.feasible);
    double prev = -std::numeric_limits<double>::infinity();
    for (const auto& rec : init.trace.records) {
        REQUIRE(rec.init_phase);
        CHECK(rec.objective >= prev - 1e-9);
        prev = rec.objective;
    }
    CHECK(init.best_margin >= 0.0);
}

TEST_CASE("initialization reports hopeless instances") {
    Scenario s = fixed_layout();
    s.p_sbs = 1e-6;  // -30 dBm
    for (auto& su : s.sus) su.min_rate = 10.0 * std::numbers::ln2;
    DriverConfig cfg = default_config();
    cfg.init_max_iters = 5;
    const auto init = initialize(s, default_probs(), cfg);
    CHECK_FALSE(init.feasible);
    CHECK(init.best_margin < 0.0);
    CHECK_FALSE(init.trace.note.empty());
}

TEST_CASE("full-model ascent: monotone, feasible, quickly convergent") {
    const auto& r = reference_run();
    REQUIRE(r.feasible);
    REQUIRE(r.converged);
    CHECK(main_iterations(r.trace) <= 20);

    double prev = -std::numeric_limits<double>::infinity();
    for (const auto& rec : r.trace.records) {
        if (rec.init_phase) continue;
        CHECK(rec.status == conic::SolveStatus::Optimal);
        CHECK(rec.violation <= 1e-6);
        CHECK(rec.objective >= prev - 1e-7);
        prev = rec.objective;
    }
    const auto slacks = constraint_slacks(fixed_layout(), default_probs(), r.beams,
                                          default_config().min_sensing_time);
    CHECK(slacks.min_slack() >= -1e-6);
    CHECK(r.objective == Catch::Approx(*sum_rate(fixed_layout(), default_probs(),
                                                 r.beams)));
}

TEST_CASE("surrogate is tight at the returned point and the run is stationary") {
    const auto& r = reference_run();
    REQUIRE(r.feasible);
    const Scenario s = fixed_layout();
    const auto probs = default_probs();
    const DriverConfig cfg = default_config();

    BuildOptions opt;
    opt.min_sensing_time = cfg.min_sensing_time;
    const auto spec = build_subproblem(s, probs, r.point, opt);
    const Eigen::VectorXd xl = lift_point(spec, s, r.point);
    CHECK(surrogate_objective(spec, xl) == Catch::Approx(r.objective).margin(1e-8));

    // Re-expanding and re-solving from the terminal point barely moves it.
    const auto res = conic::solve(lower(spec), cfg.solver);
    REQUIRE(res.status == conic::SolveStatus::Optimal);
    ExpansionPoint next = extract_point(spec, res.x);
    rotate_phases(s, next);
    const auto again = sum_rate(s, probs, detail::to_beamformers(s, next, Model::psbss));
    REQUIRE(again.has_value());
    CHECK(std::abs(*again - r.objective) <=
          10.0 * cfg.eps_err * std::max(1.0, std::abs(r.objective)));
}

TEST_CASE("pinned sensing time converges faster to a lower objective") {
    const auto& joint = reference_run();
    DriverConfig cfg = default_config();
    cfg.fixed_t_s = 5e-3;
    const auto fixed = run(fixed_layout(), default_probs(), cfg);
    REQUIRE(fixed.feasible);
    REQUIRE(fixed.converged);
    CHECK(fixed.objective <= joint.objective + 1e-6);
    CHECK(main_iterations(fixed.trace) <= main_iterations(joint.trace));
}

TEST_CASE("single-user run exhausts the power budget") {
    const Scenario s = tiny_scenario();
    const auto probs = default_probs();
    const auto cfg = default_config();
    const auto r = run(s, probs, cfg);
    REQUIRE(r.feasible);
    REQUIRE(r.converged);
    const auto slacks = constraint_slacks(s, probs, r.beams, cfg.min_sensing_time);
    CHECK(std::abs(slacks.power) <= 1e-4 * s.p_sbs);
}

TEST_CASE("underlay baseline ignores the traffic intensity") {
    const Scenario s = fixed_layout();
    const auto cfg = default_config();
    const auto lo = run_baseline(s, default_probs(0.2), cfg, Model::underlay);
    const auto hi = run_baseline(s, default_probs(0.7), cfg, Model::underlay);
    REQUIRE(lo.feasible);
    REQUIRE(hi.feasible);
    CHECK(lo.objective == Catch::Approx(hi.objective).margin(1e-9));
}

TEST_CASE("idle-only access degrades as the band gets busier") {
    const Scenario s = fixed_layout();
    const auto cfg = default_config();
    double prev = std::numeric_limits<double>::infinity();
    for (double intensity : {0.2, 0.4, 0.6}) {
        const auto r = run_baseline(s, default_probs(intensity), cfg,
                                    Model::opportunistic);
        REQUIRE(r.feasible);
        CHECK(r.objective <= prev + 1e-6);
        prev = r.objective;
    }
}

TEST_CASE("underlay equals the full model with the busy case forced") {
    Scenario s = fixed_layout();
    s.pus.clear();
    s.timing.t_pr = 0.0;
    for (auto& su : s.sus) su.min_rate = 0.0;

    DriverConfig cfg = default_config();
    cfg.eps_err = 1e-7;
    const auto under = run_baseline(s, default_probs(), cfg, Model::underlay);
    REQUIRE(under.feasible);

    CaseProbabilities forced{};
    forced.p11 = 1.0;
    forced.pt11 = 1.0;
    forced.phat1 = 1.0;
    DriverConfig fcfg = cfg;
    fcfg.min_sensing_time = 0.0;
    fcfg.fixed_t_s = 1e-6 * s.timing.T;

    // Sharpest check: from one expansion point the two convex subproblems
    // describe the same program (up to the vanishing time split), so their
    // optima must agree.
    ExpansionPoint pt = seed_point(s, default_probs(), cfg, Model::underlay);
    pt.w0 = pt.w1;
    pt.tau = s.timing.T / (s.timing.T - *fcfg.fixed_t_s);
    // The forced instance keeps a weightless idle-beam block, so it is
    // degenerate and stalls a touch short of the usual tier. The optima are
    // compared at 1e-3, so accepting 1e-4 here loses nothing.
    conic::SolverSettings xst = cfg.solver;
    xst.tol_relaxed = 1e-4;
    BuildOptions uo;
    uo.model = Model::underlay;
    const auto uspec = build_subproblem(s, default_probs(), pt, uo);
    const auto ures = conic::solve(lower(uspec), xst);
    REQUIRE(ures.status == conic::SolveStatus::Optimal);
    BuildOptions fo;
    fo.fixed_t_s = fcfg.fixed_t_s;
    const auto fspec = build_subproblem(s, forced, pt, fo);
    const auto fres = conic::solve(lower(fspec), xst);
    REQUIRE(fres.status == conic::SolveStatus::Optimal);
    CHECK(fres.x(fspec.layout.tau_index) * surrogate_objective(fspec, fres.x) ==
          Catch::Approx(surrogate_objective(uspec, ures.x)).epsilon(1e-3));

    // The complete runs agree loosely; their ascents stall at different
    // depths on this badly conditioned family.
    const auto full = run(s, forced, fcfg);
    REQUIRE(full.feasible);
    const double frac = full.beams.tx_fraction(s.timing);
    CHECK(full.objective / frac ==
          Catch::Approx(under.objective).epsilon(0.10));
}

TEST_CASE("trace export uses bits and one row per iteration") {
    const auto& r = reference_run();
    std::ostringstream os;
    r.trace.write_csv(os);
    std::istringstream is(os.str());
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "iteration,objective_bits,violation,status");
    std::size_t rows = 0;
    double last_bits = 0.0;
    while (std::getline(is, line)) {
        ++rows;
        std::istringstream row(line);
        std::string field;
        std::getline(row, field, ',');
        std::getline(row, field, ',');
        last_bits = std::stod(field);
    }
    CHECK(rows == r.trace.records.size());
    CHECK(last_bits == Catch::Approx(r.objective / std::numbers::ln2));
}

TEST_CASE("baseline entry point rejects the full model") {
    CHECK_THROWS_AS(run_baseline(fixed_layout(), default_probs(), default_config(),
                                 Model::psbss),
                    std::invalid_argument);
}
