#pragma once

// Inner-approximation machinery for the joint beamforming / sensing-time
// problem. The nonconvex per-case rate ln(1 + 1/phi)/tau is minorized by the
// affine function a - b*phi - c*tau around an expansion point, the rate
// numerator (Re{h^H w})^2 is linearized, and the resulting concave program is
// assembled as a tagged list of linear and quadratic constraints that lowers
// mechanically to conic form.
//
// Conventions used throughout:
//   - phi = chi / ((Re{h^H w})^2 - delta ||w||^2), the inverse worst-case SINR
//   - tau = T / (T - t_pr - t_s) > 1, so the transmit fraction is 1/tau
//   - all quadratic constraints are of the form ||F x + f||^2 <= (u.x+u0)(v.x+v0)

#include <Eigen/Dense>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "psbss/conic.hpp"
#include "psbss/rates.hpp"
#include "psbss/scenario.hpp"
#include "psbss/sensing.hpp"

namespace psbss {

struct SurrogateCoefficients {
    double a = 0.0, b = 0.0, c = 0.0;
};

namespace detail {

// Shared with the no-time-split baseline, which expands at tau = 1.
inline SurrogateCoefficients coeffs_at(double phi_n, double tau_n) {
    const double lg = std::log1p(1.0 / phi_n);
    SurrogateCoefficients k;
    k.a = 2.0 * lg / tau_n + 1.0 / (tau_n * (1.0 + phi_n));
    k.b = 1.0 / (tau_n * phi_n * (1.0 + phi_n));
    k.c = lg / (tau_n * tau_n);
    return k;
}

}  // namespace detail

/// Lower-bound coefficients of ln(1+1/phi)/tau around (phi_n, tau_n). The
/// identity a - b*phi_n - c*tau_n = ln(1+1/phi_n)/tau_n holds exactly and the
/// affine function minorizes the true expression over phi > 0, tau > 1.
inline SurrogateCoefficients coefficients(double phi_n, double tau_n) {
    if (!(phi_n > 0.0) || !std::isfinite(phi_n)) {
        throw std::invalid_argument("coefficients: phi_n must be positive");
    }
    if (!(tau_n > 1.0) || !std::isfinite(tau_n)) {
        throw std::invalid_argument("coefficients: tau_n must exceed 1");
    }
    return detail::coeffs_at(phi_n, tau_n);
}

inline double lower_bound_value(const SurrogateCoefficients& k, double phi, double tau) {
    return k.a - k.b * phi - k.c * tau;
}

/// Per-iteration cost of the interior-point subproblem solve,
/// ((2N_t+6)K+1)^2 * sqrt(11K+M+2) * (2 N_t K + 17K + M + 3).
inline double complexity_estimate(int n_tx, int k_users, int m_pus) {
    if (n_tx < 1 || k_users < 1 || m_pus < 0) {
        throw std::invalid_argument("complexity_estimate: bad dimensions");
    }
    const double n = n_tx, k = k_users, m = m_pus;
    const double vars = (2.0 * n + 6.0) * k + 1.0;
    return vars * vars * std::sqrt(11.0 * k + m + 2.0) *
           (2.0 * n * k + 17.0 * k + m + 3.0);
}

/// Iterate around which the subproblem is built. Beam sets not used by the
/// chosen model may be left empty; tau is ignored when the model has no time
/// split. The builder requires Re{h_k^H w_k} > 0 for every active beam, i.e.
/// iterates must follow the phase convention Im{h_k^H w_k} = 0.
struct ExpansionPoint {
    std::vector<Eigen::VectorXcd> w0;
    std::vector<Eigen::VectorXcd> w1;
    double tau = 0.0;
};

enum class Model { psbss, opportunistic, underlay };

struct BuildOptions {
    Model model = Model::psbss;
    // Feasibility phase: maximize the worst min-rate margin via one auxiliary
    // scalar instead of enforcing the per-user rate floors.
    bool initialization = false;
    double min_sensing_time = 0.0;        // Omega floor on t_s, seconds
    double margin = 1e-7;                 // closure margin for strict inequalities
    std::optional<double> fixed_t_s;      // pins the sensing time when set
};

enum class ConstraintTag {
    min_rate,
    init_margin,
    trust_linear,
    trust_quadratic,
    numerator_epigraph,
    ratio_epigraph,
    power,
    interference,
    sensing_time,
    fixed_time,
};

inline const char* to_string(ConstraintTag t) {
    switch (t) {
        case ConstraintTag::min_rate: return "min_rate";
        case ConstraintTag::init_margin: return "init_margin";
        case ConstraintTag::trust_linear: return "trust_linear";
        case ConstraintTag::trust_quadratic: return "trust_quadratic";
        case ConstraintTag::numerator_epigraph: return "numerator_epigraph";
        case ConstraintTag::ratio_epigraph: return "ratio_epigraph";
        case ConstraintTag::power: return "power";
        case ConstraintTag::interference: return "interference";
        case ConstraintTag::sensing_time: return "sensing_time";
        default: return "fixed_time";
    }
}

struct LinearConstraint {
    Eigen::VectorXd row;  // row . x <= rhs
    double rhs = 0.0;
    ConstraintTag tag{};
};

struct QuadConstraint {
    Eigen::MatrixXd F;  // ||F x + f||^2 <= (u.x + u0)(v.x + v0)
    Eigen::VectorXd f;
    Eigen::VectorXd u;
    double u0 = 0.0;
    Eigen::VectorXd v;
    double v0 = 0.0;
    ConstraintTag tag{};
};

/// Real-variable layout: [w0 blocks | w1 blocks | tau | omega0 | omega1 |
/// theta slots | aux]. Each beam block stores Re parts then Im parts.
struct VariableLayout {
    int n_tx = 0, n_su = 0;
    bool has_w0 = false, has_w1 = false, has_tau = false, has_aux = false;
    int n_slots = 0;
    int w0_base = -1, w1_base = -1, tau_index = -1;
    int omega0_base = -1, omega1_base = -1, theta_base = -1, aux_index = -1;
    int real_dim = 0;

    int beam_len() const { return 2 * n_tx; }
    int w_offset(int k, int set) const {
        const int base = set == 0 ? w0_base : w1_base;
        if (base < 0) throw std::logic_error("VariableLayout: beam set absent");
        return base + k * beam_len();
    }
    int omega_index(int k, int set) const {
        const int base = set == 0 ? omega0_base : omega1_base;
        if (base < 0) throw std::logic_error("VariableLayout: omega absent");
        return base + k;
    }
    int theta_index(int slot, int k) const { return theta_base + slot * n_su + k; }
};

struct CaseSlot {
    RateCase c{};
    double weight = 0.0;
};

struct SubproblemSpec {
    VariableLayout layout;
    std::vector<CaseSlot> slots;
    Model model = Model::psbss;
    bool initialization = false;

    // maximize objective . x + objective_offset
    Eigen::VectorXd objective;
    double objective_offset = 0.0;

    std::vector<LinearConstraint> linear;
    std::vector<QuadConstraint> quadratic;

    // Expansion data kept for point lifting and diagnostics: coeffs(slot)(k)
    // and the linearization references r_n = Re{h_k^H w_k^{(n)}} per beam set.
    std::vector<std::vector<SurrogateCoefficients>> coeffs;
    std::vector<double> ref0, ref1;
    double tau_n = 1.0;

    /// Scalar decision variables with complex beam entries counted once,
    /// (2 N_t + 6) K + 1 for the full model.
    int decision_variable_count() const {
        int n = 0;
        if (layout.has_w0) n += layout.n_tx * layout.n_su;
        if (layout.has_w1) n += layout.n_tx * layout.n_su;
        if (layout.has_tau) n += 1;
        if (layout.omega0_base >= 0) n += layout.n_su;
        if (layout.omega1_base >= 0) n += layout.n_su;
        n += layout.n_slots * layout.n_su;
        if (layout.has_aux) n += 1;
        return n;
    }
    int linear_count() const { return static_cast<int>(linear.size()); }
    int quadratic_count() const { return static_cast<int>(quadratic.size()); }

    void dump(std::ostream& os) const;
};

namespace detail {

inline int beam_set_of(RateCase c) { return case_uses_idle_beams(c) ? 0 : 1; }

// Linear functional Re{h^H w} over the real block of w at `off`.
template <class Row>
inline void add_re_row(Row&& row, const Eigen::VectorXcd& h, int off, double scale) {
    const int n = static_cast<int>(h.size());
    for (int i = 0; i < n; ++i) {
        row(off + i) += scale * h(i).real();
        row(off + n + i) += scale * h(i).imag();
    }
}

template <class Row>
inline void set_im_row(Row&& row, const Eigen::VectorXcd& h, int off, double scale) {
    const int n = static_cast<int>(h.size());
    for (int i = 0; i < n; ++i) {
        row(off + i) = -scale * h(i).imag();
        row(off + n + i) = scale * h(i).real();
    }
}

inline const std::vector<Eigen::VectorXcd>& beams_for(const ExpansionPoint& p, int set) {
    return set == 0 ? p.w0 : p.w1;
}

}  // namespace detail

/// Worst-case interference-plus-noise of case `c` at SU k when only the beam
/// set matching the case is active (the other set does not transmit in that
/// case, so it never enters).
inline double case_chi(const Scenario& s, const std::vector<Eigen::VectorXcd>& w,
                       int k, RateCase c) {
    const auto& su = s.sus.at(k);
    double chi = su.noise_var;
    if (case_has_pu_interference(c)) chi += s.i_bar_p;
    for (int j = 0; j < s.num_sus(); ++j) {
        if (j == k) continue;
        chi += std::norm(su.h_est.dot(w[j])) + su.delta * w[j].squaredNorm();
    }
    return chi;
}

/// phi_k for case `c` at the expansion point, using the phase-aligned
/// numerator (Re{h^H w})^2 - delta ||w||^2. Throws when invalid.
inline double surrogate_phi(const Scenario& s, const ExpansionPoint& p, int k,
                            RateCase c) {
    const auto& w = detail::beams_for(p, detail::beam_set_of(c));
    const auto& su = s.sus.at(k);
    const double re = su.h_est.dot(w[k]).real();
    const double num = re * re - su.delta * w[k].squaredNorm();
    if (!(num > 0.0)) {
        throw std::invalid_argument("surrogate_phi: point outside trust region");
    }
    return case_chi(s, w, k, c) / num;
}

/// Rotate each per-user beam so h_k^H w_k is real and nonnegative. Rates and
/// every constraint are phase invariant, so this is a pure re-parameterization
/// that keeps the numerator linearization tight across iterations.
inline void rotate_phases(const Scenario& s, ExpansionPoint& p) {
    for (auto* beams : {&p.w0, &p.w1}) {
        for (std::size_t k = 0; k < beams->size(); ++k) {
            const std::complex<double> ip = s.sus.at(k).h_est.dot((*beams)[k]);
            const double mag = std::abs(ip);
            if (mag > 0.0) (*beams)[k] *= std::conj(ip) / mag;
        }
    }
}

inline SubproblemSpec build_subproblem(const Scenario& s, const CaseProbabilities& probs,
                                       const ExpansionPoint& pt, const BuildOptions& opt) {
    s.validate();
    const int K = s.num_sus();
    const int M = s.num_pus();
    const int nw = 2 * s.n_tx;

    SubproblemSpec spec;
    spec.model = opt.model;
    spec.initialization = opt.initialization;

    auto& L = spec.layout;
    L.n_tx = s.n_tx;
    L.n_su = K;
    switch (opt.model) {
        case Model::psbss:
            L.has_w0 = L.has_w1 = true;
            L.has_tau = true;
            spec.slots = {{RateCase::c00, probs.pt00},
                          {RateCase::c01, probs.pt01},
                          {RateCase::c10, probs.pt10},
                          {RateCase::c11, probs.pt11}};
            break;
        case Model::opportunistic:
            L.has_w0 = true;
            L.has_tau = true;
            spec.slots = {{RateCase::c00, probs.pt00}, {RateCase::c10, probs.pt10}};
            break;
        case Model::underlay:
            L.has_w1 = true;
            spec.slots = {{RateCase::c11, 1.0}};
            break;
    }
    L.has_aux = opt.initialization;
    L.n_slots = static_cast<int>(spec.slots.size());

    if (L.has_w0 && static_cast<int>(pt.w0.size()) != K) {
        throw std::invalid_argument("build_subproblem: expansion point lacks w0");
    }
    if (L.has_w1 && static_cast<int>(pt.w1.size()) != K) {
        throw std::invalid_argument("build_subproblem: expansion point lacks w1");
    }
    spec.tau_n = L.has_tau ? pt.tau : 1.0;
    if (L.has_tau && !(pt.tau > 1.0)) {
        throw std::invalid_argument("build_subproblem: expansion tau must exceed 1");
    }

    int pos = 0;
    if (L.has_w0) { L.w0_base = pos; pos += K * nw; }
    if (L.has_w1) { L.w1_base = pos; pos += K * nw; }
    if (L.has_tau) { L.tau_index = pos; pos += 1; }
    if (L.has_w0) { L.omega0_base = pos; pos += K; }
    if (L.has_w1) { L.omega1_base = pos; pos += K; }
    L.theta_base = pos;
    pos += L.n_slots * K;
    if (L.has_aux) { L.aux_index = pos; pos += 1; }
    L.real_dim = pos;

    const int n = L.real_dim;
    auto zero_row = [n] { return Eigen::VectorXd::Zero(n).eval(); };

    // Linearization references and trust-region validation.
    spec.ref0.assign(K, 0.0);
    spec.ref1.assign(K, 0.0);
    for (int set = 0; set < 2; ++set) {
        if (!(set == 0 ? L.has_w0 : L.has_w1)) continue;
        const auto& beams = detail::beams_for(pt, set);
        for (int k = 0; k < K; ++k) {
            const auto& su = s.sus[k];
            if (beams[k].size() != s.n_tx) {
                throw std::invalid_argument("build_subproblem: beam length mismatch");
            }
            const double re = su.h_est.dot(beams[k]).real();
            const double num = re * re - su.delta * beams[k].squaredNorm();
            if (!(re > 0.0) || !(num > 0.0)) {
                throw std::invalid_argument(
                    "build_subproblem: expansion point violates trust region");
            }
            (set == 0 ? spec.ref0 : spec.ref1)[k] = re;
        }
    }

    // Per-slot lower-bound coefficients at the expansion point.
    spec.coeffs.resize(spec.slots.size());
    for (std::size_t sl = 0; sl < spec.slots.size(); ++sl) {
        spec.coeffs[sl].resize(K);
        for (int k = 0; k < K; ++k) {
            const double phi = surrogate_phi(s, pt, k, spec.slots[sl].c);
            spec.coeffs[sl][k] = detail::coeffs_at(phi, spec.tau_n);
        }
    }

    // Objective and per-user rate rows. With no time split the -c*tau term is
    // a constant folded into the offset.
    spec.objective = zero_row();
    std::vector<Eigen::VectorXd> rate_row(K, zero_row());
    std::vector<double> rate_const(K, 0.0);
    for (std::size_t sl = 0; sl < spec.slots.size(); ++sl) {
        for (int k = 0; k < K; ++k) {
            const auto& cf = spec.coeffs[sl][k];
            const double w = spec.slots[sl].weight;
            rate_row[k](L.theta_index(static_cast<int>(sl), k)) -= w * cf.b;
            if (L.has_tau) {
                rate_row[k](L.tau_index) -= w * cf.c;
                rate_const[k] += w * cf.a;
            } else {
                rate_const[k] += w * (cf.a - cf.c);
            }
        }
    }
    // The always-on model carries no per-user rate floors, only the caps.
    const bool floors = opt.model != Model::underlay;
    if (opt.initialization) {
        spec.objective(L.aux_index) = 1.0;
        for (int k = 0; k < K; ++k) {
            LinearConstraint lc;
            lc.row = -rate_row[k];
            lc.row(L.aux_index) = 1.0;
            lc.rhs = rate_const[k] - (floors ? s.sus[k].min_rate : 0.0);
            lc.tag = ConstraintTag::init_margin;
            spec.linear.push_back(std::move(lc));
        }
    } else {
        for (int k = 0; k < K; ++k) {
            spec.objective += rate_row[k];
            spec.objective_offset += rate_const[k];
            if (!floors) continue;
            LinearConstraint lc;
            lc.row = -rate_row[k];
            lc.rhs = rate_const[k] - s.sus[k].min_rate;
            lc.tag = ConstraintTag::min_rate;
            spec.linear.push_back(std::move(lc));
        }
    }

    // Trust regions and numerator epigraphs, one pair per active beam.
    for (int set = 0; set < 2; ++set) {
        if (!(set == 0 ? L.has_w0 : L.has_w1)) continue;
        for (int k = 0; k < K; ++k) {
            const auto& su = s.sus[k];
            const double rn = (set == 0 ? spec.ref0 : spec.ref1)[k];
            const int off = L.w_offset(k, set);
            const double sd = std::sqrt(su.delta);
            // Closure margins scale with the point's own numerator: near-cell
            // users sit at ~1e-6 W while edge users sit at ~1e-9 W, so an
            // absolute margin would reject legitimate edge-user seeds.
            const double num =
                rn * rn - su.delta * detail::beams_for(pt, set)[k].squaredNorm();

            LinearConstraint lt;
            lt.row = zero_row();
            detail::add_re_row(lt.row, su.h_est, off, -2.0);
            lt.rhs = -rn * (1.0 + opt.margin);
            lt.tag = ConstraintTag::trust_linear;
            spec.linear.push_back(std::move(lt));

            QuadConstraint qt;
            qt.F = Eigen::MatrixXd::Zero(nw, n);
            qt.F.block(0, off, nw, nw) = sd * Eigen::MatrixXd::Identity(nw, nw);
            qt.f = Eigen::VectorXd::Zero(nw);
            qt.u = zero_row();
            detail::add_re_row(qt.u, su.h_est, off, 2.0 * rn);
            qt.u0 = -rn * rn - opt.margin * num;
            qt.v = zero_row();
            qt.v0 = 1.0;
            qt.tag = ConstraintTag::trust_quadratic;

            QuadConstraint qe = qt;
            qe.u0 = -rn * rn;
            qe.u(L.omega_index(k, set)) = -1.0;
            qe.tag = ConstraintTag::numerator_epigraph;
            spec.quadratic.push_back(std::move(qt));
            spec.quadratic.push_back(std::move(qe));
        }
    }

    // Quadratic-over-linear epigraphs: chi_k(w) / omega <= theta per slot.
    for (std::size_t sl = 0; sl < spec.slots.size(); ++sl) {
        const RateCase c = spec.slots[sl].c;
        const int set = detail::beam_set_of(c);
        for (int k = 0; k < K; ++k) {
            const auto& su = s.sus[k];
            const double sd = std::sqrt(su.delta);
            QuadConstraint q;
            const int rows = (K - 1) * (2 + nw) + 1;
            q.F = Eigen::MatrixXd::Zero(rows, n);
            q.f = Eigen::VectorXd::Zero(rows);
            int r = 0;
            for (int j = 0; j < K; ++j) {
                if (j == k) continue;
                const int off = L.w_offset(j, set);
                detail::add_re_row(q.F.row(r), su.h_est, off, 1.0);
                detail::set_im_row(q.F.row(r + 1), su.h_est, off, 1.0);
                r += 2;
                q.F.block(r, off, nw, nw) = sd * Eigen::MatrixXd::Identity(nw, nw);
                r += nw;
            }
            double cst = su.noise_var;
            if (case_has_pu_interference(c)) cst += s.i_bar_p;
            q.f(r) = std::sqrt(cst);
            q.u = zero_row();
            q.u(L.omega_index(k, set)) = 1.0;
            q.v = zero_row();
            q.v(L.theta_index(static_cast<int>(sl), k)) = 1.0;
            q.tag = ConstraintTag::ratio_epigraph;
            spec.quadratic.push_back(std::move(q));
        }
    }

    // Transmit power: composite-probability weighted squared norms within
    // tau * P_sbs (no weights and no tau for the no-time-split model).
    {
        QuadConstraint q;
        const int sets = (L.has_w0 ? 1 : 0) + (L.has_w1 ? 1 : 0);
        q.F = Eigen::MatrixXd::Zero(sets * K * nw, n);
        q.f = Eigen::VectorXd::Zero(sets * K * nw);
        int r = 0;
        for (int set = 0; set < 2; ++set) {
            if (!(set == 0 ? L.has_w0 : L.has_w1)) continue;
            const double wgt = opt.model == Model::underlay
                                   ? 1.0
                                   : (set == 0 ? probs.phat0 : probs.phat1);
            for (int k = 0; k < K; ++k) {
                q.F.block(r, L.w_offset(k, set), nw, nw) =
                    std::sqrt(wgt) * Eigen::MatrixXd::Identity(nw, nw);
                r += nw;
            }
        }
        q.u = zero_row();
        if (L.has_tau) q.u(L.tau_index) = 1.0; else q.u0 = 1.0;
        q.v = zero_row();
        q.v0 = s.p_sbs;
        q.tag = ConstraintTag::power;
        spec.quadratic.push_back(std::move(q));
    }

    // Per-PU interference caps; the opportunistic model transmits only when
    // the band is declared idle and carries none.
    if (opt.model != Model::opportunistic) {
        const double a0 = opt.model == Model::underlay ? 0.0 : probs.p10;
        const double a1 = opt.model == Model::underlay ? 1.0 : 1.0 - probs.p10;
        for (int m = 0; m < M; ++m) {
            const auto& pu = s.pus[m];
            QuadConstraint q;
            std::vector<std::pair<int, double>> active;  // (set, weight)
            if (L.has_w0 && a0 > 0.0) active.emplace_back(0, a0);
            if (L.has_w1 && a1 > 0.0) active.emplace_back(1, a1);
            const int rows = static_cast<int>(active.size()) * K * (2 + nw);
            q.F = Eigen::MatrixXd::Zero(rows, n);
            q.f = Eigen::VectorXd::Zero(rows);
            int r = 0;
            for (auto [set, wgt] : active) {
                const double sw = std::sqrt(wgt);
                const double sdh = std::sqrt(wgt * pu.delta_hat);
                for (int k = 0; k < K; ++k) {
                    const int off = L.w_offset(k, set);
                    detail::add_re_row(q.F.row(r), pu.g_est, off, sw);
                    detail::set_im_row(q.F.row(r + 1), pu.g_est, off, sw);
                    r += 2;
                    q.F.block(r, off, nw, nw) =
                        sdh * Eigen::MatrixXd::Identity(nw, nw);
                    r += nw;
                }
            }
            q.u = zero_row();
            if (L.has_tau) q.u(L.tau_index) = 1.0; else q.u0 = 1.0;
            q.v = zero_row();
            q.v0 = pu.i_cap;
            q.tag = ConstraintTag::interference;
            spec.quadratic.push_back(std::move(q));
        }
    }

    // Sensing-time floor expressed on tau.
    if (L.has_tau) {
        const double win = s.timing.T - s.timing.t_pr;
        double floor_ts = opt.min_sensing_time;
        if (opt.fixed_t_s) floor_ts = *opt.fixed_t_s;
        if (!(floor_ts < win)) {
            throw std::invalid_argument("build_subproblem: sensing floor exhausts the slot");
        }
        const double tau_floor =
            std::max(floor_ts > 0.0 ? s.timing.T / (win - floor_ts) : 1.0,
                     1.0 + opt.margin);
        LinearConstraint lc;
        lc.row = zero_row();
        lc.row(L.tau_index) = -1.0;
        lc.rhs = -tau_floor;
        lc.tag = ConstraintTag::sensing_time;
        spec.linear.push_back(std::move(lc));
        if (opt.fixed_t_s) {
            LinearConstraint up;
            up.row = zero_row();
            up.row(L.tau_index) = 1.0;
            up.rhs = std::max(s.timing.T / (win - floor_ts), 1.0 + opt.margin);
            up.tag = ConstraintTag::fixed_time;
            spec.linear.push_back(std::move(up));
        }
    }

    return spec;
}

/// Mechanical lowering to conic form: linear constraints become nonnegative
/// slacks, each quadratic becomes one rotated cone (u, v/2, F x + f).
inline conic::ConicProblem lower(const SubproblemSpec& spec) {
    const int n = spec.layout.real_dim;
    if (spec.objective.size() != n) {
        throw std::invalid_argument("lower: malformed spec");
    }
    int m = static_cast<int>(spec.linear.size());
    for (const auto& q : spec.quadratic) m += 2 + static_cast<int>(q.F.rows());

    conic::ConicProblem p;
    p.c = -spec.objective;
    p.G = Eigen::MatrixXd::Zero(m, n);
    p.h = Eigen::VectorXd::Zero(m);
    int r = 0;
    if (!spec.linear.empty()) {
        p.cones.push_back({conic::ConeType::Nonnegative,
                           static_cast<int>(spec.linear.size())});
        for (const auto& lc : spec.linear) {
            if (lc.row.size() != n) throw std::invalid_argument("lower: bad row");
            p.G.row(r) = lc.row.transpose();
            p.h(r) = lc.rhs;
            ++r;
        }
    }
    for (const auto& q : spec.quadratic) {
        const int zr = static_cast<int>(q.F.rows());
        if (q.u.size() != n || q.v.size() != n || q.F.cols() != n ||
            q.f.size() != zr) {
            throw std::invalid_argument("lower: bad quadratic block");
        }
        p.cones.push_back({conic::ConeType::RotatedSoc, zr + 2});
        p.G.row(r) = -q.u.transpose();
        p.h(r) = q.u0;
        p.G.row(r + 1) = -0.5 * q.v.transpose();
        p.h(r + 1) = 0.5 * q.v0;
        p.G.middleRows(r + 2, zr) = -q.F;
        p.h.segment(r + 2, zr) = q.f;
        r += zr + 2;
    }
    p.validate();
    return p;
}

/// Natural embedding of a beamformer point into the subproblem variables:
/// each omega takes its linearized-numerator value, each theta the implied
/// ratio, and the auxiliary scalar (if any) the worst min-rate margin.
inline Eigen::VectorXd lift_point(const SubproblemSpec& spec, const Scenario& s,
                                  const ExpansionPoint& p) {
    const auto& L = spec.layout;
    const int K = L.n_su;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(L.real_dim);
    for (int set = 0; set < 2; ++set) {
        if (!(set == 0 ? L.has_w0 : L.has_w1)) continue;
        const auto& beams = detail::beams_for(p, set);
        for (int k = 0; k < K; ++k) {
            const int off = L.w_offset(k, set);
            x.segment(off, L.n_tx) = beams[k].real();
            x.segment(off + L.n_tx, L.n_tx) = beams[k].imag();
            const auto& su = s.sus[k];
            const double rn = (set == 0 ? spec.ref0 : spec.ref1)[k];
            const double re = su.h_est.dot(beams[k]).real();
            const double lin = 2.0 * rn * re - rn * rn - su.delta * beams[k].squaredNorm();
            if (!(lin > 0.0)) {
                throw std::invalid_argument("lift_point: linearized numerator not positive");
            }
            x(L.omega_index(k, set)) = lin;
        }
    }
    const double tau = L.has_tau ? p.tau : 1.0;
    if (L.has_tau) x(L.tau_index) = tau;
    for (std::size_t sl = 0; sl < spec.slots.size(); ++sl) {
        const int set = detail::beam_set_of(spec.slots[sl].c);
        for (int k = 0; k < K; ++k) {
            x(L.theta_index(static_cast<int>(sl), k)) =
                case_chi(s, detail::beams_for(p, set), k, spec.slots[sl].c) /
                x(L.omega_index(k, set));
        }
    }
    if (L.has_aux) {
        double worst = std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) {
            double rate = 0.0;
            for (std::size_t sl = 0; sl < spec.slots.size(); ++sl) {
                const auto& cf = spec.coeffs[sl][k];
                const double th = x(L.theta_index(static_cast<int>(sl), k));
                const double tau_term = L.has_tau ? tau : 1.0;
                rate += spec.slots[sl].weight * (cf.a - cf.b * th - cf.c * tau_term);
            }
            worst = std::min(worst, rate - s.sus[k].min_rate);
        }
        x(L.aux_index) = worst;
    }
    return x;
}

/// Surrogate rate of SU k at a subproblem point, nats/s/Hz (already divided
/// by tau through the coefficient construction).
inline double surrogate_rate(const SubproblemSpec& spec, const Eigen::VectorXd& x, int k) {
    const auto& L = spec.layout;
    double rate = 0.0;
    for (std::size_t sl = 0; sl < spec.slots.size(); ++sl) {
        const auto& cf = spec.coeffs[sl][k];
        const double th = x(L.theta_index(static_cast<int>(sl), k));
        const double tau = L.has_tau ? x(L.tau_index) : 1.0;
        rate += spec.slots[sl].weight * (cf.a - cf.b * th - cf.c * tau);
    }
    return rate;
}

inline double surrogate_objective(const SubproblemSpec& spec, const Eigen::VectorXd& x) {
    return spec.objective.dot(x) + spec.objective_offset;
}

/// Pushes the epigraph variables of a feasible point to their binding values:
/// each omega up to its linearized-numerator bound, then each theta down to
/// chi/omega. Neither move can violate any other constraint, and the objective
/// (which touches theta with nonpositive weight only) can only improve. Useful
/// after an interior-point solve, where rows with near-zero objective
/// sensitivity are left slack by complementarity.
inline void tighten_epigraphs(const SubproblemSpec& spec, Eigen::VectorXd& x) {
    const auto& L = spec.layout;
    auto omega_entry = [&](const QuadConstraint& q, double sign) {
        for (int set = 0; set < 2; ++set) {
            const int base = set == 0 ? L.omega0_base : L.omega1_base;
            if (base < 0) continue;
            for (int k = 0; k < L.n_su; ++k) {
                if (q.u(base + k) == sign) return base + k;
            }
        }
        throw std::logic_error("tighten_epigraphs: omega entry not found");
    };
    for (const auto& q : spec.quadratic) {
        if (q.tag != ConstraintTag::numerator_epigraph) continue;
        const int idx = omega_entry(q, -1.0);
        x(idx) += q.u.dot(x) + q.u0 - (q.F * x + q.f).squaredNorm();
    }
    for (const auto& q : spec.quadratic) {
        if (q.tag != ConstraintTag::ratio_epigraph) continue;
        const int idx = omega_entry(q, 1.0);
        int th = -1;
        for (int i = L.theta_base; i < L.theta_base + L.n_slots * L.n_su; ++i) {
            if (q.v(i) == 1.0) { th = i; break; }
        }
        if (th < 0) throw std::logic_error("tighten_epigraphs: theta entry not found");
        x(th) = (q.F * x + q.f).squaredNorm() / x(idx);
    }
}

/// Read the beamformers (and tau) back out of a subproblem solution.
inline ExpansionPoint extract_point(const SubproblemSpec& spec, const Eigen::VectorXd& x) {
    const auto& L = spec.layout;
    ExpansionPoint p;
    p.tau = L.has_tau ? x(L.tau_index) : 1.0;
    for (int set = 0; set < 2; ++set) {
        if (!(set == 0 ? L.has_w0 : L.has_w1)) continue;
        auto& beams = set == 0 ? p.w0 : p.w1;
        beams.resize(L.n_su);
        for (int k = 0; k < L.n_su; ++k) {
            const int off = L.w_offset(k, set);
            beams[k].resize(L.n_tx);
            for (int i = 0; i < L.n_tx; ++i) {
                beams[k](i) = {x(off + i), x(off + L.n_tx + i)};
            }
        }
    }
    return p;
}

inline void SubproblemSpec::dump(std::ostream& os) const {
    os << std::setprecision(17);
    os << "psbss-subproblem v1\n";
    os << "dim " << layout.real_dim << " vars " << decision_variable_count()
       << " linear " << linear.size() << " quadratic " << quadratic.size() << "\n";
    os << "objective_offset " << objective_offset << "\nobjective";
    for (int i = 0; i < objective.size(); ++i) os << " " << objective(i);
    os << "\n";
    for (const auto& lc : linear) {
        os << "lin " << to_string(lc.tag) << " rhs " << lc.rhs << " row";
        for (int i = 0; i < lc.row.size(); ++i) os << " " << lc.row(i);
        os << "\n";
    }
    for (const auto& q : quadratic) {
        os << "quad " << to_string(q.tag) << " rows " << q.F.rows() << " u0 "
           << q.u0 << " v0 " << q.v0 << "\n";
    }
}

}  // namespace psbss
