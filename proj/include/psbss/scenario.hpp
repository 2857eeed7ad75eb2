#pragma once

// Physical instance of the network: geometry, path loss, Rician small-scale
// fading, estimated channel vectors with bounded uncertainty radii, powers
// and caps, and the slot timing. Estimated channels are the known quantity;
// every downstream formula consumes only (h_est, delta) worst-case terms.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "psbss/probmath.hpp"
#include "psbss/rng.hpp"

namespace psbss {

struct SuRecord {
    Eigen::VectorXcd h_est;  // estimated channel from the secondary BS
    double delta = 0.0;      // uncertainty radius, eps_s * ||h_est||^2
    double noise_var = 0.0;  // sigma_k^2, watts
    double min_rate = 0.0;   // Rbar_k, nats/s/Hz
};

struct PuRecord {
    Eigen::VectorXcd g_est;
    double delta_hat = 0.0;  // eps_p * ||g_est||^2
    double i_cap = 0.0;      // interference cap I_m, watts
};

struct SlotTiming {
    double T = 0.1;       // slot length, seconds
    double t_pr = 0.0;    // t_p + sum_k t_r_k + t_fc
};

struct Scenario {
    int n_tx = 0;
    std::vector<SuRecord> sus;
    std::vector<PuRecord> pus;
    double p_sbs = 0.0;    // total transmit power cap, watts
    double i_bar_p = 0.0;  // mean PU-to-SU interference, watts
    SlotTiming timing;

    int num_sus() const { return static_cast<int>(sus.size()); }
    int num_pus() const { return static_cast<int>(pus.size()); }

    void validate() const {
        if (n_tx < 1) throw std::invalid_argument("Scenario: n_tx < 1");
        if (sus.empty()) throw std::invalid_argument("Scenario: no SUs");
        if (!(p_sbs > 0.0)) throw std::invalid_argument("Scenario: p_sbs <= 0");
        if (!(timing.t_pr < timing.T)) {
            throw std::invalid_argument("Scenario: t_pr >= T");
        }
        for (const auto& su : sus) {
            if (su.h_est.size() != n_tx || !(su.delta >= 0.0) || !(su.noise_var > 0.0)) {
                throw std::invalid_argument("Scenario: malformed SU record");
            }
        }
        for (const auto& pu : pus) {
            if (pu.g_est.size() != n_tx || !(pu.delta_hat >= 0.0) || !(pu.i_cap > 0.0)) {
                throw std::invalid_argument("Scenario: malformed PU record");
            }
        }
    }
};

/// Geometry, fading and power parameters from which scenarios are drawn.
/// Power quantities are in dBm, distances in meters, times in seconds.
struct ScenarioConfig {
    int n_tx = 8;
    int n_su = 6;
    int n_pu = 3;
    double cell_radius = 100.0;
    double min_distance = 10.0;
    double pl_exponent = 3.0;
    double rician_k_db = 10.0;
    bool pure_los = false;  // K_R -> inf limit: deterministic unit-modulus fading
    double eps_s = 1e-3;
    double eps_p = 1e-2;
    double noise_dbm = -90.0;
    double p_sbs_dbm = 20.0;
    double i_cap_dbm = -5.0;
    double i_bar_p_dbm = 5.0;
    double min_rate_bps = 0.5;  // per-SU floor, bits/s/Hz
    double slot_T = 0.1;
    double t_p = 5e-3;
    double t_r = 2e-4;  // per-SU reporting mini-slot
    double t_fc = 1e-3;
    // Optional fixed polar positions (radius_m, angle_rad); when non-empty
    // they override random placement.
    std::vector<std::pair<double, double>> su_positions;
    std::vector<std::pair<double, double>> pu_positions;

    void validate() const {
        if (!(cell_radius > min_distance)) {
            throw std::invalid_argument("ScenarioConfig: cell_radius <= min_distance");
        }
        if (n_su < 1 || n_tx < 1) {
            throw std::invalid_argument("ScenarioConfig: need n_su >= 1 and n_tx >= 1");
        }
        if (n_pu < 0) throw std::invalid_argument("ScenarioConfig: n_pu < 0");
    }
};

namespace detail {

inline Eigen::VectorXcd draw_channel(const ScenarioConfig& cfg, CounterRng& rng,
                                     double radius, double angle) {
    const double amp = std::pow(radius, -cfg.pl_exponent / 2.0);
    const double kr = db_to_linear(cfg.rician_k_db);
    const double los_w = cfg.pure_los ? 1.0 : std::sqrt(kr / (kr + 1.0));
    const double nlos_w = cfg.pure_los ? 0.0 : std::sqrt(1.0 / (kr + 1.0));
    Eigen::VectorXcd h(cfg.n_tx);
    for (int n = 0; n < cfg.n_tx; ++n) {
        // Uniform linear array line-of-sight phase ramp.
        const double phase = -M_PI * n * std::sin(angle);
        std::complex<double> los(std::cos(phase), std::sin(phase));
        std::complex<double> scatter(rng.normal() / std::sqrt(2.0),
                                     rng.normal() / std::sqrt(2.0));
        h(n) = amp * (los_w * los + nlos_w * scatter);
    }
    return h;
}

inline std::pair<double, double> draw_position(const ScenarioConfig& cfg,
                                               CounterRng& rng) {
    // Uniform over the annulus between min_distance and cell_radius.
    const double a2 = cfg.min_distance * cfg.min_distance;
    const double b2 = cfg.cell_radius * cfg.cell_radius;
    const double r = std::sqrt(a2 + rng.uniform() * (b2 - a2));
    return {r, 2.0 * M_PI * rng.uniform()};
}

}  // namespace detail

/// Deterministically generate a scenario for (seed, trial). Entity streams
/// are independent, so adding users does not perturb existing draws.
inline Scenario generate_scenario(std::uint64_t seed, const ScenarioConfig& cfg,
                                  std::uint64_t trial = 0) {
    cfg.validate();
    Scenario s;
    s.n_tx = cfg.n_tx;
    s.p_sbs = dbm_to_watt(cfg.p_sbs_dbm);
    s.i_bar_p = dbm_to_watt(cfg.i_bar_p_dbm);
    s.timing.T = cfg.slot_T;
    s.timing.t_pr = cfg.t_p + cfg.n_su * cfg.t_r + cfg.t_fc;
    const double noise = dbm_to_watt(cfg.noise_dbm);
    const double min_rate_nats = cfg.min_rate_bps * std::log(2.0);
    for (int k = 0; k < cfg.n_su; ++k) {
        CounterRng rng(seed, trial, static_cast<std::uint64_t>(k));
        auto [r, ang] = k < static_cast<int>(cfg.su_positions.size())
                            ? cfg.su_positions[k]
                            : detail::draw_position(cfg, rng);
        SuRecord su;
        su.h_est = detail::draw_channel(cfg, rng, r, ang);
        su.delta = cfg.eps_s * su.h_est.squaredNorm();
        su.noise_var = noise;
        su.min_rate = min_rate_nats;
        s.sus.push_back(std::move(su));
    }
    for (int m = 0; m < cfg.n_pu; ++m) {
        CounterRng rng(seed, trial, static_cast<std::uint64_t>(cfg.n_su + m));
        auto [r, ang] = m < static_cast<int>(cfg.pu_positions.size())
                            ? cfg.pu_positions[m]
                            : detail::draw_position(cfg, rng);
        PuRecord pu;
        pu.g_est = detail::draw_channel(cfg, rng, r, ang);
        pu.delta_hat = cfg.eps_p * pu.g_est.squaredNorm();
        pu.i_cap = dbm_to_watt(cfg.i_cap_dbm);
        s.pus.push_back(std::move(pu));
    }
    s.validate();
    return s;
}

/// Documented reference layout used for figure reproduction: K = 6 SUs on a
/// 40 m ring, M = 3 PUs on a 70 m ring, N_t = 8, powers per the default
/// configuration.
inline ScenarioConfig reference_layout_config() {
    ScenarioConfig cfg;
    for (int k = 0; k < cfg.n_su; ++k) {
        cfg.su_positions.emplace_back(40.0, (10.0 + 60.0 * k) * M_PI / 180.0);
    }
    for (int m = 0; m < cfg.n_pu; ++m) {
        cfg.pu_positions.emplace_back(70.0, (20.0 + 120.0 * m) * M_PI / 180.0);
    }
    return cfg;
}

inline Scenario fixed_layout() { return generate_scenario(1, reference_layout_config(), 0); }

// ---- text serialization (regression fixtures) ----

inline void write_scenario(std::ostream& os, const Scenario& s) {
    os << std::setprecision(17);
    os << "psbss-scenario v1\n";
    os << "n_tx " << s.n_tx << "\n";
    os << "p_sbs " << s.p_sbs << "\n";
    os << "i_bar_p " << s.i_bar_p << "\n";
    os << "T " << s.timing.T << "\n";
    os << "t_pr " << s.timing.t_pr << "\n";
    os << "n_su " << s.sus.size() << "\n";
    for (const auto& su : s.sus) {
        os << "su " << su.delta << " " << su.noise_var << " " << su.min_rate;
        for (int n = 0; n < su.h_est.size(); ++n) {
            os << " " << su.h_est(n).real() << " " << su.h_est(n).imag();
        }
        os << "\n";
    }
    os << "n_pu " << s.pus.size() << "\n";
    for (const auto& pu : s.pus) {
        os << "pu " << pu.delta_hat << " " << pu.i_cap;
        for (int n = 0; n < pu.g_est.size(); ++n) {
            os << " " << pu.g_est(n).real() << " " << pu.g_est(n).imag();
        }
        os << "\n";
    }
}

inline Scenario read_scenario(std::istream& is) {
    std::string tag, version;
    is >> tag >> version;
    if (tag != "psbss-scenario" || version != "v1") {
        throw std::runtime_error("read_scenario: bad header");
    }
    Scenario s;
    std::size_t n_su = 0, n_pu = 0;
    std::string key;
    is >> key >> s.n_tx;
    is >> key >> s.p_sbs;
    is >> key >> s.i_bar_p;
    is >> key >> s.timing.T;
    is >> key >> s.timing.t_pr;
    is >> key >> n_su;
    for (std::size_t k = 0; k < n_su; ++k) {
        SuRecord su;
        su.h_est.resize(s.n_tx);
        is >> key >> su.delta >> su.noise_var >> su.min_rate;
        for (int n = 0; n < s.n_tx; ++n) {
            double re, im;
            is >> re >> im;
            su.h_est(n) = {re, im};
        }
        s.sus.push_back(std::move(su));
    }
    is >> key >> n_pu;
    for (std::size_t m = 0; m < n_pu; ++m) {
        PuRecord pu;
        pu.g_est.resize(s.n_tx);
        is >> key >> pu.delta_hat >> pu.i_cap;
        for (int n = 0; n < s.n_tx; ++n) {
            double re, im;
            is >> re >> im;
            pu.g_est(n) = {re, im};
        }
        s.pus.push_back(std::move(pu));
    }
    if (!is) throw std::runtime_error("read_scenario: truncated input");
    s.validate();
    return s;
}

/// Stable content hash, used by the harness to assert that paired models
/// consume identical scenarios.
inline std::uint64_t scenario_hash(const Scenario& s) {
    std::ostringstream os;
    write_scenario(os, s);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : os.str()) {
        h = (h ^ c) * 0x100000001b3ULL;
    }
    return h;
}

}  // namespace psbss
