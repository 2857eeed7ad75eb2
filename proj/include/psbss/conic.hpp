#pragma once

// Self-contained convex conic solver: problems with a linear objective and
// nonnegative / second-order / rotated second-order cone constraints, solved
// by a primal-dual interior-point method on the homogeneous self-dual
// embedding (so infeasibility and unboundedness are certified, not guessed).
// Dense linear algebra throughout; the normal-equations matrix is assembled
// blockwise over each cone's column support.
//
// Rotated cone normalization, fixed here and used everywhere:
//   {(u, v, z) : 2 u v >= ||z||^2, u >= 0, v >= 0}.

#include <Eigen/Dense>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace psbss::conic {

enum class ConeType { Nonnegative, Soc, RotatedSoc };

struct ConeBlock {
    ConeType type;
    int dim;
};

/// minimize c^T x  subject to  h - G x in K, where K is the product of the
/// listed cone blocks over the rows of G in order.
struct ConicProblem {
    Eigen::VectorXd c;
    Eigen::MatrixXd G;
    Eigen::VectorXd h;
    std::vector<ConeBlock> cones;

    int num_vars() const { return static_cast<int>(c.size()); }
    int num_rows() const { return static_cast<int>(h.size()); }

    void validate() const {
        if (G.cols() != c.size() || G.rows() != h.size()) {
            throw std::invalid_argument("ConicProblem: inconsistent dimensions");
        }
        int covered = 0;
        for (const auto& b : cones) {
            const int min_dim = b.type == ConeType::Nonnegative ? 1
                                : b.type == ConeType::Soc       ? 1
                                                                : 2;
            if (b.dim < min_dim) {
                throw std::invalid_argument("ConicProblem: cone block too small");
            }
            covered += b.dim;
        }
        if (covered != num_rows()) {
            throw std::invalid_argument("ConicProblem: rows not covered by cone blocks");
        }
    }
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIters, NumericalFailure };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::Infeasible: return "infeasible";
        case SolveStatus::Unbounded: return "unbounded";
        case SolveStatus::MaxIters: return "max_iters";
        default: return "numerical_failure";
    }
}

struct SolveResult {
    SolveStatus status = SolveStatus::NumericalFailure;
    Eigen::VectorXd x;  // primal variables
    Eigen::VectorXd s;  // primal slacks, h - G x
    Eigen::VectorXd z;  // dual cone variables
    double objective = 0.0;
    double primal_residual = std::numeric_limits<double>::infinity();
    double dual_residual = std::numeric_limits<double>::infinity();
    double gap = std::numeric_limits<double>::infinity();
    int iterations = 0;
};

struct SolverSettings {
    double tol = 1e-8;
    // Acceptance tier for stalled runs: when double precision runs out before
    // tol is met (the homogeneous tau can legitimately converge to ~1e-6 on
    // badly ranged instances and the relative gap then floors around 1e-6 to
    // 1e-5), the best iterate is still reported as optimal if its residuals
    // clear this looser bound.
    double tol_relaxed = 1e-5;
    int max_iters = 100;
    double step_fraction = 0.98;
    double static_reg = 1e-11;
    bool equilibrate = true;  // Ruiz row/column scaling of (G, h, c)
};

namespace detail {

// Internally every rotated block is mapped to a plain SOC block through the
// symmetric orthogonal transform T: (u, v, z) -> ((u+v)/sqrt2, (u-v)/sqrt2, z);
// 2uv >= ||z||^2  <=>  ((u+v)/sqrt2)^2 >= ((u-v)/sqrt2)^2 + ||z||^2.
// T is its own inverse, and duals transform the same way.

struct Block {
    ConeType type;  // Nonnegative or Soc after conversion
    int offset;
    int dim;
    bool was_rotated;
    std::vector<int> cols;  // columns of G with nonzeros in this block

    // NT scaling state
    Eigen::VectorXd w_diag;  // nonneg: w_i = sqrt(s_i / z_i)
    Eigen::VectorXd wbar;    // soc: unit-hyperbolic scaling point
    double eta = 1.0;        // soc: scaling magnitude
};

inline void apply_rotation_inplace(Eigen::Ref<Eigen::VectorXd> v) {
    const double r = 1.0 / std::sqrt(2.0);
    const double a = v(0), b = v(1);
    v(0) = r * (a + b);
    v(1) = r * (a - b);
}

// J u with J = diag(1, -I).
inline Eigen::VectorXd jmul(const Eigen::VectorXd& u) {
    Eigen::VectorXd r = -u;
    r(0) = u(0);
    return r;
}

struct Cones {
    std::vector<Block> blocks;
    int total_dim = 0;
    int barrier_degree = 0;

    static Cones build(const ConicProblem& p, double sparsity_eps = 0.0) {
        Cones cs;
        int off = 0;
        for (const auto& cb : p.cones) {
            Block b;
            b.type = cb.type == ConeType::Nonnegative ? ConeType::Nonnegative : ConeType::Soc;
            b.was_rotated = cb.type == ConeType::RotatedSoc;
            b.offset = off;
            b.dim = cb.dim;
            for (int j = 0; j < p.G.cols(); ++j) {
                bool nz = false;
                for (int i = 0; i < cb.dim && !nz; ++i) {
                    nz = std::abs(p.G(off + i, j)) > sparsity_eps;
                }
                if (nz) b.cols.push_back(j);
            }
            off += cb.dim;
            cs.barrier_degree += cb.type == ConeType::Nonnegative ? cb.dim : 1;
            cs.blocks.push_back(std::move(b));
        }
        cs.total_dim = off;
        return cs;
    }

    /// Identity element of the cone product.
    Eigen::VectorXd identity() const {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(total_dim);
        for (const auto& b : blocks) {
            if (b.type == ConeType::Nonnegative) {
                e.segment(b.offset, b.dim).setOnes();
            } else {
                e(b.offset) = 1.0;
            }
        }
        return e;
    }

    /// Margin to the cone boundary: positive iff strictly interior.
    double interior_margin(const Eigen::VectorXd& v) const {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& b : blocks) {
            if (b.type == ConeType::Nonnegative) {
                m = std::min(m, v.segment(b.offset, b.dim).minCoeff());
            } else {
                const double head = v(b.offset);
                const double tail = v.segment(b.offset + 1, b.dim - 1).norm();
                m = std::min(m, head - tail);
            }
        }
        return m;
    }

    /// Largest step a with v + a*dv staying in the cone (may be +inf).
    double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) const {
        double amax = std::numeric_limits<double>::infinity();
        for (const auto& b : blocks) {
            if (b.type == ConeType::Nonnegative) {
                for (int i = 0; i < b.dim; ++i) {
                    const double d = dv(b.offset + i);
                    if (d < 0.0) amax = std::min(amax, -v(b.offset + i) / d);
                }
            } else {
                const auto v1 = v.segment(b.offset + 1, b.dim - 1);
                const auto d1 = dv.segment(b.offset + 1, b.dim - 1);
                const double v0 = v(b.offset), d0 = dv(b.offset);
                // roots of (v0 + a d0)^2 - ||v1 + a d1||^2 = 0
                const double qa = d0 * d0 - d1.squaredNorm();
                const double qb = 2.0 * (v0 * d0 - v1.dot(d1));
                const double qc = v0 * v0 - v1.squaredNorm();
                double bound = std::numeric_limits<double>::infinity();
                const double disc = qb * qb - 4.0 * qa * qc;
                if (std::abs(qa) < 1e-14 * (std::abs(qb) + std::abs(qc))) {
                    if (qb < 0.0) bound = -qc / qb;
                } else if (disc >= 0.0) {
                    const double sq = std::sqrt(disc);
                    const double r1 = (-qb - sq) / (2.0 * qa);
                    const double r2 = (-qb + sq) / (2.0 * qa);
                    for (double r : {std::min(r1, r2), std::max(r1, r2)}) {
                        if (r > 0.0 && v0 + r * d0 >= 0.0) {
                            bound = std::min(bound, r);
                        }
                    }
                }
                // head positivity
                if (d0 < 0.0) bound = std::min(bound, -v0 / d0);
                amax = std::min(amax, bound);
            }
        }
        return amax;
    }

    /// Update NT scaling from strictly interior s, z; returns false if
    /// numerically degenerate.
    bool update_scaling(const Eigen::VectorXd& s, const Eigen::VectorXd& z) {
        for (auto& b : blocks) {
            if (b.type == ConeType::Nonnegative) {
                b.w_diag = (s.segment(b.offset, b.dim).array() /
                            z.segment(b.offset, b.dim).array())
                               .sqrt();
                if (!b.w_diag.allFinite() || (b.w_diag.array() <= 0.0).any()) return false;
            } else {
                const auto sb = s.segment(b.offset, b.dim);
                const auto zb = z.segment(b.offset, b.dim);
                const double rs2 = sb(0) * sb(0) - sb.tail(b.dim - 1).squaredNorm();
                const double rz2 = zb(0) * zb(0) - zb.tail(b.dim - 1).squaredNorm();
                if (!(rs2 > 0.0) || !(rz2 > 0.0)) return false;
                const double rs = std::sqrt(rs2), rz = std::sqrt(rz2);
                const Eigen::VectorXd sbar = sb / rs;
                const Eigen::VectorXd zbar = zb / rz;
                const double gamma = std::sqrt((1.0 + sbar.dot(zbar)) / 2.0);
                if (!(gamma > 0.0)) return false;
                b.wbar = (sbar + jmul(zbar)) / (2.0 * gamma);
                b.eta = std::sqrt(rs / rz);
            }
        }
        return true;
    }

    // W u (symmetric NT scaling): soc W = eta [w0, w1^T; w1, I + w1 w1^T / (1 + w0)]
    // with (w0, w1) = wbar. Note 2 wbar wbar^T - J is W^2 / eta^2, not W.
    void apply_w(Eigen::VectorXd& u) const {
        for (const auto& b : blocks) {
            auto ub = u.segment(b.offset, b.dim);
            if (b.type == ConeType::Nonnegative) {
                ub.array() *= b.w_diag.array();
            } else {
                const double w0 = b.wbar(0);
                const auto w1 = b.wbar.tail(b.dim - 1);
                const double t = w1.dot(ub.tail(b.dim - 1));
                const double u0 = ub(0);
                ub(0) = b.eta * (w0 * u0 + t);
                ub.tail(b.dim - 1) =
                    b.eta * (ub.tail(b.dim - 1) + (u0 + t / (1.0 + w0)) * w1);
            }
        }
    }

    // W^-1 u: soc W^-1 = J W J / eta^2, i.e. W / eta^2 with w1 negated.
    void apply_w_inv(Eigen::VectorXd& u) const {
        for (const auto& b : blocks) {
            auto ub = u.segment(b.offset, b.dim);
            if (b.type == ConeType::Nonnegative) {
                ub.array() /= b.w_diag.array();
            } else {
                const double w0 = b.wbar(0);
                const auto w1 = b.wbar.tail(b.dim - 1);
                const double t = w1.dot(ub.tail(b.dim - 1));
                const double u0 = ub(0);
                ub(0) = (w0 * u0 - t) / b.eta;
                ub.tail(b.dim - 1) =
                    (ub.tail(b.dim - 1) + (t / (1.0 + w0) - u0) * w1) / b.eta;
            }
        }
    }

    /// lambda = W z (= W^-1 s at the NT point).
    Eigen::VectorXd scaled_point(const Eigen::VectorXd& z) const {
        Eigen::VectorXd lam = z;
        apply_w(lam);
        return lam;
    }

    /// Jordan product u o v.
    Eigen::VectorXd jordan_mul(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
        Eigen::VectorXd r(total_dim);
        for (const auto& b : blocks) {
            const auto ub = u.segment(b.offset, b.dim);
            const auto vb = v.segment(b.offset, b.dim);
            if (b.type == ConeType::Nonnegative) {
                r.segment(b.offset, b.dim) = ub.array() * vb.array();
            } else {
                r(b.offset) = ub.dot(vb);
                r.segment(b.offset + 1, b.dim - 1) =
                    ub(0) * vb.tail(b.dim - 1) + vb(0) * ub.tail(b.dim - 1);
            }
        }
        return r;
    }

    /// Solve lambda o x = d for x.
    Eigen::VectorXd jordan_div(const Eigen::VectorXd& lam, const Eigen::VectorXd& d) const {
        Eigen::VectorXd x(total_dim);
        for (const auto& b : blocks) {
            const auto lb = lam.segment(b.offset, b.dim);
            const auto db = d.segment(b.offset, b.dim);
            if (b.type == ConeType::Nonnegative) {
                x.segment(b.offset, b.dim) = db.array() / lb.array();
            } else {
                const double det = lb(0) * lb(0) - lb.tail(b.dim - 1).squaredNorm();
                const double x0 = (lb(0) * db(0) - lb.tail(b.dim - 1).dot(db.tail(b.dim - 1))) / det;
                x(b.offset) = x0;
                x.segment(b.offset + 1, b.dim - 1) =
                    (db.tail(b.dim - 1) - x0 * lb.tail(b.dim - 1)) / lb(0);
            }
        }
        return x;
    }
};

// Normal-equations KKT solver for [0 G^T; G -W^2][dx; dz] = [r1; r2]:
// dx = M^-1 (r1 + G^T W^-2 r2), dz = W^-2 (G dx - r2) with M = G^T W^-2 G.
class KktSolver {
public:
    KktSolver(const Eigen::MatrixXd& G, const Cones& cones, double reg)
        : G_(G), cones_(cones), reg_(reg) {}

    bool factor() {
        const int n = static_cast<int>(G_.cols());
        const int m = static_cast<int>(G_.rows());
        B_.setZero(m, n);
        // M = B^T B accumulated per block over each block's column support;
        // the blocks are narrow, so this is much cheaper than the full GEMM.
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
        Eigen::MatrixXd sub, B, Mi;
        for (const auto& b : cones_.blocks) {
            const int ns = static_cast<int>(b.cols.size());
            if (ns == 0) continue;
            sub.resize(b.dim, ns);
            for (int j = 0; j < ns; ++j) {
                sub.col(j) = G_.block(b.offset, b.cols[j], b.dim, 1);
            }
            if (b.type == ConeType::Nonnegative) {
                B = b.w_diag.cwiseInverse().asDiagonal() * sub;
            } else {
                // W^-1 block applied to every column at once
                const double w0 = b.wbar(0);
                const Eigen::VectorXd w1 = b.wbar.tail(b.dim - 1);
                const Eigen::RowVectorXd t = w1.transpose() * sub.bottomRows(b.dim - 1);
                B.resize(b.dim, ns);
                B.row(0) = (w0 * sub.row(0) - t) / b.eta;
                B.bottomRows(b.dim - 1) =
                    (sub.bottomRows(b.dim - 1) +
                     w1 * (t / (1.0 + w0) - sub.row(0))) /
                    b.eta;
            }
            for (int j = 0; j < ns; ++j) {
                B_.block(b.offset, b.cols[j], b.dim, 1) = B.col(j);
            }
            Mi.noalias() = B.transpose() * B;
            for (int j = 0; j < ns; ++j) {
                for (int i = 0; i < ns; ++i) {
                    M(b.cols[i], b.cols[j]) += Mi(i, j);
                }
            }
        }
        M.diagonal().array() += reg_;
        llt_.compute(M);
        return llt_.info() == Eigen::Success;
    }

    // Solves [0 G^T; G -W^2] (dx, dz) = (r1, r2). Internally the second
    // variable is the scaled direction dzt = W dz, so the system becomes
    // [0 B^T; B -I] (dx, dzt) = (r1, W^-1 r2) with B = W^-1 G. Working with
    // single powers of W keeps the error proportional to cond(W) rather than
    // cond(W)^2, which matters near convergence. The regularization added in
    // factor() is undone by iterative refinement on the scaled system.
    void solve(const Eigen::VectorXd& r1, const Eigen::VectorXd& r2,
               Eigen::VectorXd& dx, Eigen::VectorXd& dz,
               Eigen::VectorXd* dz_scaled = nullptr) const {
        Eigen::VectorXd r2s = r2;
        cones_.apply_w_inv(r2s);
        Eigen::VectorXd dzt;
        solve_once(r1, r2s, dx, dzt);
        const double rhs = std::max(1.0, std::max(r1.norm(), r2s.norm()));
        double best = std::numeric_limits<double>::infinity();
        Eigen::VectorXd ex, ez, bx = dx, bz = dzt;
        for (int pass = 0; pass < 10; ++pass) {
            const Eigen::VectorXd e1 = r1 - B_.transpose() * dzt;
            const Eigen::VectorXd e2 = r2s - B_ * dx + dzt;
            const double err = std::max(e1.norm(), e2.norm()) / rhs;
            if (err < best) {
                best = err;
                bx = dx;
                bz = dzt;
            }
            if (err > 2.0 * best || err < 1e-15) break;
            solve_once(e1, e2, ex, ez);
            dx += ex;
            dzt += ez;
        }
        dx = bx;
        if (dz_scaled) *dz_scaled = bz;
        dz = bz;
        cones_.apply_w_inv(dz);
    }

    // Scaled-space elimination: dx = M^-1 (r1 + B^T r2s), dzt = B dx - r2s.
    void solve_once(const Eigen::VectorXd& r1, const Eigen::VectorXd& r2s,
                    Eigen::VectorXd& dx, Eigen::VectorXd& dzt) const {
        dx = llt_.solve(r1 + B_.transpose() * r2s);
        dzt = B_ * dx - r2s;
    }

private:
    const Eigen::MatrixXd& G_;
    const Cones& cones_;
    double reg_;
    Eigen::MatrixXd B_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

}  // namespace detail

inline SolveResult solve(const ConicProblem& prob, const SolverSettings& st = {}) {
    prob.validate();
    if (!(st.tol > 0.0)) throw std::invalid_argument("solve: tol must be positive");

    const int n = prob.num_vars();
    const int m = prob.num_rows();

    // Internal copy with rotated blocks mapped to plain SOCs.
    Eigen::MatrixXd G = prob.G;
    Eigen::VectorXd h = prob.h;
    detail::Cones cones = detail::Cones::build(prob);
    for (const auto& b : cones.blocks) {
        if (!b.was_rotated) continue;
        const double r = 1.0 / std::sqrt(2.0);
        for (int j = 0; j < n; ++j) {
            const double a = G(b.offset, j), c2 = G(b.offset + 1, j);
            G(b.offset, j) = r * (a + c2);
            G(b.offset + 1, j) = r * (a - c2);
        }
        detail::apply_rotation_inplace(h.segment(b.offset, b.dim));
    }

    // Ruiz equilibration: rows are scaled uniformly inside each SOC block so
    // cone membership is preserved; columns get independent scales. The model
    // data this solver sees spans ~12 orders of magnitude (noise floors in
    // watts against unit-scale probabilities), which the scaling flattens.
    Eigen::VectorXd c = prob.c;
    Eigen::VectorXd dcol = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd erow = Eigen::VectorXd::Ones(m);
    if (st.equilibrate) {
        for (int sweep = 0; sweep < 4; ++sweep) {
            for (const auto& b : cones.blocks) {
                if (b.type == ConeType::Nonnegative) {
                    for (int i = b.offset; i < b.offset + b.dim; ++i) {
                        const double r = G.row(i).cwiseAbs().maxCoeff();
                        if (r > 0.0) {
                            const double f = 1.0 / std::sqrt(r);
                            G.row(i) *= f;
                            erow(i) *= f;
                        }
                    }
                } else {
                    const double r =
                        G.middleRows(b.offset, b.dim).cwiseAbs().maxCoeff();
                    if (r > 0.0) {
                        const double f = 1.0 / std::sqrt(r);
                        G.middleRows(b.offset, b.dim) *= f;
                        erow.segment(b.offset, b.dim) *= f;
                    }
                }
            }
            for (int j = 0; j < n; ++j) {
                const double cmax = G.col(j).cwiseAbs().maxCoeff();
                if (cmax > 0.0) {
                    const double f = 1.0 / std::sqrt(cmax);
                    G.col(j) *= f;
                    dcol(j) *= f;
                }
            }
        }
        h.array() *= erow.array();
        c.array() *= dcol.array();
        const double cmax = c.cwiseAbs().maxCoeff();
        if (cmax > 0.0) c /= cmax;
    }

    SolveResult out;
    const Eigen::VectorXd e = cones.identity();
    const double nu = cones.barrier_degree + 1;

    // Initial point: least-squares primal/dual estimates shifted into the
    // cone interior when necessary.
    Eigen::VectorXd x, s, z;
    {
        detail::Cones unit = cones;
        for (auto& b : unit.blocks) {
            if (b.type == conic::ConeType::Nonnegative) {
                b.w_diag = Eigen::VectorXd::Ones(b.dim);
            } else {
                b.wbar = Eigen::VectorXd::Zero(b.dim);
                b.wbar(0) = 1.0;
                b.eta = 1.0;
            }
        }
        detail::KktSolver init_kkt(G, unit, 1e-9);
        if (!init_kkt.factor()) {
            out.status = SolveStatus::NumericalFailure;
            return out;
        }
        Eigen::VectorXd dz;
        init_kkt.solve(Eigen::VectorXd::Zero(n), h, x, dz);
        Eigen::VectorXd s_hat = h - G * x;
        const double mp = cones.interior_margin(s_hat);
        s = mp > 0.0 ? s_hat : s_hat + (1.0 - mp) * e;

        Eigen::VectorXd xd;
        init_kkt.solve(-c, Eigen::VectorXd::Zero(m), xd, dz);
        Eigen::VectorXd z_hat = -dz;
        const double md = cones.interior_margin(z_hat);
        z = md > 0.0 ? z_hat : z_hat + (1.0 - md) * e;
    }
    double tau = 1.0, kappa = 1.0;

    const double cnorm = std::max(1.0, c.norm());
    const double hnorm = std::max(1.0, h.norm());

    auto finalize = [&](SolveStatus status) {
        out.status = status;
        out.iterations = std::max(out.iterations, 1);
        out.x = dcol.asDiagonal() * (x / tau);
        Eigen::VectorXd s_int = (s.array() / erow.array()).matrix() / tau;
        Eigen::VectorXd z_int = (z.array() * erow.array()).matrix() / tau;
        // map rotated blocks back to their native coordinates
        for (const auto& b : cones.blocks) {
            if (b.was_rotated) {
                detail::apply_rotation_inplace(s_int.segment(b.offset, b.dim));
                detail::apply_rotation_inplace(z_int.segment(b.offset, b.dim));
            }
        }
        out.s = s_int;
        out.z = z_int;
        out.objective = prob.c.dot(out.x);
        return out;
    };

    detail::KktSolver kkt(G, cones, st.static_reg);
    Eigen::VectorXd dx1(n), dz1(m), dx2(n), dz2(m), dx(n), dz(m), ds(m);
    Eigen::VectorXd dzt1(m), dzt2(m), dzt(m), wds(m);

    // Best iterate seen, for the reduced-accuracy acceptance tier.
    Eigen::VectorXd bx = x, bs = s, bz = z;
    double btau = tau, bmetric = std::numeric_limits<double>::infinity();
    double bpres = 0.0, bdres = 0.0, bgap = 0.0;
    auto fail = [&](SolveStatus status) {
        if (bmetric <= st.tol_relaxed) {
            x = bx;
            s = bs;
            z = bz;
            tau = btau;
            out.primal_residual = bpres;
            out.dual_residual = bdres;
            out.gap = bgap;
            return finalize(SolveStatus::Optimal);
        }
        return finalize(status);
    };

    for (int iter = 0; iter < st.max_iters; ++iter) {
        out.iterations = iter + 1;

        // residuals of the homogeneous model
        const Eigen::VectorXd p_res = tau * h - G * x - s;
        const Eigen::VectorXd d_res = -(G.transpose() * z + c * tau);
        const double g_res = -(c.dot(x) + h.dot(z) + kappa);
        const double mu = (s.dot(z) + tau * kappa) / nu;

        // convergence bookkeeping on the de-homogenized iterate
        const double pres = (p_res / tau).norm() / hnorm;
        const double dres = (d_res / tau).norm() / cnorm;
        const double pcost = c.dot(x) / tau;
        const double gap = s.dot(z) / (tau * tau);
        const double relgap = std::abs(gap) / std::max(1.0, std::abs(pcost));
        out.primal_residual = pres;
        out.dual_residual = dres;
        out.gap = relgap;

        const double metric = std::max({pres, dres, relgap});
        if (!std::isfinite(metric) || !std::isfinite(mu)) {
            return fail(SolveStatus::NumericalFailure);
        }
        if (metric < bmetric) {
            bmetric = metric;
            bx = x;
            bs = s;
            bz = z;
            btau = tau;
            bpres = pres;
            bdres = dres;
            bgap = relgap;
        }
        if (pres < st.tol && dres < st.tol && relgap < st.tol) {
            return finalize(SolveStatus::Optimal);
        }
        if (tau < st.tol * 1e-2 * std::min(1.0, kappa)) {
            // homogeneous certificate
            if (h.dot(z) < -st.tol) return finalize(SolveStatus::Infeasible);
            if (c.dot(x) < -st.tol) return finalize(SolveStatus::Unbounded);
            return fail(SolveStatus::NumericalFailure);
        }

        if (!cones.update_scaling(s, z) || !kkt.factor()) {
            return fail(SolveStatus::NumericalFailure);
        }
        const Eigen::VectorXd lambda = cones.scaled_point(z);

        kkt.solve(-c, h, dx2, dz2, &dzt2);

        auto direction = [&](const Eigen::VectorXd& ds_comb, double dk_comb,
                             double res_scale, double& dtau, double& dkappa) {
            Eigen::VectorXd p_tilde =
                res_scale * p_res + [&] {
                    Eigen::VectorXd t = cones.jordan_div(lambda, ds_comb);
                    cones.apply_w(t);
                    return t;
                }();
            kkt.solve(res_scale * d_res, p_tilde, dx1, dz1, &dzt1);
            const double denom = c.dot(dx2) + h.dot(dz2) - kappa / tau;
            dtau = (res_scale * g_res + dk_comb / tau - c.dot(dx1) - h.dot(dz1)) / denom;
            dx = dx1 + dtau * dx2;
            dz = dz1 + dtau * dz2;
            dzt = dzt1 + dtau * dzt2;
            // W^-1 ds = -(lambda \ ds_comb + W dz) algebraically; the
            // unscaled ds is taken from the primal Newton row instead so that
            // equation holds to machine precision even when W is extreme.
            wds = -(cones.jordan_div(lambda, ds_comb) + dzt);
            ds = res_scale * p_res - G * dx + h * dtau;
            dkappa = -(dk_comb + kappa * dtau) / tau;
        };

        // affine (predictor) direction
        double dtau_a, dkappa_a;
        direction(cones.jordan_mul(lambda, lambda), tau * kappa, 1.0, dtau_a, dkappa_a);

        double alpha_a = std::min(cones.max_step(s, ds), cones.max_step(z, dz));
        if (dtau_a < 0.0) alpha_a = std::min(alpha_a, -tau / dtau_a);
        if (dkappa_a < 0.0) alpha_a = std::min(alpha_a, -kappa / dkappa_a);
        alpha_a = std::min(alpha_a, 1.0);
        const double sigma = std::pow(1.0 - alpha_a, 3);

        // combined (corrector) direction, using the scaled affine quantities
        const Eigen::VectorXd ds_comb =
            cones.jordan_mul(lambda, lambda) + cones.jordan_mul(wds, dzt) - sigma * mu * e;
        const double dk_comb = tau * kappa + dtau_a * dkappa_a - sigma * mu;
        double dtau, dkappa;
        direction(ds_comb, dk_comb, 1.0 - sigma, dtau, dkappa);

        double alpha = std::min(cones.max_step(s, ds), cones.max_step(z, dz));
        if (dtau < 0.0) alpha = std::min(alpha, -tau / dtau);
        if (dkappa < 0.0) alpha = std::min(alpha, -kappa / dkappa);
        alpha = std::min(st.step_fraction * alpha, 1.0);
        if (!std::isfinite(alpha) || alpha <= 0.0) {
            return fail(SolveStatus::NumericalFailure);
        }

        x += alpha * dx;
        z += alpha * dz;
        s += alpha * ds;
        tau += alpha * dtau;
        kappa += alpha * dkappa;
    }
    return fail(SolveStatus::MaxIters);
}

// ---- text serialization for solver-regression fixtures ----

inline void write_problem(std::ostream& os, const ConicProblem& p) {
    os << std::setprecision(17);
    os << "psbss-conic v1\n";
    os << p.num_vars() << " " << p.num_rows() << " " << p.cones.size() << "\n";
    for (const auto& b : p.cones) {
        os << (b.type == ConeType::Nonnegative ? "nn" : b.type == ConeType::Soc ? "soc" : "rsoc")
           << " " << b.dim << "\n";
    }
    for (int i = 0; i < p.num_vars(); ++i) os << p.c(i) << " ";
    os << "\n";
    for (int i = 0; i < p.num_rows(); ++i) os << p.h(i) << " ";
    os << "\n";
    for (int i = 0; i < p.num_rows(); ++i) {
        for (int j = 0; j < p.num_vars(); ++j) os << p.G(i, j) << " ";
        os << "\n";
    }
}

inline ConicProblem read_problem(std::istream& is) {
    std::string tag, ver;
    is >> tag >> ver;
    if (tag != "psbss-conic" || ver != "v1") {
        throw std::runtime_error("read_problem: bad header");
    }
    int n, m, nc;
    is >> n >> m >> nc;
    ConicProblem p;
    p.c.resize(n);
    p.h.resize(m);
    p.G.resize(m, n);
    for (int i = 0; i < nc; ++i) {
        std::string t;
        int d;
        is >> t >> d;
        const ConeType ct = t == "nn"    ? ConeType::Nonnegative
                            : t == "soc" ? ConeType::Soc
                                         : ConeType::RotatedSoc;
        p.cones.push_back({ct, d});
    }
    for (int i = 0; i < n; ++i) is >> p.c(i);
    for (int i = 0; i < m; ++i) is >> p.h(i);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) is >> p.G(i, j);
    }
    if (!is) throw std::runtime_error("read_problem: truncated input");
    p.validate();
    return p;
}

}  // namespace psbss::conic
