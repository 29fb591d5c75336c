#pragma once

// Levenberg-Marquardt iteration with a (possibly singular) scaling matrix L:
//
//   (J_k^T J_k + lambda_k L^T L) d_k = -J_k^T (F_k - y),   x_{k+1} = x_k + d_k,
//
// lambda_k chosen by the q-condition ||F_k - y + J_k d(lambda)|| = q ||F_k - y||
// and the iteration stopped by the discrepancy principle ||F_k - y|| <= tau delta.

#include "lmmss/error.hpp"
#include "lmmss/gsvd.hpp"
#include "lmmss/problems.hpp"
#include "lmmss/scaling.hpp"
#include "lmmss/types.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lmmss {

enum class QcondKind {
    equality,            ///< q-condition solved to lambda_root_tol
    inequality_fallback, ///< ||r + J d|| >= q ||r|| for every admissible lambda; deterministic pick
    upper_clamp,         ///< ||r + J d|| < q ||r|| even at the upper bracket end; lambda = upper end
};

enum class StopReason { discrepancy, grad_tol, res_tol, max_iter, qcond_unsolvable_hard };

constexpr std::string_view to_string(QcondKind k) {
    switch (k) {
    case QcondKind::equality: return "equality";
    case QcondKind::inequality_fallback: return "inequality-fallback";
    case QcondKind::upper_clamp: return "upper-clamp";
    }
    return "unknown";
}

constexpr std::string_view to_string(StopReason r) {
    switch (r) {
    case StopReason::discrepancy: return "discrepancy";
    case StopReason::grad_tol: return "grad_tol";
    case StopReason::res_tol: return "res_tol";
    case StopReason::max_iter: return "max_iter";
    case StopReason::qcond_unsolvable_hard: return "qcond_unsolvable_hard";
    }
    return "unknown";
}

struct SolverConfig {
    double q     = 0.7;
    double tau   = 2.5;
    double alpha = 1.0; ///< only the undamped step alpha = 1 is supported
    int max_iter = 500;

    double lambda_root_tol        = 1e-10; ///< |omega - q||r||| <= tol ||r||
    double lambda_fallback_factor = 0.5;   ///< fraction of q/(1-q) zeta_p^2 used when unsolvable
    double lambda_lo_rel          = 1e-14; ///< bracket low end, times zeta_p^2
    double lambda_floor_rel       = 1e-28; ///< lowest the low end may be pushed, times zeta_p^2
    int bisection_max_iter        = 60;

    double res_tol_rel = 1e-10; ///< exact data: res_tol = res_tol_rel * ||F(x0) - y||
    std::optional<double> res_tol;
    double grad_tol = 1e-12;

    double rank_tol         = 1e-12;
    bool check_completeness = true;

    void validate() const {
        require(q > 0.0 && q < 1.0, Errc::invalid_argument, "config: q must lie in (0, 1)");
        require(tau * q > 1.0, Errc::invalid_argument, "config: tau must exceed 1/q");
        require(alpha == 1.0, Errc::invalid_argument, "config: alpha must be 1");
        require(max_iter > 0, Errc::invalid_argument, "config: max_iter must be positive");
        require(lambda_root_tol > 0.0, Errc::invalid_argument, "config: lambda_root_tol must be positive");
        require(lambda_fallback_factor > 0.0 && lambda_fallback_factor < 1.0, Errc::invalid_argument,
                "config: lambda_fallback_factor must lie in (0, 1)");
        require(lambda_lo_rel > 0.0 && lambda_floor_rel > 0.0 && lambda_floor_rel <= lambda_lo_rel,
                Errc::invalid_argument, "config: need 0 < lambda_floor_rel <= lambda_lo_rel");
        require(bisection_max_iter > 0, Errc::invalid_argument, "config: bisection_max_iter must be positive");
        require(res_tol_rel >= 0.0 && grad_tol >= 0.0, Errc::invalid_argument, "config: tolerances must be >= 0");
        if (res_tol) {
            require(*res_tol >= 0.0, Errc::invalid_argument, "config: res_tol must be >= 0");
        }
    }
};

/// True iff res_norm <= tau * delta.
constexpr bool discrepancy_reached(double res_norm, double tau, double delta) noexcept {
    return res_norm <= tau * delta;
}

/// Solves (J^T J + lambda L^T L) d = -J^T r as the least-squares problem
/// [J; sqrt(lambda) L] d = [-r; 0].
inline Vector lm_step(const Matrix& J, const Vector& r, const ScalingOperator& L, double lambda) {
    require(J.rows() == r.size() && J.cols() == L.n(), Errc::dimension_mismatch, "lm_step: dimensions of J, r, L disagree");
    if (!(lambda > 0.0)) {
        throw Error(Errc::nonpositive_lambda, "lm_step: lambda must be > 0");
    }
    const Index m = J.rows();
    const Index n = J.cols();
    const Index p = L.p();
    Matrix B(m + p, n);
    B.topRows(m)    = J;
    B.bottomRows(p) = std::sqrt(lambda) * L.matrix();
    Vector c        = Vector::Zero(m + p);
    c.head(m)       = -r;

    Eigen::ColPivHouseholderQR<Matrix> qr(B);
    qr.setThreshold(std::numeric_limits<double>::epsilon());
    if (qr.rank() < n) {
        throw Error(Errc::singular_system, "lm_step: [J; sqrt(lambda) L] is numerically rank deficient");
    }
    return qr.solve(c);
}

/// d = -X blockdiag(Gamma, I) X^T J^T r with Gamma = (Sigma^2 + lambda M^2)^{-1},
/// where f is the GSVD of (J, L).
inline Vector lm_step_gsvd(const GsvdFactors& f, const Matrix& J, const Vector& r, double lambda) {
    require(J.rows() == f.m && J.cols() == f.n && r.size() == f.m, Errc::dimension_mismatch,
            "lm_step_gsvd: dimensions of factors, J and r disagree");
    if (!(lambda > 0.0)) {
        throw Error(Errc::nonpositive_lambda, "lm_step_gsvd: lambda must be > 0");
    }
    Vector w = f.X.transpose() * (J.transpose() * r);
    for (Index i = 0; i < f.p; ++i) {
        w(i) /= f.sigma(i) * f.sigma(i) + lambda * f.mu(i) * f.mu(i);
    }
    return -(f.X * w);
}

/// omega(lambda) = ||r + J d(lambda)||, evaluated directly.
inline double qcond_residual(const Matrix& J, const ScalingOperator& L, const Vector& r, double lambda) {
    return (r + J * lm_step(J, r, L, lambda)).norm();
}

inline double qcond_residual(const GsvdFactors& f, const Matrix& J, const Vector& r, double lambda) {
    return (r + J * lm_step_gsvd(f, J, r, lambda)).norm();
}

/// ||P r|| with P the orthogonal projector onto range(J)^perp, from the GSVD of
/// (J, L): range(J) is spanned by the U columns with sigma_i > rank_tol and the
/// trailing n - p columns.
inline double range_complement_residual(const GsvdFactors& f, const Vector& r, double rank_tol = 1e-12) {
    Vector proj = r;
    for (Index j = 0; j < f.n; ++j) {
        if (j >= f.p || f.sigma(j) > rank_tol) {
            proj -= f.U.col(j).dot(r) * f.U.col(j);
        }
    }
    return proj.norm();
}

struct LambdaSelection {
    double lambda = 0.0;
    QcondKind kind = QcondKind::equality;
    double omega  = 0.0; ///< ||r + J d(lambda)||
    double target = 0.0; ///< q ||r||
    double zeta_p = 0.0; ///< largest generalized singular value of (J, L)
    double upper  = 0.0; ///< q/(1-q) zeta_p^2
    double projected_residual = 0.0;
    int evaluations           = 0;
};

/// q-condition lambda. Bisection on log lambda over (lo, q/(1-q) zeta_p^2 (1+tol)],
/// lo = lambda_lo_rel zeta_p^2 (pushed down to lambda_floor_rel if the root lies below).
inline LambdaSelection select_lambda_q(const Matrix& J, const ScalingOperator& L, const Vector& r, const GsvdFactors& f,
                                       const SolverConfig& cfg) {
    const double nr = r.norm();
    const Vector g  = J.transpose() * r;
    if (g.norm() == 0.0 || nr == 0.0) {
        throw Error(Errc::zero_gradient, "select_lambda_q: J^T r = 0");
    }

    LambdaSelection sel;
    sel.target             = cfg.q * nr;
    sel.zeta_p             = f.sigma(f.p - 1) / f.mu(f.p - 1);
    sel.projected_residual = range_complement_residual(f, r, cfg.rank_tol);
    const double zeta2     = sel.zeta_p * sel.zeta_p;
    sel.upper              = cfg.q / (1.0 - cfg.q) * zeta2;
    const double slack     = cfg.lambda_root_tol * nr;

    auto omega = [&](double lambda) {
        ++sel.evaluations;
        return qcond_residual(J, L, r, lambda);
    };
    auto finish = [&](double lambda, QcondKind kind, double om) {
        sel.lambda = lambda;
        sel.kind   = kind;
        sel.omega  = om;
        return sel;
    };

    if (zeta2 == 0.0) {
        // J only acts on the block complementary to L's row space: d does not depend on lambda.
        const double om = omega(1.0);
        return finish(1.0, om >= sel.target ? QcondKind::inequality_fallback : QcondKind::upper_clamp, om);
    }

    if (sel.projected_residual > sel.target) {
        const double lambda = cfg.lambda_fallback_factor * sel.upper;
        return finish(lambda, QcondKind::inequality_fallback, omega(lambda));
    }

    double hi       = sel.upper * (1.0 + cfg.lambda_root_tol);
    double omega_hi = omega(hi);
    if (std::abs(omega_hi - sel.target) <= slack) {
        return finish(hi, QcondKind::equality, omega_hi);
    }
    if (omega_hi < sel.target) {
        return finish(hi, QcondKind::upper_clamp, omega_hi);
    }

    double lo       = cfg.lambda_lo_rel * zeta2;
    double omega_lo = omega(lo);
    const double floor = cfg.lambda_floor_rel * zeta2;
    while (omega_lo > sel.target + slack && lo > floor) {
        hi       = lo;
        omega_hi = omega_lo;
        lo       = std::max(lo * 1e-4, floor);
        omega_lo = omega(lo);
    }
    if (std::abs(omega_lo - sel.target) <= slack) {
        return finish(lo, QcondKind::equality, omega_lo);
    }
    if (omega_lo > sel.target) {
        // Numerically unsolvable above the floor: every lambda >= lo satisfies the inequality variant.
        return finish(lo, QcondKind::inequality_fallback, omega_lo);
    }

    double log_lo = std::log(lo);
    double log_hi = std::log(hi);
    for (int it = 0; it < cfg.bisection_max_iter; ++it) {
        const double log_mid = 0.5 * (log_lo + log_hi);
        const double mid     = std::exp(log_mid);
        const double om      = omega(mid);
        if (std::abs(om - sel.target) <= slack) {
            return finish(mid, QcondKind::equality, om);
        }
        if (om < omega_lo - slack || om > omega_hi + slack) {
            throw Error(Errc::bracket_failure, "select_lambda_q: omega(lambda) is not monotone on the bracket");
        }
        if (om < sel.target) {
            log_lo   = log_mid;
            omega_lo = om;
        } else {
            log_hi   = log_mid;
            omega_hi = om;
        }
    }
    throw Error(Errc::bracket_failure, "select_lambda_q: bisection did not reach lambda_root_tol");
}

inline LambdaSelection select_lambda_q(const Matrix& J, const ScalingOperator& L, const Vector& r, const SolverConfig& cfg) {
    if ((J.transpose() * r).norm() == 0.0) {
        throw Error(Errc::zero_gradient, "select_lambda_q: J^T r = 0");
    }
    return select_lambda_q(J, L, r, gsvd(J, L.matrix(), GsvdOptions{cfg.rank_tol}), cfg);
}

struct StepInfo {
    double lambda     = 0.0;
    double zeta_p     = 0.0;
    double step_Lnorm = 0.0; ///< ||x_{k+1} - x_k||_L
    double omega      = 0.0; ///< ||F_k - y + J_k d_k||
    QcondKind kind    = QcondKind::equality;
};

struct IterateRecord {
    int k = 0;
    Vector x;
    double res_norm  = 0.0; ///< ||F(x_k) - y||
    double grad_norm = 0.0; ///< ||J_k^T (F(x_k) - y)||, NaN when J was not evaluated
    std::optional<StepInfo> step;
};

struct RunRecord {
    std::vector<IterateRecord> trace;
    int k_star             = 0;
    StopReason stop_reason = StopReason::max_iter;
    double zeta_hat        = 0.0; ///< max zeta_{p,k} over the steps taken
    Vector final_x;
    Vector data;   ///< y_delta (or y) the run was fitted to
    double delta   = 0.0;
    double tau     = 0.0;
    double q       = 0.0;
    double res_tol = 0.0; ///< exact-data threshold actually used
    bool noisy     = false;
};

namespace detail {

template <typename Fn>
auto evaluate_at(int k, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(Errc::evaluation_failure, std::string("iterate ") + std::to_string(k) + ": " + e.what(), k);
    } catch (const std::exception& e) {
        throw Error(Errc::evaluation_failure, std::string("iterate ") + std::to_string(k) + ": " + e.what(), k);
    }
}

template <typename Fn>
auto tag_iterate(int k, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        if (e.iterate()) {
            throw;
        }
        throw Error(e.code(), std::string("iterate ") + std::to_string(k) + ": " + e.what(), k);
    }
}

} // namespace detail

/// Runs the iteration from x0. With data->delta > 0 the run stops at the first
/// k with ||F_k - y_delta|| <= tau delta; otherwise (exact data) it stops on
/// res_tol or grad_tol. max_iter caps both.
inline RunRecord solve(const InverseProblem& problem, const std::optional<NoisyData>& data, const ScalingOperator& L,
                       const Vector& x0, const SolverConfig& cfg) {
    cfg.validate();
    require(x0.size() == problem.n && L.n() == problem.n, Errc::dimension_mismatch,
            "solve: x0 or L does not match the problem dimension");
    const Vector& y = data ? data->y_delta : problem.y_exact;
    require(y.size() == problem.m, Errc::dimension_mismatch, "solve: data length differs from m");

    RunRecord run;
    run.delta = data ? data->delta : 0.0;
    run.noisy = run.delta > 0.0;
    run.tau   = cfg.tau;
    run.q     = cfg.q;
    run.data  = y;

    Vector x = x0;
    for (int k = 0;; ++k) {
        const Vector Fk = detail::evaluate_at(k, [&] { return problem.F(x); });
        const Vector r  = Fk - y;
        IterateRecord rec;
        rec.k         = k;
        rec.x         = x;
        rec.res_norm  = r.norm();
        rec.grad_norm = std::numeric_limits<double>::quiet_NaN();
        if (k == 0) {
            run.res_tol = cfg.res_tol.value_or(cfg.res_tol_rel * rec.res_norm);
        }

        auto stop = [&](StopReason why) {
            run.trace.push_back(std::move(rec));
            run.k_star      = k;
            run.stop_reason = why;
            run.final_x     = x;
            return run;
        };

        if (run.noisy && discrepancy_reached(rec.res_norm, cfg.tau, run.delta)) {
            return stop(StopReason::discrepancy);
        }
        if (!run.noisy && rec.res_norm <= run.res_tol) {
            return stop(StopReason::res_tol);
        }
        const Matrix Jk = detail::evaluate_at(k, [&] { return problem.J(x); });
        rec.grad_norm   = (Jk.transpose() * r).norm();
        if (rec.grad_norm <= cfg.grad_tol) {
            return stop(run.noisy ? StopReason::qcond_unsolvable_hard : StopReason::grad_tol);
        }
        if (k == cfg.max_iter) {
            return stop(StopReason::max_iter);
        }

        detail::tag_iterate(k, [&] {
            if (cfg.check_completeness && !completeness_check(Jk, L).holds) {
                throw Error(Errc::completeness_violated, "N(J) and N(L) intersect at the current iterate");
            }
            const GsvdFactors f       = gsvd(Jk, L.matrix(), GsvdOptions{cfg.rank_tol});
            const LambdaSelection sel = select_lambda_q(Jk, L, r, f, cfg);
            const Vector d            = lm_step(Jk, r, L, sel.lambda);

            StepInfo s;
            s.lambda     = sel.lambda;
            s.zeta_p     = sel.zeta_p;
            s.kind       = sel.kind;
            s.omega      = (r + Jk * d).norm();
            s.step_Lnorm = seminorm(L, cfg.alpha * d);
            rec.step     = s;
            run.zeta_hat = std::max(run.zeta_hat, sel.zeta_p);
            x += cfg.alpha * d;
        });
        run.trace.push_back(std::move(rec));
    }
}

} // namespace lmmss
