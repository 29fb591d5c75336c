#pragma once

// Empirical checks of the convergence theory on recorded runs: sampled
// tangential-cone constant in the L-seminorm, per-iteration gain
// inequalities, the stopping-index bound, the Euclidean error bound, and the
// noise-level sweep.

#include "lmmss/error.hpp"
#include "lmmss/problems.hpp"
#include "lmmss/scaling.hpp"
#include "lmmss/solver.hpp"
#include "lmmss/types.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace lmmss {

// ---------------------------------------------------------------------------
// Tangential cone condition in the L-seminorm
// ---------------------------------------------------------------------------

struct TccEstimate {
    double c_hat    = 0.0;
    double rho      = 0.0;
    int samples     = 0; ///< pairs requested
    int valid_pairs = 0; ///< pairs with a non-negligible right-hand side
    std::pair<Vector, Vector> worst_pair;
};

namespace detail {

/// Samples x0 + v with ||L v|| <= rho: the row-space part L^+ z with z uniform
/// in the p-ball, plus (for p < n) a null-space part uniform in the Euclidean
/// (n-p)-ball of radius rho, since the L-ball itself is unbounded along N(L).
class SeminormBallSampler {
public:
    SeminormBallSampler(const ScalingOperator& L, Vector center, double rho) : center_(std::move(center)), rho_(rho) {
        const Matrix& Lm = L.matrix();
        Eigen::JacobiSVD<Matrix> svd(Lm, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Index p = L.p();
        const Index n = L.n();
        const Vector& s = svd.singularValues();
        const Matrix& V = svd.matrixV();
        pinv_ = V.leftCols(p) * s.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
        null_ = V.rightCols(n - p);
    }

    Vector operator()(Rng& rng) const {
        Vector x = center_ + pinv_ * uniform_ball(pinv_.cols(), rng);
        if (null_.cols() > 0) {
            x += null_ * uniform_ball(null_.cols(), rng);
        }
        return x;
    }

private:
    Vector uniform_ball(Index dim, Rng& rng) const {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const double radius = rho_ * std::pow(unif(rng), 1.0 / static_cast<double>(dim));
        return radius * random_unit_vector(dim, rng);
    }

    Vector center_;
    double rho_;
    Matrix pinv_;
    Matrix null_;
};

} // namespace detail

/// Largest sampled ratio ||J(x)(xt - x) - F(xt) + F(x)|| / (||xt - x||_L ||F(xt) - F(x)||)
/// over pairs drawn from B_L(x0, rho) (intersected with the problem's domain hint).
/// This is a lower bound for the true constant.
inline TccEstimate estimate_tcc_constant(const InverseProblem& problem, const ScalingOperator& L, const Vector& x0,
                                         double rho, int samples, std::uint64_t seed) {
    require(rho > 0.0, Errc::invalid_argument, "estimate_tcc_constant: rho must be > 0");
    require(samples >= 100, Errc::invalid_argument, "estimate_tcc_constant: need at least 100 samples");
    require(x0.size() == problem.n && L.n() == problem.n, Errc::dimension_mismatch,
            "estimate_tcc_constant: dimensions of x0, L and problem disagree");

    const detail::SeminormBallSampler sample(L, x0, rho);
    Rng rng(seed);
    auto draw = [&](Vector& out) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            out = sample(rng);
            if (!problem.domain_hint || problem.domain_hint->contains(out)) {
                return true;
            }
        }
        return false;
    };

    TccEstimate est;
    est.rho     = rho;
    est.samples = samples;
    Vector x, xt;
    for (int s = 0; s < samples; ++s) {
        if (!draw(x) || !draw(xt)) {
            continue;
        }
        const Vector Fx  = problem.F(x);
        const Vector Fxt = problem.F(xt);
        const Vector h   = xt - x;
        const double rhs = seminorm(L, h) * (Fxt - Fx).norm();
        if (rhs < 1e-14) {
            continue;
        }
        const Vector Jh = problem.J(x) * h;
        double lhs      = (Jh - Fxt + Fx).norm();
        // Remainders at the level of cancellation error in its three terms count as zero.
        if (lhs <= 64.0 * std::numeric_limits<double>::epsilon() * (Jh.norm() + Fxt.norm() + Fx.norm())) {
            lhs = 0.0;
        }
        const double ratio = lhs / rhs;
        if (est.valid_pairs == 0 || ratio > est.c_hat) {
            est.c_hat      = ratio;
            est.worst_pair = {x, xt};
        }
        ++est.valid_pairs;
    }
    if (est.valid_pairs == 0) {
        throw Error(Errc::degenerate_ball, "estimate_tcc_constant: no admissible pairs in the ball");
    }
    return est;
}

// ---------------------------------------------------------------------------
// theta and the initial-guess condition
// ---------------------------------------------------------------------------

/// Exact data: theta = q / (c ||x0 - x*||_L), or 1.1 when that is undefined.
inline double theta_exact(double q, double c, double dist_L) {
    if (dist_L == 0.0 || c == 0.0) {
        return 1.1;
    }
    return q / (c * dist_L);
}

/// Noisy data: theta = q tau / (1 + c (1 + tau) ||x0 - x*||_L).
inline double theta_noisy(double q, double tau, double c, double dist_L) {
    return q * tau / (1.0 + c * (1.0 + tau) * dist_L);
}

struct InitialGuessReport {
    double dist_L = 0.0; ///< ||x0 - x*||_L
    double bound  = 0.0; ///< right-hand side of the closeness requirement
    double theta  = 0.0;
    bool holds    = false;
};

/// ||x0 - x*||_L < min{q/c, rho} (delta = 0) or min{(q tau - 1)/(c (1 + tau)), rho} (delta > 0).
inline InitialGuessReport check_initial_guess(double dist_L, double c, double rho, double q, double tau, double delta) {
    InitialGuessReport rep;
    rep.dist_L = dist_L;
    const double inf = std::numeric_limits<double>::infinity();
    if (delta == 0.0) {
        rep.bound = std::min(c > 0.0 ? q / c : inf, rho);
        rep.theta = theta_exact(q, c, dist_L);
    } else {
        rep.bound = std::min(c > 0.0 ? (q * tau - 1.0) / (c * (1.0 + tau)) : inf, rho);
        rep.theta = theta_noisy(q, tau, c, dist_L);
    }
    rep.holds = dist_L < rep.bound && rep.theta > 1.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Gain inequalities
// ---------------------------------------------------------------------------

enum class GainInequality { step, linearized, spectral };

constexpr std::string_view to_string(GainInequality g) {
    switch (g) {
    case GainInequality::step: return "gain>=step";
    case GainInequality::linearized: return "gain>=linearized";
    case GainInequality::spectral: return "gain>=spectral";
    }
    return "unknown";
}

struct GainRow {
    int k        = 0;
    double gain  = 0.0; ///< ||x_k - x*||_L^2 - ||x_{k+1} - x*||_L^2
    double step2 = 0.0; ///< ||x_{k+1} - x_k||_L^2
    double rhs_linearized = std::numeric_limits<double>::quiet_NaN(); ///< 2(theta-1)/(theta lambda) ||r + J d||^2
    double rhs_spectral   = std::numeric_limits<double>::quiet_NaN(); ///< 2(theta-1)(1-q)q/(zeta^2 theta) ||r||^2
    bool holds_step       = true;
    bool holds_linearized = true;
    bool holds_spectral   = true;
    bool equality_kind    = false;
};

struct GainViolation {
    int k = 0;
    GainInequality which = GainInequality::step;
    double margin        = 0.0; ///< lhs - rhs (negative)
};

struct GainReport {
    std::vector<GainRow> rows;
    double theta = 0.0;
    double slack = 0.0; ///< margins above -slack count as satisfied
    std::vector<GainViolation> violations;

    bool step_holds() const {
        return std::none_of(violations.begin(), violations.end(),
                            [](const GainViolation& v) { return v.which == GainInequality::step; });
    }
    bool all_hold() const { return violations.empty(); }
};

/// Evaluates, for every step k < k*, gain >= ||x_{k+1}-x_k||_L^2 and, at
/// equality-kind steps, gain >= 2(theta-1)/(theta lambda_k) ||r_k + J_k d_k||^2
/// >= 2(theta-1)(1-q)q/(zeta_{p,k}^2 theta) ||r_k||^2. Slack: 1e-10 (1 + ||x0 - x*||_L^2).
inline GainReport check_gain(const RunRecord& run, const std::optional<Vector>& x_star, const ScalingOperator& L, double q,
                             double theta) {
    if (!x_star) {
        throw Error(Errc::missing_exact_solution, "check_gain: exact solution required");
    }
    require(theta > 1.0, Errc::invalid_argument, "check_gain: theta must be > 1");
    require(!run.trace.empty(), Errc::invalid_argument, "check_gain: empty run");

    GainReport rep;
    rep.theta       = theta;
    const double d0 = seminorm(L, run.trace.front().x - *x_star);
    rep.slack       = 1e-10 * (1.0 + d0 * d0);

    for (std::size_t i = 0; i + 1 < run.trace.size(); ++i) {
        const IterateRecord& cur = run.trace[i];
        const IterateRecord& nxt = run.trace[i + 1];
        if (!cur.step) {
            continue;
        }
        const StepInfo& s = *cur.step;
        GainRow row;
        row.k            = cur.k;
        const double ek  = seminorm(L, cur.x - *x_star);
        const double ek1 = seminorm(L, nxt.x - *x_star);
        row.gain         = ek * ek - ek1 * ek1;
        const double sl  = seminorm(L, nxt.x - cur.x);
        row.step2        = sl * sl;
        row.holds_step   = row.gain - row.step2 >= -rep.slack;
        if (!row.holds_step) {
            rep.violations.push_back({row.k, GainInequality::step, row.gain - row.step2});
        }
        row.equality_kind = s.kind == QcondKind::equality;
        if (row.equality_kind) {
            row.rhs_linearized   = 2.0 * (theta - 1.0) / (theta * s.lambda) * s.omega * s.omega;
            row.rhs_spectral     = 2.0 * (theta - 1.0) * (1.0 - q) * q / (s.zeta_p * s.zeta_p * theta) * cur.res_norm * cur.res_norm;
            row.holds_linearized = row.gain - row.rhs_linearized >= -rep.slack;
            row.holds_spectral   = row.rhs_linearized - row.rhs_spectral >= -rep.slack && row.gain - row.rhs_spectral >= -rep.slack;
            if (!row.holds_linearized) {
                rep.violations.push_back({row.k, GainInequality::linearized, row.gain - row.rhs_linearized});
            }
            if (!row.holds_spectral) {
                rep.violations.push_back({row.k, GainInequality::spectral,
                                          std::min(row.gain, row.rhs_linearized) - row.rhs_spectral});
            }
        }
        rep.rows.push_back(row);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Stopping-index bound
// ---------------------------------------------------------------------------

struct KstarBoundReport {
    int k_star         = 0;
    double lhs         = 0.0; ///< k* tau^2 delta^2
    double sum_res2    = 0.0; ///< sum_{k<k*} ||y_delta - F_k||^2
    double zeta_hat    = 0.0; ///< max zeta_{p,k}, k < k*
    double coefficient = 0.0; ///< theta zeta_hat^2 / (2 (theta-1)(1-q) q)
    double dist_L      = 0.0; ///< ||x0 - x*||_L
    double rhs_unsquared = 0.0;
    double rhs_squared   = 0.0;
    bool holds_unsquared = false;
    bool holds_squared   = false;
    bool sum_dominates   = false; ///< lhs <= sum_res2

    bool any_holds() const { return holds_unsquared || holds_squared; }
};

/// k* tau^2 delta^2 <= theta zeta_hat^2 / (2(theta-1)(1-q)q) * B, evaluated with
/// B = ||x0 - x*||_L and with B = ||x0 - x*||_L^2.
inline KstarBoundReport check_kstar_bound(const RunRecord& run, const std::optional<Vector>& x_star, const ScalingOperator& L,
                                          double q, double tau, double delta, double theta) {
    if (!x_star) {
        throw Error(Errc::missing_exact_solution, "check_kstar_bound: exact solution required");
    }
    require(run.stop_reason == StopReason::discrepancy, Errc::invalid_argument,
            "check_kstar_bound: run did not stop by the discrepancy principle");
    require(theta > 1.0, Errc::invalid_argument, "check_kstar_bound: theta must be > 1");

    KstarBoundReport rep;
    rep.k_star = run.k_star;
    rep.lhs    = static_cast<double>(run.k_star) * tau * tau * delta * delta;
    for (const auto& rec : run.trace) {
        if (rec.k < run.k_star) {
            rep.sum_res2 += rec.res_norm * rec.res_norm;
            if (rec.step) {
                rep.zeta_hat = std::max(rep.zeta_hat, rec.step->zeta_p);
            }
        }
    }
    rep.coefficient     = theta * rep.zeta_hat * rep.zeta_hat / (2.0 * (theta - 1.0) * (1.0 - q) * q);
    rep.dist_L          = seminorm(L, run.trace.front().x - *x_star);
    rep.rhs_unsquared   = rep.coefficient * rep.dist_L;
    rep.rhs_squared     = rep.coefficient * rep.dist_L * rep.dist_L;
    rep.holds_unsquared = rep.lhs <= rep.rhs_unsquared;
    rep.holds_squared   = rep.lhs <= rep.rhs_squared;
    rep.sum_dominates   = rep.lhs <= rep.sum_res2;
    return rep;
}

// ---------------------------------------------------------------------------
// Euclidean error bound in terms of the seminorm
// ---------------------------------------------------------------------------

struct EuclideanBoundRow {
    int k         = 0;
    double lhs    = 0.0; ///< ||x_{k+1} - x*||
    double rhs    = 0.0; ///< ||M^{-1}|| (||J^T|| c ||F_k - y|| ||x_k - x*||_L + lambda ||L^T|| ||x_k - x*||_L)
    double direct = 0.0; ///< same with the measured remainder ||F_k - y + J_k (x* - x_k)|| in place of c(...)
    bool holds    = false;
    bool direct_holds = false;
};

struct EuclideanBoundReport {
    std::vector<EuclideanBoundRow> rows;
    double c = 0.0;

    std::vector<int> violations() const {
        std::vector<int> v;
        for (const auto& r : rows) {
            if (!r.holds) {
                v.push_back(r.k);
            }
        }
        return v;
    }
};

/// Per-step bound on the Euclidean error, M = J_k^T J_k + lambda_k L^T L.
/// A violation means the supplied c underestimates the true constant.
inline EuclideanBoundReport check_euclidean_bound(const InverseProblem& problem, const RunRecord& run,
                                                  const std::optional<Vector>& x_star, const ScalingOperator& L, double c) {
    if (!x_star) {
        throw Error(Errc::missing_exact_solution, "check_euclidean_bound: exact solution required");
    }
    EuclideanBoundReport rep;
    rep.c                = c;
    const Matrix& Lm     = L.matrix();
    const double norm_Lt = spectral_norm(Lm);
    const double tol     = 1e-12;
    for (std::size_t i = 0; i + 1 < run.trace.size(); ++i) {
        const IterateRecord& cur = run.trace[i];
        if (!cur.step) {
            continue;
        }
        const double lambda = cur.step->lambda;
        const Matrix Jk     = problem.J(cur.x);
        const Vector Fk     = problem.F(cur.x);
        const Matrix M      = Jk.transpose() * Jk + lambda * Lm.transpose() * Lm;
        Eigen::SelfAdjointEigenSolver<Matrix> eig(M, Eigen::EigenvaluesOnly);
        const double inv_norm = 1.0 / eig.eigenvalues()(0);
        const double norm_Jt  = spectral_norm(Jk);
        const double eL       = seminorm(L, cur.x - *x_star);
        const double res      = (Fk - run.data).norm();
        const double remainder = (Fk - run.data + Jk * (*x_star - cur.x)).norm();

        EuclideanBoundRow row;
        row.k      = cur.k;
        row.lhs    = (run.trace[i + 1].x - *x_star).norm();
        row.rhs    = inv_norm * (norm_Jt * c * res * eL + lambda * norm_Lt * eL);
        row.direct = inv_norm * (norm_Jt * remainder + lambda * norm_Lt * eL);
        const double scale = tol * (1.0 + row.lhs);
        row.holds        = row.lhs <= row.rhs + scale;
        row.direct_holds = row.lhs <= row.direct + scale;
        rep.rows.push_back(row);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Monotonicity and residual bracket along a run
// ---------------------------------------------------------------------------

struct MonotoneReport {
    std::vector<double> distances; ///< ||x_k - x*||_L
    double max_increase = 0.0;
    bool holds          = true;
};

/// ||x_{k+1} - x*||_L <= ||x_k - x*||_L + slack (1 + ||x_0 - x*||_L).
inline MonotoneReport check_monotone_distance(const RunRecord& run, const Vector& x_star, const ScalingOperator& L,
                                              double slack = 1e-12) {
    MonotoneReport rep;
    for (const auto& rec : run.trace) {
        rep.distances.push_back(seminorm(L, rec.x - x_star));
    }
    const double scale = slack * (1.0 + (rep.distances.empty() ? 0.0 : rep.distances.front()));
    for (std::size_t i = 1; i < rep.distances.size(); ++i) {
        const double inc = rep.distances[i] - rep.distances[i - 1];
        rep.max_increase = std::max(rep.max_increase, inc);
        if (inc > scale) {
            rep.holds = false;
        }
    }
    return rep;
}

struct ResidualBracketReport {
    int checked    = 0;
    int violations = 0;
    double worst_ratio_low  = std::numeric_limits<double>::infinity(); ///< min ||J(x*-x_k)|| / ||F_k - y||
    double worst_ratio_high = 0.0;                                    ///< max of the same ratio
};

/// (1 - q/theta) ||F_k - y|| <= ||J_k (x* - x_k)|| <= (1 + q/theta) ||F_k - y|| along the run,
/// up to an absolute rounding allowance of 1e-10 (1 + ||y||).
inline ResidualBracketReport check_residual_bracket(const InverseProblem& problem, const RunRecord& run, const Vector& x_star,
                                                    double q, double theta) {
    ResidualBracketReport rep;
    const double eps = 1e-10 * (1.0 + run.data.norm());
    for (const auto& rec : run.trace) {
        if (rec.res_norm == 0.0) {
            continue;
        }
        const double a = (problem.J(rec.x) * (x_star - rec.x)).norm();
        const double b = rec.res_norm;
        rep.worst_ratio_low  = std::min(rep.worst_ratio_low, a / b);
        rep.worst_ratio_high = std::max(rep.worst_ratio_high, a / b);
        ++rep.checked;
        if (a < (1.0 - q / theta) * b - eps || a > (1.0 + q / theta) * b + eps) {
            ++rep.violations;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Noise-level sweep
// ---------------------------------------------------------------------------

struct SweepRow {
    double delta       = 0.0;
    std::uint64_t seed = 0;
    int k_star         = 0;
    double err_euclid  = 0.0;
    double err_L       = 0.0;
    double final_residual = 0.0;
    StopReason stop_reason = StopReason::max_iter;
};

struct TrendViolation {
    std::uint64_t seed = 0;
    double delta_coarse = 0.0;
    double delta_fine   = 0.0;
    double err_coarse   = 0.0;
    double err_fine     = 0.0;
};

struct SweepReport {
    std::vector<SweepRow> rows; ///< delta-major, seed-minor
    std::vector<RunRecord> runs; ///< parallel to rows
    std::vector<TrendViolation> trend_violations;
    bool all_discrepancy = true;
    double trend_slack   = 1.1;

    bool trend_ok() const { return trend_violations.empty(); }
    bool ok() const { return trend_ok() && all_discrepancy; }
};

/// Runs the solver for every (delta, seed) pair and checks that the final
/// Euclidean error does not grow by more than 10% as delta decreases.
/// workers > 1 runs the solves on that many threads; the report is identical.
inline SweepReport regularization_sweep(const InverseProblem& problem, const ScalingOperator& L, const Vector& x0,
                                        const SolverConfig& cfg, const std::vector<double>& deltas,
                                        const std::vector<std::uint64_t>& seeds, int workers = 1) {
    if (!problem.x_dagger) {
        throw Error(Errc::missing_exact_solution, "regularization_sweep: exact solution required");
    }
    require(!deltas.empty() && !seeds.empty(), Errc::invalid_argument, "regularization_sweep: empty delta or seed list");
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        require(deltas[i] > 0.0, Errc::invalid_argument,
                "regularization_sweep: deltas must be positive (exact data is handled by solve)");
        if (i > 0) {
            require(deltas[i] < deltas[i - 1], Errc::invalid_argument, "regularization_sweep: deltas must be strictly decreasing");
        }
    }
    cfg.validate();

    const std::size_t total = deltas.size() * seeds.size();
    SweepReport rep;
    rep.rows.resize(total);
    rep.runs.resize(total);
    std::vector<std::exception_ptr> errors(total);

    auto task = [&](std::size_t idx) {
        const double delta = deltas[idx / seeds.size()];
        const auto seed    = seeds[idx % seeds.size()];
        try {
            const NoisyData data = make_noisy_data(problem.y_exact, delta, seed);
            RunRecord run        = solve(problem, data, L, x0, cfg);
            SweepRow row;
            row.delta          = delta;
            row.seed           = seed;
            row.k_star         = run.k_star;
            row.err_euclid     = (run.final_x - *problem.x_dagger).norm();
            row.err_L          = seminorm(L, run.final_x - *problem.x_dagger);
            row.final_residual = run.trace.back().res_norm;
            row.stop_reason    = run.stop_reason;
            rep.rows[idx]      = row;
            rep.runs[idx]      = std::move(run);
        } catch (const Error& e) {
            errors[idx] = std::make_exception_ptr(
                Error(e.code(), "delta=" + std::to_string(delta) + " seed=" + std::to_string(seed) + ": " + e.what(), e.iterate()));
        } catch (...) {
            errors[idx] = std::current_exception();
        }
    };

    if (workers <= 1) {
        for (std::size_t i = 0; i < total; ++i) {
            task(i);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        const auto nthreads = std::min<std::size_t>(static_cast<std::size_t>(workers), total);
        for (std::size_t t = 0; t < nthreads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < total; i = next++) {
                    task(i);
                }
            });
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }

    for (const auto& row : rep.rows) {
        if (row.stop_reason != StopReason::discrepancy) {
            rep.all_discrepancy = false;
        }
    }
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        for (std::size_t d = 1; d < deltas.size(); ++d) {
            const SweepRow& coarse = rep.rows[(d - 1) * seeds.size() + s];
            const SweepRow& fine   = rep.rows[d * seeds.size() + s];
            if (fine.err_euclid > rep.trend_slack * coarse.err_euclid) {
                rep.trend_violations.push_back({seeds[s], coarse.delta, fine.delta, coarse.err_euclid, fine.err_euclid});
            }
        }
    }
    return rep;
}

} // namespace lmmss
