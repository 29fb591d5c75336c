#include "lmmss/diagnostics.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace lmmss;

namespace {

InverseProblem square_map() {
    InverseProblem P;
    P.name    = "square";
    P.m       = 1;
    P.n       = 1;
    P.eval_F  = [](const Vector& x) -> Vector { return x.array().square(); };
    P.eval_J  = [](const Vector& x) -> Matrix { return Matrix::Constant(1, 1, 2 * x(0)); };
    P.y_exact = Vector::Ones(1);
    P.x_dagger = Vector::Ones(1);
    P.x_start  = Vector::Ones(1);
    return P;
}

RunRecord noisy_run(const InverseProblem& P, const ScalingOperator& L, double delta, std::uint64_t seed, SolverConfig cfg = {}) {
    return solve(P, make_noisy_data(P.y_exact, delta, seed), L, P.x_start, cfg);
}

} // namespace

TEST(Tcc, LinearProblemHasZeroConstant) {
    const auto P   = problem_linear_illposed(16);
    const auto est = estimate_tcc_constant(P, ScalingOperator::identity(16), P.x_start, 1.0, 200, 1);
    EXPECT_EQ(est.c_hat, 0.0);
    EXPECT_EQ(est.valid_pairs, 200);
}

TEST(Tcc, ScalarSquareAgainstGridMaximum) {
    // ratio = 1 / |xt + x| on [0.5, 1.5]^2; the supremum 1 is approached as both points tend to 0.5.
    const auto P = square_map();
    double grid  = 0.0;
    const int N  = 400;
    for (int i = 0; i <= N; ++i) {
        for (int j = 0; j <= N; ++j) {
            const double x = 0.5 + static_cast<double>(i) / N, xt = 0.5 + static_cast<double>(j) / N;
            if (i != j) {
                grid = std::max(grid, std::abs(2 * x * (xt - x) - xt * xt + x * x) / (std::abs(xt - x) * std::abs(xt * xt - x * x)));
            }
        }
    }
    EXPECT_NEAR(grid, 1.0, 5e-3);
    const auto est = estimate_tcc_constant(P, ScalingOperator::identity(1), Vector::Ones(1), 0.5, 5000, 3);
    EXPECT_LE(est.c_hat, 1.0 + 1e-12);
    EXPECT_GT(est.c_hat, 0.9);
    EXPECT_NEAR(est.c_hat, 1.0 / (est.worst_pair.first(0) + est.worst_pair.second(0)), 1e-12);
}

TEST(Tcc, AutoconvolutionStableUnderDoubling) {
    const auto P = problem_autoconvolution(16);
    const auto L = ScalingOperator::identity(16);
    // Same seed: the larger run extends the smaller one's sample sequence.
    const auto a = estimate_tcc_constant(P, L, P.x_start, 0.05, 1000, 5);
    const auto b = estimate_tcc_constant(P, L, P.x_start, 0.05, 2000, 5);
    EXPECT_GT(a.c_hat, 0.0);
    EXPECT_TRUE(std::isfinite(a.c_hat));
    EXPECT_LE(a.c_hat, b.c_hat);
    EXPECT_GE(a.c_hat, 0.8 * b.c_hat);
}

TEST(Tcc, SingularScalingSamplesStayInBall) {
    const auto P = problem_coefficient_identification(12);
    const auto L = ScalingOperator::first_difference(12);
    const auto est = estimate_tcc_constant(P, L, P.x_start, 0.1, 300, 2);
    EXPECT_GT(est.valid_pairs, 0);
    EXPECT_LE(seminorm(L, est.worst_pair.first - P.x_start), 0.1 * (1 + 1e-12));
    EXPECT_LE(seminorm(L, est.worst_pair.second - P.x_start), 0.1 * (1 + 1e-12));
}

TEST(Tcc, Preconditions) {
    const auto P = problem_linear_illposed(8);
    const auto L = ScalingOperator::identity(8);
    EXPECT_THROW(estimate_tcc_constant(P, L, P.x_start, 0.0, 200, 1), Error);
    EXPECT_THROW(estimate_tcc_constant(P, L, P.x_start, 1.0, 50, 1), Error);

    InverseProblem flat = square_map();
    flat.eval_F         = [](const Vector&) -> Vector { return Vector::Ones(1); };
    try {
        estimate_tcc_constant(flat, ScalingOperator::identity(1), Vector::Ones(1), 0.5, 100, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::degenerate_ball);
    }
}

TEST(Theta, Definitions) {
    EXPECT_DOUBLE_EQ(theta_exact(0.7, 0.0, 1.0), 1.1);
    EXPECT_DOUBLE_EQ(theta_exact(0.7, 2.0, 0.0), 1.1);
    EXPECT_DOUBLE_EQ(theta_exact(0.7, 0.5, 0.2), 7.0);
    EXPECT_DOUBLE_EQ(theta_noisy(0.7, 2.5, 0.0, 1.0), 1.75);
    EXPECT_DOUBLE_EQ(theta_noisy(0.5, 4.0, 1.0, 0.1), 2.0 / 1.5);

    const auto ok = check_initial_guess(0.1, 0.5, 1.0, 0.7, 2.5, 0.01);
    EXPECT_NEAR(ok.bound, 0.75 / 1.75, 1e-15);
    EXPECT_TRUE(ok.holds);
    const auto far = check_initial_guess(3.0, 0.5, 10.0, 0.7, 2.5, 0.0);
    EXPECT_NEAR(far.bound, 1.4, 1e-15);
    EXPECT_FALSE(far.holds);
}

TEST(Gain, StationaryIterateHoldsTrivially) {
    RunRecord run;
    IterateRecord a, b;
    a.k = 0;
    a.x = Vector::Ones(3);
    a.res_norm = 1.0;
    a.step     = StepInfo{1.0, 1.0, 0.0, 0.7, QcondKind::inequality_fallback};
    b.k        = 1;
    b.x        = a.x;
    run.trace  = {a, b};
    const auto rep = check_gain(run, Vector::Zero(3), ScalingOperator::identity(3), 0.7, 1.5);
    ASSERT_EQ(rep.rows.size(), 1u);
    EXPECT_EQ(rep.rows[0].gain, 0.0);
    EXPECT_TRUE(rep.all_hold());
}

TEST(Gain, LinearRunSatisfiesAllInequalities) {
    const auto P = problem_linear_illposed(24);
    for (const auto& L : {ScalingOperator::identity(24), ScalingOperator::first_difference(24)}) {
        const RunRecord run = noisy_run(P, L, 1e-3, 1);
        const double theta  = theta_noisy(0.7, 2.5, 0.0, 0.0);
        const auto rep      = check_gain(run, P.x_dagger, L, 0.7, theta);
        EXPECT_TRUE(rep.all_hold()) << to_string(L.kind());
        EXPECT_EQ(rep.rows.size(), static_cast<std::size_t>(run.k_star));
    }
}

TEST(Gain, FarInitialGuessIsReportedNotThrown) {
    auto P      = problem_autoconvolution(16);
    P.x_start   = *P.x_dagger + 0.8 * Vector::Ones(16);
    const auto L = ScalingOperator::identity(16);
    const RunRecord run = noisy_run(P, L, 1e-3, 1);
    const double dist   = seminorm(L, P.x_start - *P.x_dagger);
    const auto est      = estimate_tcc_constant(P, L, P.x_start, 2 * dist, 200, 1);
    const auto ig       = check_initial_guess(dist, est.c_hat, 2 * dist, 0.7, 2.5, 1e-3);
    EXPECT_FALSE(ig.holds);
    EXPECT_NO_THROW(check_gain(run, P.x_dagger, L, 0.7, 1.1));
}

TEST(Gain, MissingExactSolution) {
    const RunRecord run = noisy_run(problem_linear_illposed(8), ScalingOperator::identity(8), 1e-2, 1);
    try {
        check_gain(run, std::nullopt, ScalingOperator::identity(8), 0.7, 1.5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::missing_exact_solution);
    }
}

TEST(KstarBound, VacuousWhenStoppedAtStart) {
    const auto P = problem_linear_illposed(16);
    const auto L = ScalingOperator::identity(16);
    const RunRecord run = noisy_run(P, L, 10.0, 1);
    ASSERT_EQ(run.k_star, 0);
    const auto rep = check_kstar_bound(run, P.x_dagger, L, 0.7, 2.5, 10.0, 1.75);
    EXPECT_EQ(rep.lhs, 0.0);
    EXPECT_TRUE(rep.holds_unsquared && rep.holds_squared);
}

TEST(KstarBound, LinearContractionClosedForm) {
    const double delta = 0.013;
    const auto c       = test::unit_residual_linear(24, delta, 2);
    SolverConfig cfg;
    cfg.q               = 0.5;
    cfg.tau             = 2.5;
    cfg.lambda_root_tol = 1e-14;
    const auto L        = ScalingOperator::identity(24);
    const RunRecord run = solve(c.problem, c.data, L, c.problem.x_start, cfg);
    const int expected  = static_cast<int>(std::ceil(std::log(cfg.tau * delta / 1.0) / std::log(cfg.q)));
    EXPECT_EQ(run.k_star, expected);

    // x_dagger for the rescaled data: the exact preimage of y.
    const Matrix A    = c.problem.J(c.problem.x_start);
    const Vector xd   = A.fullPivLu().solve(c.problem.y_exact);
    const auto rep    = check_kstar_bound(run, xd, L, cfg.q, cfg.tau, delta, 1.25);
    EXPECT_NEAR(rep.lhs, expected * cfg.tau * cfg.tau * delta * delta, 1e-15);
    EXPECT_TRUE(rep.sum_dominates);
    EXPECT_TRUE(rep.any_holds());
    EXPECT_NEAR(rep.rhs_squared, rep.rhs_unsquared * rep.dist_L, 1e-12 * rep.rhs_squared);
}

TEST(KstarBound, RequiresDiscrepancyStop) {
    const auto P = problem_linear_illposed(8);
    SolverConfig cfg;
    cfg.max_iter        = 1;
    const RunRecord run = noisy_run(P, ScalingOperator::identity(8), 1e-6, 1, cfg);
    ASSERT_EQ(run.stop_reason, StopReason::max_iter);
    EXPECT_THROW(check_kstar_bound(run, P.x_dagger, ScalingOperator::identity(8), 0.7, 2.5, 1e-6, 1.5), Error);
}

TEST(EuclideanBound, AtSolutionBothSidesVanish) {
    const auto P = problem_linear_illposed(8);
    RunRecord run;
    IterateRecord a, b;
    a.x       = *P.x_dagger;
    a.step    = StepInfo{0.5, 1.0, 0.0, 0.0, QcondKind::equality};
    b.k       = 1;
    b.x       = *P.x_dagger;
    run.trace = {a, b};
    run.data  = P.y_exact;
    const auto rep = check_euclidean_bound(P, run, P.x_dagger, ScalingOperator::identity(8), 0.0);
    ASSERT_EQ(rep.rows.size(), 1u);
    EXPECT_EQ(rep.rows[0].lhs, 0.0);
    EXPECT_EQ(rep.rows[0].rhs, 0.0);
    EXPECT_TRUE(rep.rows[0].holds);
}

TEST(EuclideanBound, LinearReducesToDampingTerm) {
    const auto P = problem_linear_illposed(16);
    const auto L = ScalingOperator::first_difference(16);
    SolverConfig cfg;
    cfg.grad_tol        = 0.0;
    cfg.max_iter        = 10;
    const RunRecord run = solve(P, std::nullopt, L, P.x_start, cfg);
    const auto rep      = check_euclidean_bound(P, run, P.x_dagger, L, 0.0);
    ASSERT_EQ(rep.rows.size(), 10u);
    const Matrix A = P.J(P.x_start);
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        const double lambda = run.trace[i].step->lambda;
        const Matrix M      = A.transpose() * A + lambda * L.matrix().transpose() * L.matrix();
        const double direct = lambda * spectral_norm(M.inverse()) * spectral_norm(L.matrix()) *
                              seminorm(L, run.trace[i].x - *P.x_dagger);
        EXPECT_NEAR(rep.rows[i].rhs, direct, 1e-8 * direct);
        EXPECT_TRUE(rep.rows[i].holds);
    }
}

TEST(EuclideanBound, AutoconvolutionWithEstimatedConstant) {
    const auto P        = problem_autoconvolution(16);
    const auto L        = ScalingOperator::identity(16);
    const RunRecord run = solve(P, std::nullopt, L, P.x_start, SolverConfig{});
    const double dist   = seminorm(L, P.x_start - *P.x_dagger);
    const auto est      = estimate_tcc_constant(P, L, P.x_start, 2 * dist, 500, 4);
    const auto rep      = check_euclidean_bound(P, run, P.x_dagger, L, est.c_hat);
    EXPECT_FALSE(rep.rows.empty());
    for (const auto& r : rep.rows) {
        EXPECT_TRUE(r.direct_holds) << "k = " << r.k;
    }
    EXPECT_TRUE(rep.violations().empty());
}

TEST(Monotone, ResidualBracketOnLinearRun) {
    const auto P        = problem_linear_illposed(16);
    const auto L        = ScalingOperator::identity(16);
    const RunRecord run = noisy_run(P, L, 1e-3, 2);
    const auto mono     = check_monotone_distance(run, *P.x_dagger, L);
    EXPECT_TRUE(mono.holds);
    EXPECT_EQ(mono.distances.size(), run.trace.size());
    const auto br = check_residual_bracket(P, run, *P.x_dagger, 0.7, 1.75);
    EXPECT_EQ(br.violations, 0);
    EXPECT_EQ(br.checked, static_cast<int>(run.trace.size()));
}

TEST(Sweep, LinearLadder) {
    const auto P = problem_linear_illposed(24);
    const auto L = ScalingOperator::identity(24);
    const std::vector<double> deltas{1e-1, 1e-2, 1e-3, 1e-4};
    const auto rep = regularization_sweep(P, L, P.x_start, SolverConfig{}, deltas, {1, 2});
    ASSERT_EQ(rep.rows.size(), 8u);
    EXPECT_TRUE(rep.ok());
    for (std::size_t s = 0; s < 2; ++s) {
        for (std::size_t d = 1; d < deltas.size(); ++d) {
            const auto& coarse = rep.rows[(d - 1) * 2 + s];
            const auto& fine   = rep.rows[d * 2 + s];
            EXPECT_LT(fine.err_euclid, coarse.err_euclid);
            EXPECT_GE(fine.k_star, coarse.k_star);
        }
    }
}

TEST(Sweep, ParallelMatchesSequential) {
    const auto P = problem_autoconvolution(16);
    const auto L = ScalingOperator::identity(16);
    const std::vector<double> deltas{1e-2, 1e-3};
    const auto a = regularization_sweep(P, L, P.x_start, SolverConfig{}, deltas, {1, 2, 3}, 1);
    const auto b = regularization_sweep(P, L, P.x_start, SolverConfig{}, deltas, {1, 2, 3}, 4);
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        EXPECT_EQ(a.rows[i].delta, b.rows[i].delta);
        EXPECT_EQ(a.rows[i].seed, b.rows[i].seed);
        EXPECT_EQ(a.rows[i].k_star, b.rows[i].k_star);
        EXPECT_EQ(a.rows[i].err_euclid, b.rows[i].err_euclid);
    }
}

TEST(Sweep, Preconditions) {
    const auto P = problem_linear_illposed(8);
    const auto L = ScalingOperator::identity(8);
    EXPECT_THROW(regularization_sweep(P, L, P.x_start, SolverConfig{}, {0.0}, {1}), Error);
    EXPECT_THROW(regularization_sweep(P, L, P.x_start, SolverConfig{}, {1e-3, 1e-2}, {1}), Error);
    auto nox     = P;
    nox.x_dagger = std::nullopt;
    EXPECT_THROW(regularization_sweep(nox, L, P.x_start, SolverConfig{}, {1e-2}, {1}), Error);
}

TEST(Sweep, SolveErrorsNameTheNoiseLevel) {
    auto P   = problem_linear_illposed(8);
    P.eval_F = [](const Vector& x) -> Vector { return Vector::Constant(8, std::numeric_limits<double>::quiet_NaN()) + x; };
    try {
        regularization_sweep(P, ScalingOperator::identity(8), P.x_start, SolverConfig{}, {0.5}, {1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::evaluation_failure);
        EXPECT_NE(std::string(e.what()).find("delta=0.5"), std::string::npos) << e.what();
    }
}
