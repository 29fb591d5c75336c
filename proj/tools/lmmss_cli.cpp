// lmmss: run solves, noise sweeps, GSVD inspection and diagnostics.
//
//   lmmss solve    --problem linear --n 32 --delta 1e-3 --out run1
//   lmmss sweep    --problem autoconvolution --delta 1e-1 --delta 1e-2 --seed 1 --seed 2
//   lmmss gsvd     --matrix A.txt --scaling file:L.txt
//   lmmss diagnose --problem coefficient --delta 1e-3
//
// Every run writes <out>/config.ini; `--config <out>/config.ini` reproduces it.

#include "lmmss/diagnostics.hpp"
#include "lmmss/gsvd.hpp"
#include "lmmss/io.hpp"
#include "lmmss/problems.hpp"
#include "lmmss/scaling.hpp"
#include "lmmss/solver.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace lmmss;

namespace {

enum Exit : int {
    ok            = 0,
    hard_error    = 1,
    usage_error   = 2,
    not_converged = 3,
    check_failed  = 4,
};

struct ExperimentConfig {
    std::string problem = "linear";
    int n               = 32;
    std::string matrix; // problem "file": forward matrix
    std::string data;   // problem "file": right-hand side
    std::string x_true; // problem "file": optional exact solution
    std::string scaling = "identity";

    std::vector<double> deltas;
    std::vector<std::uint64_t> seeds{1};
    SolverConfig solver;
    double res_tol = 0.0; // absolute; 0 keeps the relative default

    double rho       = 0.0; // TCC ball radius; 0 = 2 ||x0 - x_dagger||_L (or 1)
    int tcc_samples  = 2000;
    std::uint64_t tcc_seed = 7;

    // Not serialized.
    std::string out = "out";
    int workers     = 1;

    std::string serialize() const {
        std::ostringstream s;
        auto list = [](const auto& v, auto f) {
            std::string r = "[";
            for (std::size_t i = 0; i < v.size(); ++i) {
                r += (i ? "," : "") + f(v[i]);
            }
            return r + "]";
        };
        auto quoted = [](const std::string& v) { return "\"" + v + "\""; };
        s << "# lmmss experiment\n";
        s << "problem=" << quoted(problem) << "\n";
        s << "n=" << n << "\n";
        if (problem == "file") {
            s << "matrix=" << quoted(matrix) << "\n";
            s << "data=" << quoted(data) << "\n";
            if (!x_true.empty()) {
                s << "x-true=" << quoted(x_true) << "\n";
            }
        }
        s << "scaling=" << quoted(scaling) << "\n";
        if (!deltas.empty()) {
            s << "delta=" << list(deltas, io::fmt) << "\n";
        }
        s << "seed=" << list(seeds, [](std::uint64_t v) { return std::to_string(v); }) << "\n";
        s << "q=" << io::fmt(solver.q) << "\n";
        s << "tau=" << io::fmt(solver.tau) << "\n";
        s << "max-iter=" << solver.max_iter << "\n";
        s << "res-tol-rel=" << io::fmt(solver.res_tol_rel) << "\n";
        s << "res-tol=" << io::fmt(res_tol) << "\n";
        s << "grad-tol=" << io::fmt(solver.grad_tol) << "\n";
        s << "lambda-root-tol=" << io::fmt(solver.lambda_root_tol) << "\n";
        s << "rank-tol=" << io::fmt(solver.rank_tol) << "\n";
        s << "rho=" << io::fmt(rho) << "\n";
        s << "tcc-samples=" << tcc_samples << "\n";
        s << "tcc-seed=" << tcc_seed << "\n";
        return s.str();
    }
};

std::string sha256_hex(const std::string& text) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(Errc::io_error, "cannot write " + path.string());
    }
    out << text;
}

std::vector<std::string> available_problems() {
    auto names = problem_names();
    names.emplace_back("file");
    return names;
}

InverseProblem load_problem(const ExperimentConfig& ec) {
    if (ec.problem == "file") {
        require(!ec.matrix.empty() && !ec.data.empty(), Errc::invalid_argument,
                "problem 'file' needs --matrix and --data");
        std::optional<Vector> xt;
        if (!ec.x_true.empty()) {
            xt = io::read_vector(ec.x_true);
        }
        return problem_linear_from(io::read_matrix(ec.matrix), io::read_vector(ec.data), xt);
    }
    return make_problem(ec.problem, ec.n);
}

ScalingOperator load_scaling(const std::string& spec, Index n) {
    if (spec == "identity") {
        return ScalingOperator::identity(n);
    }
    if (spec == "d1") {
        return ScalingOperator::first_difference(n);
    }
    if (spec == "d2") {
        return ScalingOperator::second_difference(n);
    }
    if (spec.rfind("file:", 0) == 0) {
        const Matrix L = io::read_matrix(spec.substr(5));
        require(L.cols() == n, Errc::dimension_mismatch,
                "scaling file has " + std::to_string(L.cols()) + " columns, problem has n=" + std::to_string(n));
        return ScalingOperator::custom(L);
    }
    throw Error(Errc::invalid_argument, "unknown scaling '" + spec + "' (identity, d1, d2, file:<path>)");
}

SolverConfig solver_config(const ExperimentConfig& ec) {
    SolverConfig cfg = ec.solver;
    if (ec.res_tol > 0.0) {
        cfg.res_tol = ec.res_tol;
    }
    cfg.validate();
    return cfg;
}

struct Context {
    ExperimentConfig ec;
    std::string config_text;
    std::string digest;
    fs::path out;
};

Context prepare(const ExperimentConfig& ec) {
    Context ctx;
    ctx.ec          = ec;
    ctx.config_text = ec.serialize();
    ctx.digest      = sha256_hex(ctx.config_text);
    ctx.out         = ec.out;
    fs::create_directories(ctx.out);
    write_text(ctx.out / "config.ini", ctx.config_text);
    return ctx;
}

std::optional<NoisyData> first_data(const ExperimentConfig& ec, const InverseProblem& prob) {
    if (ec.deltas.empty() || ec.deltas.front() == 0.0) {
        return std::nullopt;
    }
    return make_noisy_data(prob.y_exact, ec.deltas.front(), ec.seeds.front());
}

io::CsvTable trace_table(const RunRecord& run, const std::string& digest) {
    io::CsvTable t(digest, {"k", "res_norm", "lambda", "zeta_p", "step_Lnorm", "qcond_kind"});
    for (const auto& rec : run.trace) {
        if (rec.step) {
            t.add_row({std::to_string(rec.k), io::fmt(rec.res_norm), io::fmt(rec.step->lambda), io::fmt(rec.step->zeta_p),
                       io::fmt(rec.step->step_Lnorm), std::string(to_string(rec.step->kind))});
        } else {
            t.add_row({std::to_string(rec.k), io::fmt(rec.res_norm), "", "", "", ""});
        }
    }
    return t;
}

class Summary {
public:
    explicit Summary(std::string section) { s_ << "[" << section << "]\n"; }
    template <typename T>
    Summary& kv(const std::string& key, const T& v) {
        if constexpr (std::is_floating_point_v<T>) {
            s_ << key << " = " << io::fmt(v) << "\n";
        } else {
            s_ << key << " = " << v << "\n";
        }
        return *this;
    }
    Summary& section(const std::string& name) {
        s_ << "\n[" << name << "]\n";
        return *this;
    }
    std::string str() const { return s_.str(); }

private:
    std::ostringstream s_;
};

int cmd_solve(const ExperimentConfig& ec) {
    const InverseProblem prob   = load_problem(ec);
    const ScalingOperator L     = load_scaling(ec.scaling, prob.n);
    const SolverConfig cfg      = solver_config(ec);
    const Context ctx           = prepare(ec);
    const auto data             = first_data(ec, prob);
    const RunRecord run         = solve(prob, data, L, prob.x_start, cfg);

    trace_table(run, ctx.digest).write((ctx.out / "trace.csv").string());
    Summary sum("summary");
    sum.kv("problem", prob.name)
        .kv("n", prob.n)
        .kv("delta", run.delta)
        .kv("k_star", run.k_star)
        .kv("stop_reason", to_string(run.stop_reason))
        .kv("final_residual", run.trace.back().res_norm)
        .kv("zeta_hat", run.zeta_hat);
    if (prob.x_dagger) {
        sum.kv("err_euclid", (run.final_x - *prob.x_dagger).norm()).kv("err_Lnorm", seminorm(L, run.final_x - *prob.x_dagger));
    }
    sum.kv("config_sha256", ctx.digest);
    write_text(ctx.out / "summary.txt", sum.str());

    std::cout << "k* = " << run.k_star << "  stop = " << to_string(run.stop_reason) << "  residual = "
              << io::fmt(run.trace.back().res_norm) << "\n";
    switch (run.stop_reason) {
    case StopReason::discrepancy:
    case StopReason::res_tol:
    case StopReason::grad_tol: return Exit::ok;
    default: return Exit::not_converged;
    }
}

int cmd_sweep(const ExperimentConfig& ec) {
    const InverseProblem prob = load_problem(ec);
    const ScalingOperator L   = load_scaling(ec.scaling, prob.n);
    const SolverConfig cfg    = solver_config(ec);
    require(!ec.deltas.empty(), Errc::invalid_argument, "sweep needs at least one --delta");
    const Context ctx = prepare(ec);

    const SweepReport rep = regularization_sweep(prob, L, prob.x_start, cfg, ec.deltas, ec.seeds, ec.workers);
    io::CsvTable t(ctx.digest, {"delta", "seed", "k_star", "err_euclid", "err_Lnorm", "final_residual", "stop_reason"});
    for (const auto& r : rep.rows) {
        t.add_row({io::fmt(r.delta), std::to_string(r.seed), std::to_string(r.k_star), io::fmt(r.err_euclid), io::fmt(r.err_L),
                   io::fmt(r.final_residual), std::string(to_string(r.stop_reason))});
    }
    t.write((ctx.out / "sweep.csv").string());

    Summary sum("summary");
    sum.kv("problem", prob.name)
        .kv("n", prob.n)
        .kv("runs", rep.rows.size())
        .kv("all_discrepancy", rep.all_discrepancy ? "true" : "false")
        .kv("trend_ok", rep.trend_ok() ? "true" : "false")
        .kv("trend_slack", rep.trend_slack)
        .kv("config_sha256", ctx.digest);
    write_text(ctx.out / "summary.txt", sum.str());

    std::cout << rep.rows.size() << " runs written to " << (ctx.out / "sweep.csv").string() << "\n";
    int status = Exit::ok;
    for (const auto& v : rep.trend_violations) {
        std::cerr << "trend violation (seed " << v.seed << "): error " << io::fmt(v.err_fine) << " at delta " << io::fmt(v.delta_fine)
                  << " exceeds 1.1 x " << io::fmt(v.err_coarse) << " at delta " << io::fmt(v.delta_coarse) << "\n";
        status = Exit::check_failed;
    }
    if (!rep.all_discrepancy) {
        std::cerr << "some runs did not stop by the discrepancy principle\n";
        status = Exit::check_failed;
    }
    return status;
}

int cmd_gsvd(const ExperimentConfig& ec) {
    Matrix A;
    if (!ec.matrix.empty()) {
        A = io::read_matrix(ec.matrix);
    } else {
        const InverseProblem prob = load_problem(ec);
        A                         = prob.J(prob.x_start);
    }
    const ScalingOperator L = load_scaling(ec.scaling, A.cols());
    const Context ctx       = prepare(ec);
    const GsvdFactors f     = gsvd(A, L.matrix(), GsvdOptions{ec.solver.rank_tol});
    const Vector zeta       = generalized_singular_values(f);
    const GsvdValidation v  = validate(f, A, L.matrix(), 1e-10);

    io::CsvTable t(ctx.digest, {"i", "sigma", "mu", "zeta"});
    for (Index i = 0; i < f.p; ++i) {
        t.add_row({std::to_string(i), io::fmt(f.sigma(i)), io::fmt(f.mu(i)), io::fmt(zeta(i))});
    }
    t.write((ctx.out / "gsvd.csv").string());
    std::cout << t.str();

    Summary sum("gsvd");
    sum.kv("m", f.m)
        .kv("n", f.n)
        .kv("p", f.p)
        .kv("recon_A", v.recon_A)
        .kv("recon_L", v.recon_L)
        .kv("orth_U", v.orth_U)
        .kv("orth_V", v.orth_V)
        .kv("normalization", v.normalization)
        .kv("inverse", v.inverse)
        .kv("config_sha256", ctx.digest);
    write_text(ctx.out / "summary.txt", sum.str());
    std::cout << sum.str();
    return Exit::ok;
}

int cmd_diagnose(const ExperimentConfig& ec) {
    const InverseProblem prob = load_problem(ec);
    const ScalingOperator L   = load_scaling(ec.scaling, prob.n);
    const SolverConfig cfg    = solver_config(ec);
    const Context ctx         = prepare(ec);
    const auto data           = first_data(ec, prob);
    const RunRecord run       = solve(prob, data, L, prob.x_start, cfg);
    trace_table(run, ctx.digest).write((ctx.out / "trace.csv").string());

    Summary sum("run");
    sum.kv("problem", prob.name)
        .kv("n", prob.n)
        .kv("delta", run.delta)
        .kv("k_star", run.k_star)
        .kv("stop_reason", to_string(run.stop_reason));

    const double dist = prob.x_dagger ? seminorm(L, prob.x_start - *prob.x_dagger) : 0.0;
    double rho        = ec.rho;
    if (rho <= 0.0) {
        rho = dist > 0.0 ? 2.0 * dist : 1.0;
    }
    const TccEstimate tcc = estimate_tcc_constant(prob, L, prob.x_start, rho, ec.tcc_samples, ec.tcc_seed);
    sum.section("tcc").kv("c_hat", tcc.c_hat).kv("rho", tcc.rho).kv("samples", tcc.samples).kv("valid_pairs", tcc.valid_pairs);

    int status = Exit::ok;
    if (!prob.x_dagger) {
        const char* notice = "skipped: exact solution not available";
        sum.section("assumption").kv("status", notice);
        sum.section("gain").kv("status", notice);
        sum.section("kstar_bound").kv("status", notice);
        sum.section("euclidean_bound").kv("status", notice);
        std::cout << "exact solution not available: gain, k* bound and Euclidean bound checks skipped\n";
    } else {
        const InitialGuessReport ig = check_initial_guess(dist, tcc.c_hat, rho, cfg.q, cfg.tau, run.delta);
        sum.section("assumption")
            .kv("dist_L", ig.dist_L)
            .kv("bound", ig.bound)
            .kv("theta", ig.theta)
            .kv("holds", ig.holds ? "true" : "false");

        // The step inequality does not involve theta; the others need theta > 1.
        const bool theta_ok = ig.theta > 1.0;
        const GainReport gain = check_gain(run, prob.x_dagger, L, cfg.q, theta_ok ? ig.theta : 1.1);
        io::CsvTable gt(ctx.digest, {"k", "gain", "step2", "rhs_linearized", "rhs_spectral", "equality_kind", "holds_step",
                                     "holds_linearized", "holds_spectral"});
        for (const auto& r : gain.rows) {
            gt.add_row({std::to_string(r.k), io::fmt(r.gain), io::fmt(r.step2), io::fmt(r.rhs_linearized), io::fmt(r.rhs_spectral),
                        r.equality_kind ? "1" : "0", r.holds_step ? "1" : "0", r.holds_linearized ? "1" : "0",
                        r.holds_spectral ? "1" : "0"});
        }
        gt.write((ctx.out / "gain.csv").string());
        std::size_t soft = 0;
        for (const auto& v : gain.violations) {
            soft += v.which != GainInequality::step;
        }
        sum.section("gain")
            .kv("theta_used", gain.theta)
            .kv("slack", gain.slack)
            .kv("step_holds", gain.step_holds() ? "true" : "false")
            .kv("other_violations", theta_ok ? std::to_string(soft) : std::string("not evaluated (theta <= 1)"));
        if (!gain.step_holds()) {
            for (const auto& v : gain.violations) {
                if (v.which == GainInequality::step) {
                    std::cerr << "gain inequality violated at k = " << v.k << " (margin " << io::fmt(v.margin) << ")\n";
                }
            }
            status = Exit::check_failed;
        }

        const MonotoneReport mono = check_monotone_distance(run, *prob.x_dagger, L);
        sum.section("monotone").kv("holds", mono.holds ? "true" : "false").kv("max_increase", mono.max_increase);

        if (run.noisy && run.stop_reason == StopReason::discrepancy && theta_ok) {
            const KstarBoundReport kb = check_kstar_bound(run, prob.x_dagger, L, cfg.q, cfg.tau, run.delta, ig.theta);
            sum.section("kstar_bound")
                .kv("lhs", kb.lhs)
                .kv("sum_res2", kb.sum_res2)
                .kv("zeta_hat", kb.zeta_hat)
                .kv("rhs_unsquared", kb.rhs_unsquared)
                .kv("rhs_squared", kb.rhs_squared)
                .kv("holds_unsquared", kb.holds_unsquared ? "true" : "false")
                .kv("holds_squared", kb.holds_squared ? "true" : "false");
        } else {
            sum.section("kstar_bound").kv("status", "skipped: needs a noisy run stopped by discrepancy and theta > 1");
        }

        const EuclideanBoundReport eb = check_euclidean_bound(prob, run, prob.x_dagger, L, tcc.c_hat);
        io::CsvTable et(ctx.digest, {"k", "err_next", "bound", "bound_direct"});
        for (const auto& r : eb.rows) {
            et.add_row({std::to_string(r.k), io::fmt(r.lhs), io::fmt(r.rhs), io::fmt(r.direct)});
        }
        et.write((ctx.out / "euclid.csv").string());
        sum.section("euclidean_bound").kv("c", eb.c).kv("violations", eb.violations().size());

        if (theta_ok) {
            const ResidualBracketReport rb = check_residual_bracket(prob, run, *prob.x_dagger, cfg.q, ig.theta);
            sum.section("residual_bracket")
                .kv("checked", rb.checked)
                .kv("violations", rb.violations)
                .kv("ratio_min", rb.worst_ratio_low)
                .kv("ratio_max", rb.worst_ratio_high);
        }
    }
    sum.section("provenance").kv("config_sha256", ctx.digest);
    write_text(ctx.out / "diagnose.txt", sum.str());
    std::cout << sum.str();
    return status;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Levenberg-Marquardt with singular scaling: solves, sweeps and diagnostics"};
    app.set_config("--config", "", "Read options from an INI file (as written to <out>/config.ini)");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);
    app.fallthrough();

    ExperimentConfig ec;
    app.add_option("--problem", ec.problem, "Bundled problem, or 'file' with --matrix/--data");
    app.add_option("--n", ec.n, "Problem size")->check(CLI::PositiveNumber);
    app.add_option("--matrix", ec.matrix, "Forward matrix file (problem 'file', or A for gsvd)");
    app.add_option("--data", ec.data, "Right-hand side file (problem 'file')");
    app.add_option("--x-true", ec.x_true, "Exact solution file (problem 'file', optional)");
    app.add_option("--scaling", ec.scaling, "identity | d1 | d2 | file:<path>");
    app.add_option("--q", ec.solver.q, "q-condition parameter in (0, 1)");
    app.add_option("--tau", ec.solver.tau, "Discrepancy parameter, tau > 1/q");
    app.add_option("--delta", ec.deltas, "Noise level (repeatable; 0 or absent means exact data)");
    app.add_option("--seed", ec.seeds, "Noise seed (repeatable)");
    app.add_option("--max-iter", ec.solver.max_iter, "Iteration cap");
    app.add_option("--res-tol-rel", ec.solver.res_tol_rel, "Exact data: stop when residual <= this x initial residual");
    app.add_option("--res-tol", ec.res_tol, "Exact data: absolute residual tolerance (overrides --res-tol-rel)");
    app.add_option("--grad-tol", ec.solver.grad_tol, "Stop when ||J^T r|| <= grad-tol");
    app.add_option("--lambda-root-tol", ec.solver.lambda_root_tol, "Relative tolerance of the q-condition root");
    app.add_option("--rank-tol", ec.solver.rank_tol, "Relative rank threshold");
    app.add_option("--rho", ec.rho, "TCC sampling radius (0: twice the initial L-distance)");
    app.add_option("--tcc-samples", ec.tcc_samples, "TCC sample pairs");
    app.add_option("--tcc-seed", ec.tcc_seed, "TCC sampling seed");
    app.add_option("--out", ec.out, "Output directory");
    app.add_option("--workers", ec.workers, "Sweep worker threads")->check(CLI::PositiveNumber);

    auto* solve_cmd    = app.add_subcommand("solve", "Single solve: trace.csv and summary.txt");
    auto* sweep_cmd    = app.add_subcommand("sweep", "Noise-level sweep: sweep.csv and summary.txt");
    auto* gsvd_cmd     = app.add_subcommand("gsvd", "GSVD of (A, L): sigma, mu, zeta and residuals");
    auto* diagnose_cmd = app.add_subcommand("diagnose", "Fresh solve plus TCC, gain, k* and Euclidean bound reports");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? Exit::ok : Exit::usage_error;
    }

    const auto names = available_problems();
    if (std::find(names.begin(), names.end(), ec.problem) == names.end()) {
        std::string list;
        for (const auto& s : names) {
            list += (list.empty() ? "" : ", ") + s;
        }
        std::cerr << "unknown problem '" << ec.problem << "'; available: " << list << "\n";
        return Exit::usage_error;
    }

    try {
        if (*solve_cmd) {
            return cmd_solve(ec);
        }
        if (*sweep_cmd) {
            return cmd_sweep(ec);
        }
        if (*gsvd_cmd) {
            return cmd_gsvd(ec);
        }
        if (*diagnose_cmd) {
            return cmd_diagnose(ec);
        }
    } catch (const Error& e) {
        std::cerr << to_string(e.code()) << ": " << e.what() << "\n";
        return e.code() == Errc::invalid_argument ? Exit::usage_error : Exit::hard_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return Exit::hard_error;
    }
    return Exit::usage_error;
}
