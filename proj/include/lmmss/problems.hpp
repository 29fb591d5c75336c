#pragma once

// Desk-scale test problems F(x) = y with known exact solution, and
// exact-norm noise injection.

#include "lmmss/error.hpp"
#include "lmmss/types.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace lmmss {

/// Box describing where a problem's assumptions were checked (and where F is defined).
struct DomainHint {
    Vector lower;
    Vector upper;

    bool contains(const Vector& x) const {
        return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
    }
};

using ForwardMap  = std::function<Vector(const Vector&)>;
using JacobianMap = std::function<Matrix(const Vector&)>;

/// Central-difference Jacobian with step h = rel_step * (1 + ||x||).
inline Matrix finite_difference_jacobian(const ForwardMap& F, const Vector& x, double rel_step = 1e-6) {
    const double h = rel_step * (1.0 + x.norm());
    Vector xp      = x;
    Vector f0      = F(x);
    Matrix J(f0.size(), x.size());
    for (Index j = 0; j < x.size(); ++j) {
        xp(j)          = x(j) + h;
        const Vector a = F(xp);
        xp(j)          = x(j) - h;
        const Vector b = F(xp);
        xp(j)          = x(j);
        J.col(j)       = (a - b) / (2.0 * h);
    }
    return J;
}

class InverseProblem {
public:
    std::string name;
    Index m = 0;
    Index n = 0;
    ForwardMap eval_F;
    JacobianMap eval_J; ///< may be empty: central differences are used instead
    Vector y_exact;
    std::optional<Vector> x_dagger;
    std::optional<DomainHint> domain_hint;
    Vector x_start; ///< default initial guess

    Vector F(const Vector& x) const {
        require(x.size() == n, Errc::dimension_mismatch, name + ": F expects a vector of length " + std::to_string(n));
        Vector f = eval_F(x);
        if (f.size() != m || !f.allFinite()) {
            throw Error(Errc::evaluation_failure, name + ": F returned a non-finite or mis-sized value");
        }
        return f;
    }

    Matrix J(const Vector& x) const {
        require(x.size() == n, Errc::dimension_mismatch, name + ": J expects a vector of length " + std::to_string(n));
        Matrix j = eval_J ? eval_J(x) : finite_difference_jacobian([this](const Vector& v) { return F(v); }, x);
        if (j.rows() != m || j.cols() != n || !j.allFinite()) {
            throw Error(Errc::evaluation_failure, name + ": J returned a non-finite or mis-sized value");
        }
        return j;
    }

    bool has_analytic_jacobian() const noexcept { return static_cast<bool>(eval_J); }
};

struct NoisyData {
    Vector y_delta;
    double delta       = 0.0;
    std::uint64_t seed = 0;
};

/// y_delta = y + delta * u with u a unit vector; ||y - y_delta|| = delta.
inline NoisyData make_noisy_data_along(const Vector& y, double delta, const Vector& direction, std::uint64_t seed = 0) {
    require(delta >= 0.0, Errc::negative_delta, "make_noisy_data: delta must be >= 0");
    require(direction.size() == y.size(), Errc::dimension_mismatch, "make_noisy_data: direction length differs from y");
    const double nd = direction.norm();
    require(nd > 0.0, Errc::invalid_argument, "make_noisy_data: zero direction");
    return NoisyData{y + delta * (direction / nd), delta, seed};
}

/// The direction depends only on (seed, length), so the same (delta, seed)
/// always reproduces the same data.
inline NoisyData make_noisy_data(const Vector& y, double delta, std::uint64_t seed) {
    require(delta >= 0.0, Errc::negative_delta, "make_noisy_data: delta must be >= 0");
    if (delta == 0.0) {
        return NoisyData{y, 0.0, seed};
    }
    Rng rng(seed);
    return make_noisy_data_along(y, delta, random_unit_vector(y.size(), rng), seed);
}

namespace detail {

inline Vector midpoints(Index n) {
    Vector t(n);
    for (Index i = 0; i < n; ++i) {
        t(i) = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    }
    return t;
}

} // namespace detail

/// F(x) = A x, A_ij = h exp(-(t_i - t_j)^2 / (2 s^2)) on a uniform midpoint grid, s = 0.06.
inline InverseProblem problem_linear_illposed(Index n) {
    require(n >= 4, Errc::dimension_too_small, "linear: n must be >= 4");
    const Vector t   = detail::midpoints(n);
    const double h   = 1.0 / static_cast<double>(n);
    const double wid = 0.06;
    Matrix A(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            const double d = t(i) - t(j);
            A(i, j)        = h * std::exp(-d * d / (2.0 * wid * wid));
        }
    }
    Vector xd(n);
    for (Index i = 0; i < n; ++i) {
        xd(i) = std::sin(std::numbers::pi * t(i)) + 0.5 * t(i);
    }

    InverseProblem P;
    P.name     = "linear";
    P.m        = n;
    P.n        = n;
    P.eval_F   = [A](const Vector& x) -> Vector { return A * x; };
    P.eval_J   = [A](const Vector&) -> Matrix { return A; };
    P.y_exact  = A * xd;
    P.x_dagger = xd;
    P.x_start  = Vector::Zero(n);
    return P;
}

/// Custom linear problem F(x) = A x with given data (and optionally x_dagger).
inline InverseProblem problem_linear_from(Matrix A, Vector y, std::optional<Vector> x_dagger = std::nullopt) {
    require(A.rows() == y.size(), Errc::dimension_mismatch, "linear-file: data length differs from matrix rows");
    require(A.rows() >= A.cols(), Errc::dimension_mismatch, "linear-file: need m >= n");
    if (x_dagger) {
        require(x_dagger->size() == A.cols(), Errc::dimension_mismatch, "linear-file: x_true length differs from columns");
    }
    InverseProblem P;
    P.name     = "linear-file";
    P.m        = A.rows();
    P.n        = A.cols();
    P.y_exact  = std::move(y);
    P.x_dagger = std::move(x_dagger);
    P.x_start  = Vector::Zero(A.cols());
    P.eval_F   = [A](const Vector& x) -> Vector { return A * x; };
    P.eval_J   = [A](const Vector&) -> Matrix { return A; };
    return P;
}

/// Autoconvolution on [0, 1]: F(x)_i = h * sum_{j<=i} x_{i-j} x_j, the midpoint
/// rule for int_0^{t_i} x(t_i - s) x(s) ds with unknowns at cell midpoints.
inline InverseProblem problem_autoconvolution(Index n) {
    require(n >= 8, Errc::dimension_too_small, "autoconvolution: n must be >= 8");
    const double h = 1.0 / static_cast<double>(n);
    const Vector s = detail::midpoints(n);

    auto F = [n, h](const Vector& x) -> Vector {
        Vector f = Vector::Zero(n);
        for (Index i = 0; i < n; ++i) {
            double acc = 0.0;
            for (Index j = 0; j <= i; ++j) {
                acc += x(i - j) * x(j);
            }
            f(i) = h * acc;
        }
        return f;
    };
    auto J = [n, h](const Vector& x) -> Matrix {
        Matrix jac = Matrix::Zero(n, n);
        for (Index i = 0; i < n; ++i) {
            for (Index k = 0; k <= i; ++k) {
                jac(i, k) = 2.0 * h * x(i - k);
            }
        }
        return jac;
    };

    Vector xd(n);
    for (Index i = 0; i < n; ++i) {
        xd(i) = 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * s(i));
    }
    Vector x0(n);
    for (Index i = 0; i < n; ++i) {
        x0(i) = xd(i) + 0.02 * std::cos(std::numbers::pi * s(i));
    }

    InverseProblem P;
    P.name     = "autoconvolution";
    P.m        = n;
    P.n        = n;
    P.eval_F   = F;
    P.eval_J   = J;
    P.y_exact  = F(xd);
    P.x_dagger = xd;
    P.x_start  = x0;
    return P;
}

namespace detail {

/// Solves a symmetric tridiagonal system (diag, off) x = rhs (Thomas algorithm).
inline Vector tridiagonal_solve(const Vector& diag, const Vector& off, const Vector& rhs) {
    const Index n = diag.size();
    Vector c(n), d(n);
    double denom = diag(0);
    c(0)         = n > 1 ? off(0) / denom : 0.0;
    d(0)         = rhs(0) / denom;
    for (Index i = 1; i < n; ++i) {
        denom = diag(i) - off(i - 1) * c(i - 1);
        c(i)  = i < n - 1 ? off(i) / denom : 0.0;
        d(i)  = (rhs(i) - off(i - 1) * d(i - 1)) / denom;
    }
    Vector x(n);
    x(n - 1) = d(n - 1);
    for (Index i = n - 2; i >= 0; --i) {
        x(i) = d(i) - c(i) * x(i + 1);
    }
    return x;
}

/// -(a u')' = f on (0,1), u(0) = u(1) = 0, n interior nodes, conductivity given
/// at the nodes. Edge e joins nodes e-1 and e (nodes -1 and n are the boundary);
/// edge values are node averages, the two boundary edges take the adjacent node.
struct DiffusionModel {
    Index n;
    double h;
    Vector f;

    Vector edge_values(const Vector& a) const {
        Vector k(n + 1);
        k(0) = a(0);
        k(n) = a(n - 1);
        for (Index e = 1; e < n; ++e) {
            k(e) = 0.5 * (a(e - 1) + a(e));
        }
        return k;
    }

    void check(const Vector& a) const {
        constexpr double a_min = 1e-6;
        for (Index i = 0; i < n; ++i) {
            if (!(a(i) > a_min)) {
                throw Error(Errc::nonpositive_coefficient,
                            "coefficient: conductivity at node " + std::to_string(i) + " is <= 1e-6");
            }
        }
    }

    void assemble(const Vector& a, Vector& diag, Vector& off) const {
        const Vector k   = edge_values(a);
        const double ih2 = 1.0 / (h * h);
        diag.resize(n);
        off.resize(std::max<Index>(n - 1, 0));
        for (Index i = 0; i < n; ++i) {
            diag(i) = (k(i) + k(i + 1)) * ih2;
        }
        for (Index i = 0; i < n - 1; ++i) {
            off(i) = -k(i + 1) * ih2;
        }
    }

    Vector solve(const Vector& a) const {
        check(a);
        Vector diag, off;
        assemble(a, diag, off);
        return tridiagonal_solve(diag, off, f);
    }

    /// Sensitivity equations: K(a) du/da_j = -(dK/da_j) u.
    Matrix jacobian(const Vector& a) const {
        check(a);
        Vector diag, off;
        assemble(a, diag, off);
        const Vector u   = tridiagonal_solve(diag, off, f);
        const double ih2 = 1.0 / (h * h);
        auto node        = [&](Index i) { return (i >= 0 && i < n) ? u(i) : 0.0; };

        Matrix jac(n, n);
        Vector rhs(n);
        for (Index j = 0; j < n; ++j) {
            rhs.setZero();
            // edges touching node j and d k_e / d a_j
            const Index edges[2]   = {j, j + 1};
            const double weights[2] = {j == 0 ? 1.0 : 0.5, j == n - 1 ? 1.0 : 0.5};
            for (int t = 0; t < 2; ++t) {
                const Index e   = edges[t];
                const Index l   = e - 1;
                const Index r   = e;
                const double du = (node(l) - node(r)) * ih2 * weights[t];
                if (l >= 0) {
                    rhs(l) += du;
                }
                if (r < n) {
                    rhs(r) -= du;
                }
            }
            jac.col(j) = -tridiagonal_solve(diag, off, rhs);
        }
        return jac;
    }
};

} // namespace detail

/// Recover a nodal conductivity a > 0 from the interior values of u solving
/// -(a u')' = f with homogeneous Dirichlet data. f is the source whose a = 1
/// solution is sin^2(pi t).
inline InverseProblem problem_coefficient_identification(Index n) {
    require(n >= 8, Errc::dimension_too_small, "coefficient: n must be >= 8");
    const double h = 1.0 / static_cast<double>(n + 1);
    Vector t(n), f(n);
    for (Index i = 0; i < n; ++i) {
        t(i) = static_cast<double>(i + 1) * h;
        f(i) = -2.0 * std::numbers::pi * std::numbers::pi * std::cos(2.0 * std::numbers::pi * t(i));
    }
    const detail::DiffusionModel model{n, h, f};

    Vector ad(n), a0(n);
    for (Index i = 0; i < n; ++i) {
        ad(i) = 1.0 + 0.5 * std::sin(std::numbers::pi * t(i));
        a0(i) = ad(i) + 0.02 * std::cos(std::numbers::pi * t(i));
    }

    InverseProblem P;
    P.name        = "coefficient";
    P.m           = n;
    P.n           = n;
    P.eval_F      = [model](const Vector& a) -> Vector { return model.solve(a); };
    P.eval_J      = [model](const Vector& a) -> Matrix { return model.jacobian(a); };
    P.y_exact     = model.solve(ad);
    P.x_dagger    = ad;
    P.domain_hint = DomainHint{Vector::Constant(n, 1e-6), Vector::Constant(n, std::numeric_limits<double>::infinity())};
    P.x_start     = a0;
    return P;
}

/// Solves -(a u')' = f for a given source; exposed for the discretization checks.
inline Vector diffusion_forward(const Vector& a, const Vector& f) {
    require(a.size() == f.size(), Errc::dimension_mismatch, "diffusion_forward: a and f lengths differ");
    const detail::DiffusionModel model{a.size(), 1.0 / static_cast<double>(a.size() + 1), f};
    return model.solve(a);
}

inline const std::vector<std::string>& problem_names() {
    static const std::vector<std::string> names{"linear", "autoconvolution", "coefficient"};
    return names;
}

/// Bundled problem by name; throws InvalidArgument listing the available names.
inline InverseProblem make_problem(const std::string& name, Index n) {
    if (name == "linear") {
        return problem_linear_illposed(n);
    }
    if (name == "autoconvolution") {
        return problem_autoconvolution(n);
    }
    if (name == "coefficient") {
        return problem_coefficient_identification(n);
    }
    std::string list;
    for (const auto& s : problem_names()) {
        list += (list.empty() ? "" : ", ") + s;
    }
    throw Error(Errc::invalid_argument, "unknown problem '" + name + "'; available: " + list);
}

} // namespace lmmss
