#pragma once

#include "lmmss/error.hpp"
#include "lmmss/types.hpp"

#include <string>
#include <string_view>

namespace lmmss {

enum class ScalingKind { identity, first_difference, second_difference, custom };

constexpr std::string_view to_string(ScalingKind k) {
    switch (k) {
    case ScalingKind::identity: return "identity";
    case ScalingKind::first_difference: return "d1";
    case ScalingKind::second_difference: return "d2";
    case ScalingKind::custom: return "custom";
    }
    return "unknown";
}

/// The scaling matrix L (p x n, full row rank, possibly p < n).
class ScalingOperator {
public:
    static ScalingOperator identity(Index n) {
        require(n >= 1, Errc::dimension_too_small, "identity: n must be >= 1");
        return ScalingOperator(Matrix::Identity(n, n), ScalingKind::identity);
    }

    /// Rows (..., -1, 1, ...); p = n - 1, null space = constants.
    static ScalingOperator first_difference(Index n) {
        require(n >= 2, Errc::dimension_too_small, "first_difference: n must be >= 2");
        Matrix L = Matrix::Zero(n - 1, n);
        for (Index i = 0; i < n - 1; ++i) {
            L(i, i)     = -1.0;
            L(i, i + 1) = 1.0;
        }
        return ScalingOperator(std::move(L), ScalingKind::first_difference);
    }

    /// Rows (..., 1, -2, 1, ...); p = n - 2, null space = affine functions.
    static ScalingOperator second_difference(Index n) {
        require(n >= 3, Errc::dimension_too_small, "second_difference: n must be >= 3");
        Matrix L = Matrix::Zero(n - 2, n);
        for (Index i = 0; i < n - 2; ++i) {
            L(i, i)     = 1.0;
            L(i, i + 1) = -2.0;
            L(i, i + 2) = 1.0;
        }
        return ScalingOperator(std::move(L), ScalingKind::second_difference);
    }

    /// Arbitrary L; full row rank is verified with the given relative threshold.
    static ScalingOperator custom(Matrix L, double rank_tol = 1e-12) {
        require(L.rows() >= 1 && L.cols() >= 1, Errc::dimension_too_small, "custom scaling: empty matrix");
        require(L.rows() <= L.cols(), Errc::dimension_mismatch, "custom scaling: need p <= n");
        Eigen::JacobiSVD<Matrix> svd(L);
        const Vector& s = svd.singularValues();
        require(s(0) > 0.0 && s(s.size() - 1) > rank_tol * s(0), Errc::rank_deficient_l,
                "custom scaling: rank(L) < p");
        return ScalingOperator(std::move(L), ScalingKind::custom);
    }

    const Matrix& matrix() const noexcept { return L_; }
    Index p() const noexcept { return L_.rows(); }
    Index n() const noexcept { return L_.cols(); }
    ScalingKind kind() const noexcept { return kind_; }

private:
    ScalingOperator(Matrix L, ScalingKind kind) : L_(std::move(L)), kind_(kind) {}

    Matrix L_;
    ScalingKind kind_;
};

/// ||v||_L = ||L v||_2.
inline double seminorm(const ScalingOperator& L, const Vector& v) {
    require(v.size() == L.n(), Errc::dimension_mismatch, "seminorm: vector length does not match L");
    return (L.matrix() * v).norm();
}

struct CompletenessReport {
    double gamma     = 0.0; ///< lambda_min(J^T J + L^T L)
    double threshold = 0.0;
    bool holds       = false;
    Vector point;           ///< where J was evaluated, empty if unknown
};

/// Pointwise check of ||Jv||^2 + ||Lv||^2 >= gamma ||v||^2 with gamma > 0.
inline CompletenessReport completeness_check(const Matrix& J, const ScalingOperator& L, const Vector& point = {}) {
    require(J.cols() == L.n(), Errc::dimension_mismatch, "completeness_check: J and L column counts differ");
    const Matrix& Lm = L.matrix();
    const Matrix G   = J.transpose() * J + Lm.transpose() * Lm;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(G, Eigen::EigenvaluesOnly);

    CompletenessReport rep;
    rep.gamma = std::max(0.0, eig.eigenvalues()(0));
    const double nj = spectral_norm(J);
    const double nl = spectral_norm(Lm);
    rep.threshold   = 1e-10 * (1.0 + nj * nj + nl * nl);
    rep.holds       = rep.gamma > rep.threshold;
    rep.point       = point;
    return rep;
}

} // namespace lmmss
