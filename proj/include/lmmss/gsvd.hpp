#pragma once

// Dense generalized singular value decomposition of a pair (A, L):
//
//   A = U * blockdiag(Sigma, I_{n-p}) * X^{-1},   L = V * [M 0] * X^{-1},
//
// with sigma_i^2 + mu_i^2 = 1, sigma ascending, mu descending.
//
// Route: thin QR of the stacked matrix [A; L] = Q R, then a CS split of Q.
// The SVD of the bottom block Q_L = V [M 0] W^T fixes mu, V and W; the columns
// of Q_A W are mutually orthogonal with norms (sigma, 1), which gives U and
// sigma. The block with sigma < mu is refined by a second SVD so that small
// sigma keep full accuracy. Finally X = R^{-1} W.

#include "lmmss/error.hpp"
#include "lmmss/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace lmmss {

struct GsvdOptions {
    /// Relative threshold (times the largest singular value) for rank calls.
    double rank_tol = 1e-12;
};

struct GsvdFactors {
    Matrix U;     ///< m x n, orthonormal columns
    Matrix V;     ///< p x p, orthogonal
    Matrix X;     ///< n x n, nonsingular
    Matrix X_inv; ///< X^{-1}, formed directly from the factorization (not by inversion)
    Vector sigma; ///< length p, ascending in [0, 1]
    Vector mu;    ///< length p, descending in (0, 1]
    Index m = 0;
    Index n = 0;
    Index p = 0;
};

namespace detail {

inline void check_rank(const Matrix& a, double rank_tol, Errc code, const char* what) {
    Eigen::JacobiSVD<Matrix> svd(a);
    const Vector& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0 || s(s.size() - 1) <= rank_tol * s(0)) {
        throw Error(code, what);
    }
}

/// Householder orthonormalization of nearly orthonormal columns, processed in
/// the given order. Each output column keeps the orientation of its input.
inline Matrix orthonormalize_in_order(const Matrix& cols, const std::vector<Index>& order) {
    const Index m = cols.rows();
    const Index n = cols.cols();
    Matrix permuted(m, n);
    for (Index j = 0; j < n; ++j) {
        permuted.col(j) = cols.col(order[static_cast<std::size_t>(j)]);
    }
    Eigen::HouseholderQR<Matrix> qr(permuted);
    Matrix q = qr.householderQ() * Matrix::Identity(m, n);
    const Matrix& r = qr.matrixQR();
    Matrix out(m, n);
    for (Index j = 0; j < n; ++j) {
        const double s = r(j, j) < 0.0 ? -1.0 : 1.0;
        out.col(order[static_cast<std::size_t>(j)]) = s * q.col(j);
    }
    return out;
}

} // namespace detail

/// Computes the GSVD of (A, L). Requires m >= n >= p >= 1, rank(L) = p and
/// N(A) ∩ N(L) = {0}. Signs are fixed so that the first nonzero entry of each
/// column of X is positive.
inline GsvdFactors gsvd(const Matrix& A, const Matrix& L, const GsvdOptions& opt = {}) {
    const Index m = A.rows();
    const Index n = A.cols();
    const Index p = L.rows();
    require(L.cols() == n, Errc::dimension_mismatch,
            "gsvd: A has " + std::to_string(n) + " columns, L has " + std::to_string(L.cols()));
    require(p >= 1, Errc::dimension_mismatch, "gsvd: L must have at least one row");
    require(m >= n && n >= p, Errc::dimension_mismatch,
            "gsvd: need m >= n >= p, got m=" + std::to_string(m) + " n=" + std::to_string(n) +
                " p=" + std::to_string(p));

    detail::check_rank(L, opt.rank_tol, Errc::rank_deficient_l, "gsvd: rank(L) < p");

    Matrix stacked(m + p, n);
    stacked.topRows(m)    = A;
    stacked.bottomRows(p) = L;
    Eigen::HouseholderQR<Matrix> qr(stacked);
    const Matrix Q = qr.householderQ() * Matrix::Identity(m + p, n);
    const Matrix R = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();

    // Singular values of R are those of [A; L].
    detail::check_rank(R, opt.rank_tol, Errc::completeness_violated,
                       "gsvd: [A; L] is numerically rank deficient (N(A) and N(L) intersect)");

    const Matrix QA = Q.topRows(m);
    const Matrix QL = Q.bottomRows(p);

    Eigen::JacobiSVD<Matrix> svd(QL, Eigen::ComputeFullU | Eigen::ComputeFullV);
    GsvdFactors f;
    f.m  = m;
    f.n  = n;
    f.p  = p;
    f.mu = svd.singularValues(); // descending
    f.V  = svd.matrixU();
    Matrix W = svd.matrixV();

    Matrix C = QA * W;

    // Columns with sigma < mu: normalizing Q_A W loses orthogonality like
    // eps / (sigma_i sigma_j). Take U, sigma and a rotation of W from an SVD of
    // that block instead, then recover V and mu from Q_L W, where mu ~ 1.
    Index k = 0;
    while (k < p && C.col(k).norm() < std::sqrt(0.5)) {
        ++k;
    }
    Matrix Uk;
    Vector sk;
    if (k > 0) {
        Eigen::JacobiSVD<Matrix> cs(C.leftCols(k), Eigen::ComputeThinU | Eigen::ComputeThinV);
        Uk = cs.matrixU().rowwise().reverse(); // ascending singular values
        sk = cs.singularValues().reverse();
        const Matrix Z = cs.matrixV().rowwise().reverse();
        W.leftCols(k)  = (W.leftCols(k) * Z).eval();
        for (Index j = 0; j < k; ++j) {
            const Vector v = QL * W.col(j);
            f.mu(j)        = v.norm();
            f.V.col(j)     = v / f.mu(j);
        }
        C.leftCols(k) = Uk * sk.asDiagonal();
    }

    f.sigma.resize(p);
    for (Index i = 0; i < p; ++i) {
        const double s     = i < k ? sk(i) : C.col(i).norm();
        const double scale = std::hypot(s, f.mu(i));
        f.sigma(i)         = s / scale;
        f.mu(i) /= scale;
    }
    // Remove rounding-level inversions so the ordering holds exactly.
    for (Index i = 1; i < p; ++i) {
        f.sigma(i) = std::max(f.sigma(i), f.sigma(i - 1));
        f.mu(i)    = std::min(f.mu(i), f.mu(i - 1));
    }

    Matrix Uraw(m, n);
    for (Index j = 0; j < n; ++j) {
        if (j < k) {
            Uraw.col(j) = Uk.col(j);
            continue;
        }
        const double nj = C.col(j).norm();
        Uraw.col(j)     = nj > 0.0 ? Matrix(C.col(j) / nj) : Matrix::Zero(m, 1);
    }
    // Clean up the remaining rounding-level loss of orthogonality, keeping the
    // best-determined columns (identity block, then sigma descending) fixed.
    std::vector<Index> order;
    order.reserve(static_cast<std::size_t>(n));
    for (Index j = n - 1; j >= 0; --j) {
        order.push_back(j);
    }
    f.U = detail::orthonormalize_in_order(Uraw, order);
    if (k > 0) {
        std::vector<Index> vorder(static_cast<std::size_t>(p));
        for (Index j = 0; j < p; ++j) {
            vorder[static_cast<std::size_t>(j)] = j;
        }
        f.V = detail::orthonormalize_in_order(f.V, vorder);
    }

    f.X     = R.triangularView<Eigen::Upper>().solve(W);
    f.X_inv = W.transpose() * R;

    for (Index j = 0; j < n; ++j) {
        const double cn = f.X.col(j).cwiseAbs().maxCoeff();
        Index first     = 0;
        while (first < n && std::abs(f.X(first, j)) <= 1e-14 * cn) {
            ++first;
        }
        if (first < n && f.X(first, j) < 0.0) {
            f.X.col(j) *= -1.0;
            f.X_inv.row(j) *= -1.0;
            f.U.col(j) *= -1.0;
            if (j < p) {
                f.V.col(j) *= -1.0;
            }
        }
    }
    return f;
}

/// zeta_i = sigma_i / mu_i, nondecreasing.
inline Vector generalized_singular_values(const GsvdFactors& f) {
    Vector z(f.sigma.size());
    for (Index i = 0; i < z.size(); ++i) {
        z(i) = f.sigma(i) / f.mu(i);
    }
    return z;
}

struct GsvdValidation {
    double recon_A       = 0.0; ///< ||A - U D X^{-1}||_F / ||A||_F
    double recon_L       = 0.0; ///< ||L - V [M 0] X^{-1}||_F / ||L||_F
    double orth_U        = 0.0; ///< ||U^T U - I||_F
    double orth_V        = 0.0; ///< ||V^T V - I||_F
    double normalization = 0.0; ///< max |sigma_i^2 + mu_i^2 - 1|
    double inverse       = 0.0; ///< ||X X^{-1} - I||_F, informational
    bool pass            = false;

    double max_residual() const { return std::max({recon_A, recon_L, orth_U, orth_V, normalization}); }
};

inline Matrix reconstruct_A(const GsvdFactors& f) {
    Matrix D = Matrix::Identity(f.n, f.n);
    D.topLeftCorner(f.p, f.p) = f.sigma.asDiagonal();
    return f.U * D * f.X_inv;
}

inline Matrix reconstruct_L(const GsvdFactors& f) {
    Matrix ML                  = Matrix::Zero(f.p, f.n);
    ML.leftCols(f.p).diagonal() = f.mu;
    return f.V * ML * f.X_inv;
}

inline GsvdValidation validate(const GsvdFactors& f, const Matrix& A, const Matrix& L, double tol) {
    require(A.rows() == f.m && A.cols() == f.n && L.rows() == f.p && L.cols() == f.n &&
                f.U.rows() == f.m && f.U.cols() == f.n && f.V.rows() == f.p && f.V.cols() == f.p &&
                f.X.rows() == f.n && f.X.cols() == f.n && f.X_inv.rows() == f.n &&
                f.X_inv.cols() == f.n && f.sigma.size() == f.p && f.mu.size() == f.p,
            Errc::dimension_mismatch, "validate: factor dimensions do not match (A, L)");

    auto rel = [](const Matrix& diff, const Matrix& ref) {
        const double nr = ref.norm();
        return nr > 0.0 ? diff.norm() / nr : diff.norm();
    };
    GsvdValidation v;
    v.recon_A = rel(A - reconstruct_A(f), A);
    v.recon_L = rel(L - reconstruct_L(f), L);
    v.orth_U  = (f.U.transpose() * f.U - Matrix::Identity(f.n, f.n)).norm();
    v.orth_V  = (f.V.transpose() * f.V - Matrix::Identity(f.p, f.p)).norm();
    for (Index i = 0; i < f.p; ++i) {
        v.normalization = std::max(v.normalization, std::abs(f.sigma(i) * f.sigma(i) + f.mu(i) * f.mu(i) - 1.0));
    }
    v.inverse = (f.X * f.X_inv - Matrix::Identity(f.n, f.n)).norm();
    v.pass    = v.max_residual() <= tol;
    return v;
}

/// X^{-T} blockdiag(Sigma^2 + lambda M^2, I) X^{-1}; equals A^T A + lambda L^T L.
inline Matrix damped_normal_matrix(const GsvdFactors& f, double lambda) {
    Vector d = Vector::Ones(f.n);
    for (Index i = 0; i < f.p; ++i) {
        d(i) = f.sigma(i) * f.sigma(i) + lambda * f.mu(i) * f.mu(i);
    }
    return f.X_inv.transpose() * d.asDiagonal() * f.X_inv;
}

} // namespace lmmss
