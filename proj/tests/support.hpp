#pragma once

#include "lmmss/gsvd.hpp"
#include "lmmss/problems.hpp"
#include "lmmss/types.hpp"

#include <algorithm>
#include <vector>

namespace lmmss::test {

/// zeta_i^2 from the pencil (L^T L, A^T A + L^T L): with B = C C^T, the
/// eigenvalues of C^{-1} L^T L C^{-T} are mu_i^2 (and n - p zeros), so
/// zeta_i^2 = (1 - mu_i^2) / mu_i^2. Independent of the QR/CS route.
inline std::vector<double> pencil_zeta(const Matrix& A, const Matrix& L) {
    const Matrix B = A.transpose() * A + L.transpose() * L;
    Eigen::LLT<Matrix> llt(B);
    const Matrix Ci = llt.matrixL().solve(Matrix::Identity(B.rows(), B.cols()));
    const Matrix S  = Ci * L.transpose() * L * Ci.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (S + S.transpose()));
    std::vector<double> mu2(eig.eigenvalues().data(), eig.eigenvalues().data() + eig.eigenvalues().size());
    std::sort(mu2.begin(), mu2.end(), std::greater<>());
    std::vector<double> zeta;
    for (Index i = 0; i < L.rows(); ++i) {
        const double m2 = mu2[static_cast<std::size_t>(i)];
        zeta.push_back(std::sqrt(std::max(0.0, 1.0 - m2) / m2));
    }
    std::sort(zeta.begin(), zeta.end());
    return zeta;
}

struct RandomPair {
    Matrix A;
    Matrix L;
};

/// m <= m_max, n <= n_max, p <= n, m >= n; Gaussian entries.
inline RandomPair random_pair(Rng& rng, Index m_max = 50, Index n_max = 40) {
    std::uniform_int_distribution<Index> dn(1, n_max);
    const Index n = dn(rng);
    std::uniform_int_distribution<Index> dm(n, std::max(n, m_max));
    std::uniform_int_distribution<Index> dp(1, n);
    const Index m = dm(rng);
    const Index p = dp(rng);
    return {gaussian_matrix(m, n, rng), gaussian_matrix(p, n, rng)};
}

inline double rel_diff(const Vector& a, const Vector& b) {
    const double s = std::max(a.norm(), b.norm());
    return s > 0.0 ? (a - b).norm() / s : 0.0;
}

/// Bundled linear operator with data rescaled so that ||y_delta|| = 1 and
/// ||y - y_delta|| = delta; from x0 = 0 the initial residual has norm 1.
struct UnitResidualCase {
    InverseProblem problem;
    NoisyData data;
};

inline UnitResidualCase unit_residual_linear(Index n, double delta, std::uint64_t seed) {
    const InverseProblem base = problem_linear_illposed(n);
    const Matrix A            = base.J(base.x_start);
    Rng rng(seed);
    const Vector y_delta = base.y_exact / base.y_exact.norm();
    const Vector y       = y_delta - delta * random_unit_vector(n, rng);
    UnitResidualCase c{problem_linear_from(A, y), NoisyData{y_delta, delta, seed}};
    return c;
}

} // namespace lmmss::test
