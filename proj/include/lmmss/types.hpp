#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace lmmss {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index  = Eigen::Index;

/// Seeded engine used everywhere randomness is needed; results are a pure
/// function of the seed on a given standard library.
using Rng = std::mt19937_64;

inline Vector gaussian_vector(Index n, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Vector v(n);
    for (Index i = 0; i < n; ++i) {
        v[i] = dist(rng);
    }
    return v;
}

inline Matrix gaussian_matrix(Index rows, Index cols, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix a(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) {
            a(i, j) = dist(rng);
        }
    }
    return a;
}

/// Unit vector uniformly distributed on the sphere S^{n-1}.
inline Vector random_unit_vector(Index n, Rng& rng) {
    Vector v = gaussian_vector(n, rng);
    double nv = v.norm();
    while (nv == 0.0) {
        v  = gaussian_vector(n, rng);
        nv = v.norm();
    }
    return v / nv;
}

inline double spectral_norm(const Matrix& a) {
    if (a.size() == 0) {
        return 0.0;
    }
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues()(0);
}

} // namespace lmmss
