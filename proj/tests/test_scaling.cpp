#include "lmmss/scaling.hpp"

#include <gtest/gtest.h>

using namespace lmmss;

TEST(Scaling, FirstDifferenceStencil) {
    const auto L = ScalingOperator::first_difference(3);
    Matrix expected(2, 3);
    expected << -1, 1, 0, 0, -1, 1;
    EXPECT_EQ(L.matrix(), expected);
    EXPECT_EQ(L.p(), 2);
    EXPECT_EQ(L.kind(), ScalingKind::first_difference);
}

TEST(Scaling, SecondDifferenceStencil) {
    const auto L = ScalingOperator::second_difference(4);
    Matrix expected(2, 4);
    expected << 1, -2, 1, 0, 0, 1, -2, 1;
    EXPECT_EQ(L.matrix(), expected);
}

TEST(Scaling, Identity) {
    const auto L = ScalingOperator::identity(2);
    EXPECT_EQ(L.matrix(), Matrix::Identity(2, 2));
    EXPECT_EQ(L.p(), 2);
    EXPECT_EQ(to_string(L.kind()), "identity");
}

TEST(Scaling, TooSmall) {
    EXPECT_THROW(ScalingOperator::first_difference(1), Error);
    EXPECT_THROW(ScalingOperator::second_difference(2), Error);
    try {
        ScalingOperator::second_difference(2);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::dimension_too_small);
    }
}

TEST(Scaling, CustomRejectsRankDeficient) {
    Matrix L(2, 3);
    L << 1, 2, 3, 2, 4, 6;
    try {
        ScalingOperator::custom(L);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::rank_deficient_l);
    }
    Matrix ok(1, 2);
    ok << 1, -1;
    EXPECT_EQ(ScalingOperator::custom(ok).p(), 1);
}

TEST(Scaling, Seminorm) {
    EXPECT_DOUBLE_EQ(seminorm(ScalingOperator::first_difference(3), Vector::Constant(3, 4.2)), 0.0);
    EXPECT_DOUBLE_EQ(seminorm(ScalingOperator::identity(2), Vector{{3.0, 4.0}}), 5.0);
    Matrix L(1, 2);
    L << 1, -1;
    EXPECT_DOUBLE_EQ(seminorm(ScalingOperator::custom(L), Vector{{2.0, -1.0}}), 3.0);
    EXPECT_THROW(seminorm(ScalingOperator::identity(2), Vector::Ones(3)), Error);
}

TEST(Scaling, SeminormEquivalentToEuclideanForNonsingularL) {
    Rng rng(2);
    const Matrix Lm = gaussian_matrix(5, 5, rng) + 5.0 * Matrix::Identity(5, 5);
    const auto L    = ScalingOperator::custom(Lm);
    Eigen::JacobiSVD<Matrix> svd(Lm);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(4);
    for (int t = 0; t < 50; ++t) {
        const Vector v  = gaussian_vector(5, rng);
        const double ln = seminorm(L, v);
        EXPECT_LE(smin * v.norm(), ln * (1 + 1e-14));
        EXPECT_LE(ln, smax * v.norm() * (1 + 1e-14));
    }
}

TEST(Scaling, SeminormBilinearIdentities) {
    // ||u + v||_L^2 = ||u||_L^2 + 2 <u, v>_L + ||v||_L^2 with <u, v>_L = <Lu, Lv>.
    Rng rng(4);
    const auto L   = ScalingOperator::second_difference(7);
    const Vector u = gaussian_vector(7, rng);
    const Vector v = gaussian_vector(7, rng);
    const double lhs = std::pow(seminorm(L, u + v), 2);
    const double rhs = std::pow(seminorm(L, u), 2) + 2 * (L.matrix() * u).dot(L.matrix() * v) + std::pow(seminorm(L, v), 2);
    EXPECT_NEAR(lhs, rhs, 1e-12 * (1 + lhs));
}

TEST(Completeness, IdentityPair) {
    const auto rep = completeness_check(Matrix::Identity(2, 2), ScalingOperator::identity(2));
    EXPECT_NEAR(rep.gamma, 2.0, 1e-14);
    EXPECT_TRUE(rep.holds);
}

TEST(Completeness, ComplementaryNullSpaces) {
    Matrix J(2, 2);
    J << 1, 0, 0, 0;
    Matrix L(1, 2);
    L << 0, 1;
    const auto rep = completeness_check(J, ScalingOperator::custom(L));
    EXPECT_NEAR(rep.gamma, 1.0, 1e-14);
    EXPECT_TRUE(rep.holds);
}

TEST(Completeness, SharedNullVectorFails) {
    Matrix J(2, 2);
    J << 1, 0, 0, 0;
    Matrix L(1, 2);
    L << 1, 0;
    const auto rep = completeness_check(J, ScalingOperator::custom(L));
    EXPECT_NEAR(rep.gamma, 0.0, 1e-14);
    EXPECT_FALSE(rep.holds);
}
