#include "popest/expm.hpp"
#include "popest/rng.hpp"

#include <Eigen/Eigenvalues>
#include <doctest.h>

using namespace popest;

namespace {

Matrix expm_eig_oracle(const Matrix& a) {
    // Symmetric eigendecomposition reference; valid for symmetric input only.
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    return es.eigenvectors() * es.eigenvalues().array().exp().matrix().asDiagonal() *
           es.eigenvectors().transpose();
}

Matrix random_symmetric_negdef(int n, std::uint64_t seed) {
    Rng rng(seed);
    Matrix b(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) b(i, j) = rng.normal();
    return -(b * b.transpose()) - Matrix::Identity(n, n);
}

} // namespace

TEST_CASE("expm: zero matrix gives the identity") {
    const Matrix e = matrix_exponential(Matrix::Zero(5, 5));
    CHECK((e - Matrix::Identity(5, 5)).norm() == 0.0);
}

TEST_CASE("expm: diagonal case") {
    Matrix a = Matrix::Zero(2, 2);
    a(0, 0) = -1.0;
    a(1, 1) = -2.0;
    const Matrix e = matrix_exponential(a);
    CHECK(e(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(e(1, 1) == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
    CHECK(std::abs(e(0, 1)) < 1e-16);
}

TEST_CASE("expm: nilpotent block") {
    Matrix a = Matrix::Zero(2, 2);
    a(0, 1) = 1.0;
    const Matrix e = matrix_exponential(a);
    CHECK(e(0, 0) == 1.0);
    CHECK(e(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(e(1, 0) == 0.0);
    CHECK(e(1, 1) == 1.0);
}

TEST_CASE("expm: symmetric negative-definite blocks match the eigensolver oracle") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        const Matrix a = random_symmetric_negdef(8, seed);
        const Matrix e = matrix_exponential(a);
        const Matrix ref = expm_eig_oracle(a);
        CHECK((e - ref).norm() / ref.norm() < 1e-12);
    }
}

TEST_CASE("expm: scaling path (large norm) still matches the oracle") {
    Matrix a = random_symmetric_negdef(6, 77);
    a *= 40.0; // push past the degree-13 threshold to force squaring
    const Matrix e = matrix_exponential(a);
    const Matrix ref = expm_eig_oracle(a);
    CHECK((e - ref).norm() / (1.0 + ref.norm()) < 1e-12);
}

TEST_CASE("expm: rejects non-square and non-finite input") {
    CHECK_THROWS_AS(matrix_exponential(Matrix::Zero(2, 3)), std::invalid_argument);
    Matrix bad = Matrix::Zero(2, 2);
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(matrix_exponential(bad), std::invalid_argument);
}
