#include "popest/expm.hpp"

#include <Eigen/LU>

#include <cmath>
#include <stdexcept>

namespace popest {

namespace {

// Pade numerator applied to A: returns (U, V) with p(A) = U + V, p(-A) = -U + V,
// U collecting the odd powers.
void pade_uv(const Matrix& a, int degree, Matrix& u, Matrix& v) {
    const Eigen::Index n = a.rows();
    const Matrix a2 = a * a;
    switch (degree) {
        case 3: {
            static const double b[] = {120, 60, 12, 1};
            u = a * (b[3] * a2 + b[1] * Matrix::Identity(n, n));
            v = b[2] * a2 + b[0] * Matrix::Identity(n, n);
            return;
        }
        case 5: {
            static const double b[] = {30240, 15120, 3360, 420, 30, 1};
            const Matrix a4 = a2 * a2;
            u = a * (b[5] * a4 + b[3] * a2 + b[1] * Matrix::Identity(n, n));
            v = b[4] * a4 + b[2] * a2 + b[0] * Matrix::Identity(n, n);
            return;
        }
        case 7: {
            static const double b[] = {17297280, 8648640, 1995840, 277200, 25200, 1512, 56, 1};
            const Matrix a4 = a2 * a2;
            const Matrix a6 = a4 * a2;
            u = a * (b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * Matrix::Identity(n, n));
            v = b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * Matrix::Identity(n, n);
            return;
        }
        case 9: {
            static const double b[] = {17643225600., 8821612800., 2075673600., 302702400.,
                                       30270240.,    2162160.,    110880.,     3960.,
                                       90.,          1.};
            const Matrix a4 = a2 * a2;
            const Matrix a6 = a4 * a2;
            const Matrix a8 = a6 * a2;
            u = a * (b[9] * a8 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * Matrix::Identity(n, n));
            v = b[8] * a8 + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * Matrix::Identity(n, n);
            return;
        }
        case 13: {
            static const double b[] = {64764752532480000., 32382376266240000., 7771770303897600.,
                                       1187353796428800.,  129060195264000.,   10559470521600.,
                                       670442572800.,      33522128640.,       1323241920.,
                                       40840800.,          960960.,            16380.,
                                       182.,               1.};
            const Matrix a4 = a2 * a2;
            const Matrix a6 = a4 * a2;
            u = a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 +
                     b[3] * a2 + b[1] * Matrix::Identity(n, n));
            v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 +
                b[0] * Matrix::Identity(n, n);
            return;
        }
        default:
            throw std::logic_error("pade_uv: unsupported degree");
    }
}

Matrix pade_solve(const Matrix& u, const Matrix& v) {
    // r = (V - U)^{-1} (V + U)
    return Eigen::PartialPivLU<Matrix>(v - u).solve(v + u);
}

} // namespace

Matrix matrix_exponential(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("matrix_exponential: matrix not square");
    if (!a.allFinite()) throw std::invalid_argument("matrix_exponential: non-finite entries");

    const double norm = a.cwiseAbs().colwise().sum().maxCoeff(); // 1-norm

    // Higham's theta thresholds for double precision.
    constexpr double theta3 = 1.495585217958292e-2;
    constexpr double theta5 = 2.539398330063230e-1;
    constexpr double theta7 = 9.504178996162932e-1;
    constexpr double theta9 = 2.097847961257068e0;
    constexpr double theta13 = 5.371920351148152e0;

    Matrix u, v;
    if (norm <= theta3) {
        pade_uv(a, 3, u, v);
        return pade_solve(u, v);
    }
    if (norm <= theta5) {
        pade_uv(a, 5, u, v);
        return pade_solve(u, v);
    }
    if (norm <= theta7) {
        pade_uv(a, 7, u, v);
        return pade_solve(u, v);
    }
    if (norm <= theta9) {
        pade_uv(a, 9, u, v);
        return pade_solve(u, v);
    }

    int squarings = 0;
    if (norm > theta13) {
        squarings = static_cast<int>(std::ceil(std::log2(norm / theta13)));
    }
    const Matrix scaled = a / std::ldexp(1.0, squarings);
    pade_uv(scaled, 13, u, v);
    Matrix r = pade_solve(u, v);
    for (int s = 0; s < squarings; ++s) r = r * r;
    return r;
}

} // namespace popest
