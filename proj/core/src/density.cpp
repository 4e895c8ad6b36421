#include "popest/density.hpp"

#include "popest/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace popest {

namespace {

constexpr double kPi = 3.141592653589793238462643383279503;

double std_normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
}

// P(zlo <= Z <= zhi) for a standard normal, using erfc on the tail side so
// far-from-mean cells keep relative accuracy.
double std_normal_prob(double zlo, double zhi) {
    const double s = 0.7071067811865475244; // 1/sqrt(2)
    if (zlo >= 0.0) return 0.5 * (std::erfc(zlo * s) - std::erfc(zhi * s));
    if (zhi <= 0.0) return 0.5 * (std::erfc(-zhi * s) - std::erfc(-zlo * s));
    return 0.5 * (std::erf(zhi * s) + std::erf(-zlo * s));
}

// g[j] = ∫_0^w t^j e^{-theta t} dt for j = 0..2. Series for small theta*w,
// closed form otherwise.
std::array<double, 3> exp_g(double theta, double w) {
    std::array<double, 3> g{};
    const double x = theta * w;
    if (x < 0.5) {
        for (int j = 0; j <= 2; ++j) {
            double term = std::pow(w, j + 1) / (j + 1);
            double sum = term;
            for (int i = 1; i <= 40; ++i) {
                term *= -x / i;
                const double contrib = term * (j + 1) / (i + j + 1);
                sum += contrib;
                if (std::abs(contrib) < 1e-18 * std::abs(sum)) break;
            }
            g[j] = sum;
        }
        return g;
    }
    const double e = std::exp(-x);
    g[0] = (1.0 - e) / theta;
    g[1] = (1.0 - (1.0 + x) * e) / (theta * theta);
    g[2] = (2.0 - (2.0 + x * (2.0 + x)) * e) / (theta * theta * theta);
    return g;
}

// 16-point Gauss-Legendre rule on [-1,1].
constexpr int kGl = 16;
constexpr double kGlNode[kGl] = {
    -0.9894009349916499, -0.9445750230732326, -0.8656312023878318, -0.7554044083550030,
    -0.6178762444026438, -0.4580167776572274, -0.2816035507792589, -0.0950125098376374,
    0.0950125098376374,  0.2816035507792589,  0.4580167776572274,  0.6178762444026438,
    0.7554044083550030,  0.8656312023878318,  0.9445750230732326,  0.9894009349916499};
constexpr double kGlWeight[kGl] = {
    0.0271524594117541, 0.0622535239386479, 0.0951585116824928, 0.1246289712555339,
    0.1495959888165767, 0.1691565193950025, 0.1826034150449236, 0.1894506104550685,
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};

struct Rule1d {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Panelized Gauss-Legendre; panel width is capped so the Gaussian integrands
// stay resolved (<= 2 sigma per panel), with a hard panel-count cap.
Rule1d gl_panels(double lo, double hi, double max_panel) {
    const double width = hi - lo;
    int panels = 1;
    if (max_panel > 0.0 && width > max_panel) {
        panels = std::min(static_cast<int>(std::ceil(width / max_panel)), 512);
    }
    Rule1d rule;
    rule.nodes.reserve(panels * kGl);
    rule.weights.reserve(panels * kGl);
    const double pw = width / panels;
    for (int p = 0; p < panels; ++p) {
        const double a = lo + p * pw;
        const double mid = a + 0.5 * pw;
        const double half = 0.5 * pw;
        for (int i = 0; i < kGl; ++i) {
            rule.nodes.push_back(mid + half * kGlNode[i]);
            rule.weights.push_back(half * kGlWeight[i]);
        }
    }
    return rule;
}

int shape_dim(Family f) {
    switch (f) {
        case Family::Uniform: return 0;
        case Family::Exponential: return 1;
        case Family::Normal: return 2;
        case Family::BivariateNormal: return 5;
    }
    return 0;
}

int shape_offset(Family f) {
    switch (f) {
        case Family::Uniform: return 2;
        case Family::Exponential: return 1;
        case Family::Normal: return 2;
        case Family::BivariateNormal: return 4;
    }
    return 0;
}

// Unnormalized integrand conventions: Uniform phi = 1; Exponential
// phi = e^{-theta q}; Normal phi = N(mu, sigma) pdf; BivariateNormal
// phi = exp(-(q-mu)' Sigma^{-1} (q-mu) / 2) without the constant.
struct RawIntegrals {
    double i0 = 0.0;
    std::array<double, 2> i1{0.0, 0.0};
    Vector d_i0_shape; // length shape_dim
    Matrix d_i1_shape; // 2 x shape_dim
};

struct BivariateKernel {
    Eigen::Matrix2d prec; // Sigma^{-1}
    Eigen::Matrix2d lmat;
    Eigen::Vector2d mean;

    explicit BivariateKernel(const TruncatedDensity& d)
        : lmat(d.chol), mean(d.mu2) {
        prec = d.covariance().inverse();
    }

    double phi(double q1, double q2) const {
        Eigen::Vector2d r(q1 - mean[0], q2 - mean[1]);
        return std::exp(-0.5 * r.dot(prec * r));
    }

    // phi and its five shape partials (mu1, mu2, L11, L12, L22).
    void phi_with_shape(double q1, double q2, double& phi_out,
                        std::array<double, 5>& dshape) const {
        Eigen::Vector2d r(q1 - mean[0], q2 - mean[1]);
        const Eigen::Vector2d v = prec * r;
        const double p = std::exp(-0.5 * r.dot(v));
        const Eigen::Vector2d lv = lmat * v;
        phi_out = p;
        dshape[0] = p * v[0];
        dshape[1] = p * v[1];
        dshape[2] = p * lv[0] * v[0]; // d/dL11
        dshape[3] = p * lv[0] * v[1]; // d/dL12
        dshape[4] = p * lv[1] * v[1]; // d/dL22
    }

    // Conditional standard deviation along one axis (1/sqrt(P_kk)); under
    // correlation this is the scale the tensor-product quadrature must
    // resolve, not the marginal sigma.
    double axis_sigma(int axis) const { return 1.0 / std::sqrt(prec(axis, axis)); }
};

RawIntegrals raw_box(const TruncatedDensity& d, const Box& box, bool with_shape) {
    const int ns = shape_dim(d.family);
    RawIntegrals out;
    out.d_i0_shape = Vector::Zero(ns);
    out.d_i1_shape = Matrix::Zero(2, ns);

    switch (d.family) {
        case Family::Uniform: {
            const double a = box.lo[0], b = box.hi[0];
            out.i0 = b - a;
            out.i1[0] = 0.5 * (b * b - a * a);
            return out;
        }
        case Family::Exponential: {
            const double alpha = box.lo[0], beta = box.hi[0];
            const double theta = d.rate;
            const double u = std::exp(-theta * alpha);
            const auto g = exp_g(theta, beta - alpha);
            const double i0 = u * g[0];
            const double i1 = u * (alpha * g[0] + g[1]);
            const double i2 = u * (alpha * alpha * g[0] + 2.0 * alpha * g[1] + g[2]);
            out.i0 = i0;
            out.i1[0] = i1;
            if (with_shape) {
                out.d_i0_shape[0] = -i1;
                out.d_i1_shape(0, 0) = -i2;
            }
            return out;
        }
        case Family::Normal: {
            const double alpha = box.lo[0], beta = box.hi[0];
            const double mu = d.mu, sigma = d.sigma;
            const double za = (alpha - mu) / sigma, zb = (beta - mu) / sigma;
            const double na = std_normal_pdf(za), nb = std_normal_pdf(zb);
            const double prob = std_normal_prob(za, zb);
            const double dn = na - nb;          // n(za) - n(zb)
            const double dzn = za * na - zb * nb;
            const double dz2n = za * za * na - zb * zb * nb;
            out.i0 = prob;
            out.i1[0] = mu * prob + sigma * dn;
            if (with_shape) {
                out.d_i0_shape[0] = dn / sigma;                      // d/dmu
                out.d_i0_shape[1] = dzn / sigma;                     // d/dsigma
                out.d_i1_shape(0, 0) = prob + mu * dn / sigma + dzn; // d/dmu
                out.d_i1_shape(0, 1) = mu * dzn / sigma + dn + dz2n; // d/dsigma
            }
            return out;
        }
        case Family::BivariateNormal: {
            const BivariateKernel kern(d);
            const Rule1d r1 = gl_panels(box.lo[0], box.hi[0], 2.0 * kern.axis_sigma(0));
            const Rule1d r2 = gl_panels(box.lo[1], box.hi[1], 2.0 * kern.axis_sigma(1));
            for (std::size_t i = 0; i < r1.nodes.size(); ++i) {
                const double q1 = r1.nodes[i];
                const double w1 = r1.weights[i];
                for (std::size_t j = 0; j < r2.nodes.size(); ++j) {
                    const double q2 = r2.nodes[j];
                    const double w = w1 * r2.weights[j];
                    if (with_shape) {
                        double phi;
                        std::array<double, 5> ds;
                        kern.phi_with_shape(q1, q2, phi, ds);
                        out.i0 += w * phi;
                        out.i1[0] += w * q1 * phi;
                        out.i1[1] += w * q2 * phi;
                        for (int k = 0; k < 5; ++k) {
                            out.d_i0_shape[k] += w * ds[k];
                            out.d_i1_shape(0, k) += w * q1 * ds[k];
                            out.d_i1_shape(1, k) += w * q2 * ds[k];
                        }
                    } else {
                        const double phi = kern.phi(q1, q2);
                        out.i0 += w * phi;
                        out.i1[0] += w * q1 * phi;
                        out.i1[1] += w * q2 * phi;
                    }
                }
            }
            return out;
        }
    }
    return out;
}

// Integral of phi (and of q_moment * phi) over the (p-1)-dimensional face of a
// box at coordinate `coord` on `axis`. For p = 1 these are point evaluations.
struct FaceIntegrals {
    double f0 = 0.0;               // ∫_face phi
    std::array<double, 2> f1{0, 0}; // ∫_face q_m phi per moment axis
};

FaceIntegrals face_integrals(const TruncatedDensity& d, const Box& box, int axis, double coord) {
    FaceIntegrals out;
    switch (d.family) {
        case Family::Uniform:
            out.f0 = 1.0;
            out.f1[0] = coord;
            return out;
        case Family::Exponential:
            out.f0 = std::exp(-d.rate * coord);
            out.f1[0] = coord * out.f0;
            return out;
        case Family::Normal:
            out.f0 = std_normal_pdf((coord - d.mu) / d.sigma) / d.sigma;
            out.f1[0] = coord * out.f0;
            return out;
        case Family::BivariateNormal: {
            const BivariateKernel kern(d);
            const int other = 1 - axis;
            const Rule1d rule =
                gl_panels(box.lo[other], box.hi[other], 2.0 * kern.axis_sigma(other));
            double f0 = 0.0, f1o = 0.0;
            for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
                const double qo = rule.nodes[i];
                const double q1 = axis == 0 ? coord : qo;
                const double q2 = axis == 0 ? qo : coord;
                const double phi = kern.phi(q1, q2);
                f0 += rule.weights[i] * phi;
                f1o += rule.weights[i] * qo * phi;
            }
            out.f0 = f0;
            out.f1[axis] = coord * f0;
            out.f1[other] = f1o;
            return out;
        }
    }
    return out;
}

void require_cell_in_support(const TruncatedDensity& d, const Box& cell) {
    double scale = 1.0;
    for (int k = 0; k < d.support.dim; ++k)
        scale = std::max({scale, std::abs(d.support.lo[k]), std::abs(d.support.hi[k])});
    if (cell.dim != d.support.dim || !d.support.contains(cell, 1e-9 * scale))
        throw std::domain_error("cell not contained in the density support");
}

} // namespace

std::string family_name(Family f) {
    switch (f) {
        case Family::Uniform: return "uniform";
        case Family::Exponential: return "exponential";
        case Family::Normal: return "normal";
        case Family::BivariateNormal: return "bivariate_normal";
    }
    return "?";
}

Family family_from_name(const std::string& name) {
    if (name == "uniform") return Family::Uniform;
    if (name == "exponential") return Family::Exponential;
    if (name == "normal") return Family::Normal;
    if (name == "bivariate_normal") return Family::BivariateNormal;
    throw std::invalid_argument("unknown density family: " + name);
}

int param_dim(Family f) { return f == Family::BivariateNormal ? 2 : 1; }

int rho_dim(Family f) {
    switch (f) {
        case Family::Uniform: return 2;
        case Family::Exponential: return 2;
        case Family::Normal: return 4;
        case Family::BivariateNormal: return 9;
    }
    return 0;
}

std::vector<std::string> rho_labels(Family f) {
    switch (f) {
        case Family::Uniform: return {"a", "b"};
        case Family::Exponential: return {"R", "theta"};
        case Family::Normal: return {"a", "b", "mu", "sigma"};
        case Family::BivariateNormal:
            return {"a", "b", "c", "d", "mu1", "mu2", "L11", "L12", "L22"};
    }
    return {};
}

int support_bound_rho_index(Family f, int axis, int side) {
    switch (f) {
        case Family::Uniform:
        case Family::Normal:
            return axis == 0 ? side : -1;
        case Family::Exponential:
            return (axis == 0 && side == 1) ? 0 : -1;
        case Family::BivariateNormal:
            return 2 * axis + side;
    }
    return -1;
}

Vector pack_rho(const TruncatedDensity& d) {
    Vector rho(rho_dim(d.family));
    switch (d.family) {
        case Family::Uniform:
            rho << d.support.lo[0], d.support.hi[0];
            break;
        case Family::Exponential:
            rho << d.support.hi[0], d.rate;
            break;
        case Family::Normal:
            rho << d.support.lo[0], d.support.hi[0], d.mu, d.sigma;
            break;
        case Family::BivariateNormal:
            rho << d.support.lo[0], d.support.hi[0], d.support.lo[1], d.support.hi[1], d.mu2[0],
                d.mu2[1], d.chol(0, 0), d.chol(0, 1), d.chol(1, 1);
            break;
    }
    return rho;
}

TruncatedDensity make_density(Family f, const Vector& rho, double eps_width) {
    if (rho.size() != rho_dim(f))
        throw std::invalid_argument("make_density: rho has wrong length for family " +
                                    family_name(f));
    TruncatedDensity d;
    d.family = f;
    switch (f) {
        case Family::Uniform:
            d.support = Box::interval(rho[0], rho[1]);
            break;
        case Family::Exponential:
            d.support = Box::interval(0.0, rho[0]);
            d.rate = rho[1];
            break;
        case Family::Normal:
            d.support = Box::interval(rho[0], rho[1]);
            d.mu = rho[2];
            d.sigma = rho[3];
            break;
        case Family::BivariateNormal:
            d.support = Box::rect(rho[0], rho[1], rho[2], rho[3]);
            d.mu2 << rho[4], rho[5];
            d.chol << rho[6], rho[7], 0.0, rho[8];
            break;
    }
    validate_density(d, eps_width);
    return d;
}

void validate_density(const TruncatedDensity& d, double eps_width) {
    if (d.support.dim != param_dim(d.family))
        throw std::domain_error("density support dimension does not match family");
    for (int k = 0; k < d.support.dim; ++k) {
        if (!(d.support.width(k) >= eps_width))
            throw std::domain_error("density support width below eps_width");
    }
    switch (d.family) {
        case Family::Uniform:
            break;
        case Family::Exponential:
            if (!(d.rate > 0.0)) throw std::domain_error("exponential rate must be positive");
            if (d.support.lo[0] != 0.0)
                throw std::domain_error("exponential support must start at 0");
            break;
        case Family::Normal:
            if (!(d.sigma > 0.0)) throw std::domain_error("normal sigma must be positive");
            break;
        case Family::BivariateNormal:
            if (!(d.chol(0, 0) > 0.0 && d.chol(1, 1) > 0.0))
                throw std::domain_error("cholesky factor diagonal must be positive");
            if (d.chol(1, 0) != 0.0)
                throw std::domain_error("cholesky factor must be upper triangular");
            break;
    }
    const double z = raw_box(d, d.support, false).i0;
    if (!(z > 0.0) || !std::isfinite(z))
        throw std::domain_error("density normalizer is not positive");
}

bool RhoBounds::contains(const Vector& rho, double slack) const {
    if (rho.size() != lower.size()) return false;
    for (Eigen::Index k = 0; k < rho.size(); ++k) {
        if (rho[k] < lower[k] - slack || rho[k] > upper[k] + slack) return false;
    }
    for (const auto& [i, j] : orderings) {
        if (rho[i] + eps_width > rho[j] + slack) return false;
    }
    return true;
}

Vector RhoBounds::project(const Vector& rho) const {
    Vector x = rho.cwiseMax(lower).cwiseMin(upper);
    for (int round = 0; round < 8; ++round) {
        bool moved = false;
        for (const auto& [i, j] : orderings) {
            if (x[i] + eps_width > x[j]) {
                const double mid = 0.5 * (x[i] + x[j]);
                x[i] = mid - 0.5 * eps_width;
                x[j] = mid + 0.5 * eps_width;
                moved = true;
            }
        }
        x = x.cwiseMax(lower).cwiseMin(upper);
        if (!moved) break;
    }
    // Fallback pinning for pairs squeezed against the box.
    for (const auto& [i, j] : orderings) {
        if (x[i] + eps_width > x[j]) {
            x[j] = std::min(upper[j], std::max(x[j], lower[i] + eps_width));
            x[i] = x[j] - eps_width;
        }
    }
    return x;
}

void RhoBounds::validate() const {
    if (lower.size() != upper.size()) throw std::invalid_argument("bounds size mismatch");
    for (Eigen::Index k = 0; k < lower.size(); ++k) {
        if (!(lower[k] <= upper[k])) throw std::invalid_argument("lower bound exceeds upper");
    }
    for (const auto& [i, j] : orderings) {
        if (i < 0 || j < 0 || i >= lower.size() || j >= lower.size())
            throw std::invalid_argument("ordering index out of range");
        if (lower[i] + eps_width > upper[j])
            throw std::invalid_argument("ordering constraint infeasible within the box");
    }
}

RhoBounds default_bounds(Family f) {
    RhoBounds b;
    b.eps_width = 1e-6;
    switch (f) {
        case Family::Uniform:
            b.lower = Vector(2);
            b.upper = Vector(2);
            b.lower << 1e-3, 1e-3;
            b.upper << 20.0, 20.0;
            b.orderings = {{0, 1}};
            break;
        case Family::Exponential:
            b.lower = Vector(2);
            b.upper = Vector(2);
            b.lower << 0.5, 1e-6;
            b.upper << 40.0, 10.0;
            break;
        case Family::Normal:
            b.lower = Vector(4);
            b.upper = Vector(4);
            b.lower << 1e-3, 1e-3, 0.1, 0.05;
            b.upper << 20.0, 20.0, 20.0, 5.0;
            b.orderings = {{0, 1}};
            break;
        case Family::BivariateNormal:
            b.lower = Vector(9);
            b.upper = Vector(9);
            b.lower << 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 1e-3, -10.0, 1e-3;
            b.upper << 30.0, 30.0, 25.0, 25.0, 30.0, 25.0, 10.0, 10.0, 10.0;
            b.orderings = {{0, 1}, {2, 3}};
            break;
    }
    return b;
}

DensityWorkspace make_workspace(const TruncatedDensity& d) {
    const int nr = rho_dim(d.family);
    const int so = shape_offset(d.family);
    DensityWorkspace ws;
    ws.dz = Vector::Zero(nr);
    const RawIntegrals raw = raw_box(d, d.support, true);
    ws.z = raw.i0;
    for (int k = 0; k < shape_dim(d.family); ++k) ws.dz[so + k] = raw.d_i0_shape[k];
    for (int axis = 0; axis < d.support.dim; ++axis) {
        for (int side = 0; side < 2; ++side) {
            const int idx = support_bound_rho_index(d.family, axis, side);
            if (idx < 0) continue;
            const double coord = side == 0 ? d.support.lo[axis] : d.support.hi[axis];
            const double sign = side == 0 ? -1.0 : 1.0;
            ws.dz[idx] += sign * face_integrals(d, d.support, axis, coord).f0;
        }
    }
    return ws;
}

double pdf(const TruncatedDensity& d, const ParamPoint& q) {
    std::array<double, 2> pt{q[0], q[1]};
    if (!d.support.contains_point(pt)) return 0.0;
    const double z = raw_box(d, d.support, false).i0;
    switch (d.family) {
        case Family::Uniform: return 1.0 / z;
        case Family::Exponential: return std::exp(-d.rate * q[0]) / z;
        case Family::Normal:
            return std_normal_pdf((q[0] - d.mu) / d.sigma) / d.sigma / z;
        case Family::BivariateNormal: return BivariateKernel(d).phi(q[0], q[1]) / z;
    }
    return 0.0;
}

double cell_mass(const TruncatedDensity& d, const DensityWorkspace& ws, const Box& cell) {
    require_cell_in_support(d, cell);
    return raw_box(d, cell, false).i0 / ws.z;
}

double cell_mass(const TruncatedDensity& d, const Box& cell) {
    require_cell_in_support(d, cell);
    return raw_box(d, cell, false).i0 / raw_box(d, d.support, false).i0;
}

double cell_first_moment(const TruncatedDensity& d, const DensityWorkspace& ws, const Box& cell,
                         int axis) {
    require_cell_in_support(d, cell);
    return raw_box(d, cell, false).i1[axis] / ws.z;
}

double cell_first_moment(const TruncatedDensity& d, const Box& cell, int axis) {
    require_cell_in_support(d, cell);
    return raw_box(d, cell, false).i1[axis] / raw_box(d, d.support, false).i0;
}

CellGeometryJacobian bound_coincident_jacobian(const TruncatedDensity& d, const Box& cell) {
    const int p = param_dim(d.family);
    const int nr = rho_dim(d.family);
    CellGeometryJacobian geo;
    geo.d_lo = Matrix::Zero(p, nr);
    geo.d_hi = Matrix::Zero(p, nr);
    for (int axis = 0; axis < p; ++axis) {
        const double tol =
            1e-12 * std::max({1.0, std::abs(d.support.lo[axis]), std::abs(d.support.hi[axis])});
        const int ilo = support_bound_rho_index(d.family, axis, 0);
        const int ihi = support_bound_rho_index(d.family, axis, 1);
        if (ilo >= 0 && std::abs(cell.lo[axis] - d.support.lo[axis]) <= tol)
            geo.d_lo(axis, ilo) = 1.0;
        if (ihi >= 0 && std::abs(cell.hi[axis] - d.support.hi[axis]) <= tol)
            geo.d_hi(axis, ihi) = 1.0;
    }
    return geo;
}

CellMoments cell_moments_with_partials(const TruncatedDensity& d, const DensityWorkspace& ws,
                                       const Box& cell, const CellGeometryJacobian& geo) {
    require_cell_in_support(d, cell);
    const int p = param_dim(d.family);
    const int nr = rho_dim(d.family);
    const int so = shape_offset(d.family);

    const RawIntegrals raw = raw_box(d, cell, true);

    // Total partials of the raw (unnormalized) cell integrals.
    Vector di0 = Vector::Zero(nr);
    Matrix di1 = Matrix::Zero(2, nr);
    for (int k = 0; k < shape_dim(d.family); ++k) {
        di0[so + k] = raw.d_i0_shape[k];
        for (int ax = 0; ax < p; ++ax) di1(ax, so + k) = raw.d_i1_shape(ax, k);
    }
    for (int axis = 0; axis < p; ++axis) {
        for (int side = 0; side < 2; ++side) {
            const auto& row = side == 0 ? geo.d_lo.row(axis) : geo.d_hi.row(axis);
            if (row.isZero(0.0)) continue;
            const double coord = side == 0 ? cell.lo[axis] : cell.hi[axis];
            const double sign = side == 0 ? -1.0 : 1.0;
            const FaceIntegrals face = face_integrals(d, cell, axis, coord);
            di0 += sign * face.f0 * row.transpose();
            for (int ax = 0; ax < p; ++ax) di1.row(ax) += sign * face.f1[ax] * row;
        }
    }

    CellMoments out;
    out.mass = raw.i0 / ws.z;
    out.d_mass = di0 / ws.z - (raw.i0 / (ws.z * ws.z)) * ws.dz;
    out.d_first = Matrix::Zero(p, nr);
    for (int ax = 0; ax < p; ++ax) {
        out.first[ax] = raw.i1[ax] / ws.z;
        out.d_first.row(ax) =
            di1.row(ax) / ws.z - (raw.i1[ax] / (ws.z * ws.z)) * ws.dz.transpose();
    }
    return out;
}

CellMoments cell_moments_with_partials(const TruncatedDensity& d, const Box& cell) {
    return cell_moments_with_partials(d, make_workspace(d), cell,
                                      bound_coincident_jacobian(d, cell));
}

std::vector<ParamPoint> sample(const TruncatedDensity& d, int count, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("sample: count must be >= 1");
    Rng rng(seed);
    std::vector<ParamPoint> out;
    out.reserve(count);
    switch (d.family) {
        case Family::Uniform: {
            for (int i = 0; i < count; ++i)
                out.push_back({rng.uniform(d.support.lo[0], d.support.hi[0]), 0.0});
            return out;
        }
        case Family::Exponential: {
            const double theta = d.rate;
            const double tail = -std::expm1(-theta * d.support.hi[0]); // 1 - e^{-theta R}
            for (int i = 0; i < count; ++i) {
                const double u = rng.uniform();
                out.push_back({-std::log1p(-u * tail) / theta, 0.0});
            }
            return out;
        }
        case Family::Normal: {
            const double za = (d.support.lo[0] - d.mu) / d.sigma;
            const double zb = (d.support.hi[0] - d.mu) / d.sigma;
            if (std_normal_prob(za, zb) < 1e-6)
                throw SamplingInfeasible("truncated normal acceptance rate below 1e-6");
            for (int i = 0; i < count; ++i) {
                for (;;) {
                    const double q = d.mu + d.sigma * rng.normal();
                    if (q >= d.support.lo[0] && q <= d.support.hi[0]) {
                        out.push_back({q, 0.0});
                        break;
                    }
                }
            }
            return out;
        }
        case Family::BivariateNormal: {
            const double z = raw_box(d, d.support, false).i0;
            const double accept = z / (2.0 * kPi * d.chol(0, 0) * d.chol(1, 1));
            if (accept < 1e-6)
                throw SamplingInfeasible("truncated bivariate normal acceptance rate below 1e-6");
            for (int i = 0; i < count; ++i) {
                for (;;) {
                    Eigen::Vector2d zvec(rng.normal(), rng.normal());
                    const Eigen::Vector2d q = d.mu2 + d.chol.transpose() * zvec;
                    std::array<double, 2> pt{q[0], q[1]};
                    if (d.support.contains_point(pt)) {
                        out.push_back({q[0], q[1]});
                        break;
                    }
                }
            }
            return out;
        }
    }
    return out;
}

} // namespace popest
