#include "popest/density.hpp"

#include "popest/rng.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace popest;

namespace {

TruncatedDensity density_from(Family f, std::initializer_list<double> rho) {
    Vector v(rho.size());
    int k = 0;
    for (double x : rho) v[k++] = x;
    return make_density(f, v);
}

double oracle_mass(const TruncatedDensity& d, const Box& cell) {
    auto f = [&](double q1, double q2) { return pdf(d, ParamPoint{q1, q2}); };
    if (d.support.dim == 1)
        return oracles::integrate([&](double q) { return f(q, 0.0); }, cell.lo[0], cell.hi[0]);
    return oracles::integrate2d(f, cell.lo[0], cell.hi[0], cell.lo[1], cell.hi[1]);
}

double oracle_first(const TruncatedDensity& d, const Box& cell, int axis) {
    auto f = [&](double q1, double q2) {
        return (axis == 0 ? q1 : q2) * pdf(d, ParamPoint{q1, q2});
    };
    if (d.support.dim == 1)
        return oracles::integrate([&](double q) { return f(q, 0.0); }, cell.lo[0], cell.hi[0]);
    return oracles::integrate2d(f, cell.lo[0], cell.hi[0], cell.lo[1], cell.hi[1]);
}

// Random feasible densities for the property sweeps.
TruncatedDensity random_density(Family f, Rng& rng) {
    switch (f) {
        case Family::Uniform: {
            const double a = rng.uniform(0.3, 4.0);
            return density_from(f, {a, a + rng.uniform(0.5, 4.0)});
        }
        case Family::Exponential:
            return density_from(f, {rng.uniform(2.0, 10.0), rng.uniform(0.1, 2.0)});
        case Family::Normal: {
            const double a = rng.uniform(0.3, 3.0);
            const double b = a + rng.uniform(1.0, 5.0);
            return density_from(f, {a, b, rng.uniform(a - 1.0, b + 1.0), rng.uniform(0.2, 2.0)});
        }
        case Family::BivariateNormal: {
            const double a = rng.uniform(0.3, 3.0);
            const double b = a + rng.uniform(2.0, 8.0);
            const double c = rng.uniform(0.3, 3.0);
            const double d = c + rng.uniform(2.0, 8.0);
            return density_from(f, {a, b, c, d, rng.uniform(a, b), rng.uniform(c, d),
                                    rng.uniform(0.8, 3.0), rng.uniform(-1.0, 1.0),
                                    rng.uniform(0.8, 3.0)});
        }
    }
    throw std::logic_error("unreachable");
}

} // namespace

TEST_CASE("pdf of a uniform density") {
    const auto d = density_from(Family::Uniform, {2.0, 4.0});
    CHECK(pdf(d, {3.0, 0.0}) == doctest::Approx(0.5));
    CHECK(pdf(d, {5.0, 0.0}) == 0.0);
}

TEST_CASE("pdf of an upper-truncated normal matches the quadrature oracle") {
    const auto d = density_from(Family::Normal, {2.0, 4.0, 4.0, 0.25});
    // Phi_D = 1/2 by symmetry of truncation at the mean (lower tail negligible).
    const double phi_at_4 = 1.0 / (0.25 * std::sqrt(2.0 * M_PI));
    auto gauss = [&](double q) {
        return std::exp(-0.5 * std::pow((q - 4.0) / 0.25, 2)) / (0.25 * std::sqrt(2.0 * M_PI));
    };
    const double norm = oracles::integrate(gauss, 2.0, 4.0);
    CHECK(pdf(d, {4.0, 0.0}) == doctest::Approx(phi_at_4 / norm).epsilon(1e-10));
    CHECK(pdf(d, {4.0, 0.0}) == doctest::Approx(3.19154).epsilon(1e-4));
}

TEST_CASE("cell mass: closed forms and quadrature oracle") {
    const auto uni = density_from(Family::Uniform, {2.0, 4.0});
    CHECK(cell_mass(uni, Box::interval(2.0, 4.0)) == doctest::Approx(1.0));
    CHECK(cell_mass(uni, Box::interval(2.0, 3.0)) == doctest::Approx(0.5));

    const auto expo = density_from(Family::Exponential, {3.61, 1.0 / 3.0});
    CHECK(cell_mass(expo, Box::interval(0.0, 3.61)) == doctest::Approx(1.0).epsilon(1e-12));
    const double expect =
        (1.0 - std::exp(-1.0 / 3.0)) / (1.0 - std::exp(-3.61 / 3.0));
    CHECK(cell_mass(expo, Box::interval(0.0, 1.0)) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(cell_mass(expo, Box::interval(0.0, 1.0)) ==
          doctest::Approx(oracle_mass(expo, Box::interval(0.0, 1.0))).epsilon(1e-10));

    CHECK_THROWS_AS(cell_mass(uni, Box::interval(1.0, 3.0)), std::domain_error);
}

TEST_CASE("cell first moment: closed forms") {
    const auto uni = density_from(Family::Uniform, {2.0, 4.0});
    CHECK(cell_first_moment(uni, Box::interval(2.0, 4.0), 0) == doctest::Approx(3.0));
    CHECK(cell_first_moment(uni, Box::interval(2.0, 3.0), 0) == doctest::Approx(1.25));

    const auto nrm = density_from(Family::Normal, {2.14, 5.42, 4.0, 0.25});
    // Truncation is beyond 5 sigma on both sides: the moment equals mu.
    CHECK(cell_first_moment(nrm, Box::interval(2.14, 5.42), 0) ==
          doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("uniform full-cell partials have the closed-form values") {
    const auto d = density_from(Family::Uniform, {2.0, 4.0});
    const auto cm = cell_moments_with_partials(d, Box::interval(2.0, 4.0));
    // Mass stays 1 whatever the bounds do; the mean is (a+b)/2.
    CHECK(cm.d_mass[0] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(cm.d_mass[1] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(cm.d_first(0, 0) == doctest::Approx(0.5));
    CHECK(cm.d_first(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("normal full-cell mu-partial matches finite differences") {
    const Vector rho = (Vector(4) << 2.0, 4.0, 4.0, 0.25).finished();
    const auto d = make_density(Family::Normal, rho);
    const auto cm = cell_moments_with_partials(d, d.support);
    const double fd = oracles::central_diff(
        [&](double mu) {
            Vector r = rho;
            r[2] = mu;
            const auto dd = make_density(Family::Normal, r);
            return cell_first_moment(dd, dd.support, 0);
        },
        4.0, 1e-6);
    CHECK(cm.d_first(0, 2) == doctest::Approx(fd).epsilon(1e-5));
}

TEST_CASE("analytic partials agree with finite differences across families") {
    // Cells that move with the support (full cell) and fixed interior cells.
    Rng rng(2024);
    for (const Family f : {Family::Uniform, Family::Exponential, Family::Normal,
                           Family::BivariateNormal}) {
        for (int rep = 0; rep < 20; ++rep) {
            const TruncatedDensity d = random_density(f, rng);
            const Vector rho = pack_rho(d);
            const int nr = rho_dim(f);
            const int p = param_dim(f);

            // Interior cell at fixed absolute coordinates.
            Box cell = d.support;
            for (int ax = 0; ax < p; ++ax) {
                const double w = d.support.width(ax);
                cell.lo[ax] = d.support.lo[ax] + 0.25 * w;
                cell.hi[ax] = d.support.hi[ax] - 0.35 * w;
            }
            const auto cm = cell_moments_with_partials(d, cell);
            for (int k = 0; k < nr; ++k) {
                const double h = 1e-6 * std::max(1.0, std::abs(rho[k]));
                auto feval = [&](double x, bool mass, int axis) {
                    Vector r = rho;
                    r[k] = x;
                    const auto dd = make_density(f, r);
                    if (!dd.support.contains(cell)) return std::nan("");
                    return mass ? cell_mass(dd, cell) : cell_first_moment(dd, cell, axis);
                };
                // The FD oracle's own cancellation noise is ~eps/h = 1e-10, so
                // partials below 1e-6 are compared absolutely at that level.
                const double fd_mass =
                    oracles::central_diff([&](double x) { return feval(x, true, 0); }, rho[k], h);
                if (std::isfinite(fd_mass)) {
                    const double scale =
                        std::max({std::abs(cm.d_mass[k]), std::abs(fd_mass), 1e-6});
                    CHECK(std::abs(cm.d_mass[k] - fd_mass) / scale < 1e-4);
                }
                for (int ax = 0; ax < p; ++ax) {
                    const double fd_first = oracles::central_diff(
                        [&](double x) { return feval(x, false, ax); }, rho[k], h);
                    if (!std::isfinite(fd_first)) continue;
                    const double scale =
                        std::max({std::abs(cm.d_first(ax, k)), std::abs(fd_first), 1e-6});
                    CHECK(std::abs(cm.d_first(ax, k) - fd_first) / scale < 1e-4);
                }
            }
        }
    }
}

TEST_CASE("partition masses sum to one for every family") {
    Rng rng(99);
    for (const Family f : {Family::Uniform, Family::Exponential, Family::Normal,
                           Family::BivariateNormal}) {
        for (int rep = 0; rep < 5; ++rep) {
            const TruncatedDensity d = random_density(f, rng);
            const DensityWorkspace ws = make_workspace(d);
            const int p = param_dim(f);
            const int m1 = 3 + rep, m2 = 2 + rep;
            double total = 0.0;
            auto edge = [&](int axis, int j, int m) {
                return d.support.lo[axis] + d.support.width(axis) * j / m;
            };
            if (p == 1) {
                for (int j = 0; j < m1; ++j)
                    total += cell_mass(d, ws, Box::interval(edge(0, j, m1), edge(0, j + 1, m1)));
            } else {
                for (int j1 = 0; j1 < m1; ++j1)
                    for (int j2 = 0; j2 < m2; ++j2)
                        total += cell_mass(d, ws,
                                           Box::rect(edge(0, j1, m1), edge(0, j1 + 1, m1),
                                                     edge(1, j2, m2), edge(1, j2 + 1, m2)));
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
        }
    }
}

TEST_CASE("cell means stay inside the cell and the pdf is positive on the support") {
    Rng rng(7);
    for (const Family f : {Family::Uniform, Family::Exponential, Family::Normal,
                           Family::BivariateNormal}) {
        const TruncatedDensity d = random_density(f, rng);
        const int p = param_dim(f);
        Box cell = d.support;
        for (int ax = 0; ax < p; ++ax) cell.hi[ax] = cell.lo[ax] + 0.4 * d.support.width(ax);
        const double mass = cell_mass(d, cell);
        CHECK(mass >= 0.0);
        for (int ax = 0; ax < p; ++ax) {
            const double mean = cell_first_moment(d, cell, ax) / mass;
            CHECK(mean >= cell.lo[ax]);
            CHECK(mean <= cell.hi[ax]);
        }
        // Assumption (iv): f bounded away from 0 and infinity on D, checked at
        // the corners and the center.
        for (int corner = 0; corner < (1 << p); ++corner) {
            ParamPoint q{0, 0};
            for (int ax = 0; ax < p; ++ax)
                q[ax] = (corner >> ax) & 1 ? d.support.hi[ax] : d.support.lo[ax];
            const double v = pdf(d, q);
            CHECK(v > 0.0);
            CHECK(std::isfinite(v));
        }
    }
}

TEST_CASE("pack/unpack round-trips exactly") {
    Rng rng(5150);
    for (const Family f : {Family::Uniform, Family::Exponential, Family::Normal,
                           Family::BivariateNormal}) {
        for (int rep = 0; rep < 10; ++rep) {
            const TruncatedDensity d = random_density(f, rng);
            const Vector rho = pack_rho(d);
            const Vector back = pack_rho(make_density(f, rho));
            CHECK(back == rho); // exact, not approximate
        }
    }
}

TEST_CASE("sampling: law of large numbers and determinism") {
    const auto uni = density_from(Family::Uniform, {2.0, 4.0});
    const auto draws = sample(uni, 100000, 42);
    double mean = 0.0, var = 0.0;
    for (const auto& q : draws) mean += q[0];
    mean /= draws.size();
    for (const auto& q : draws) var += (q[0] - mean) * (q[0] - mean);
    var /= draws.size() - 1;
    CHECK(std::abs(mean - 3.0) < 3.0 * std::sqrt(var / draws.size()));

    const auto again = sample(uni, 100000, 42);
    CHECK(draws == again);
}

TEST_CASE("bivariate sampling reproduces the target covariance") {
    // mu = [12, 10], Sigma = [[9, 3], [3, 5]] => L = [[3, 1], [0, 2]].
    const auto d = density_from(Family::BivariateNormal,
                                {-6.0, 30.0, -4.0, 24.0, 12.0, 10.0, 3.0, 1.0, 2.0});
    const auto draws = sample(d, 200000, 7);
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& q : draws) mean += Eigen::Vector2d(q[0], q[1]);
    mean /= draws.size();
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const auto& q : draws) {
        const Eigen::Vector2d r = Eigen::Vector2d(q[0], q[1]) - mean;
        cov += r * r.transpose();
    }
    cov /= draws.size() - 1;
    CHECK(cov(0, 0) == doctest::Approx(9.0).epsilon(0.05));
    CHECK(cov(1, 1) == doctest::Approx(5.0).epsilon(0.05));
    CHECK(cov(0, 1) == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("sampling a far-tail truncation is rejected as infeasible") {
    const auto d = density_from(Family::Normal, {10.0, 11.0, 4.0, 0.25});
    CHECK_THROWS_AS(sample(d, 10, 1), SamplingInfeasible);
}

TEST_CASE("density invariants are enforced") {
    CHECK_THROWS_AS(density_from(Family::Uniform, {2.0, 2.0}), std::domain_error);
    CHECK_THROWS_AS(density_from(Family::Normal, {2.0, 4.0, 3.0, -0.1}), std::domain_error);
    CHECK_THROWS_AS(density_from(Family::Exponential, {3.0, 0.0}), std::domain_error);
    CHECK_THROWS_AS(
        density_from(Family::BivariateNormal, {0, 1, 0, 1, 0.5, 0.5, -1.0, 0.0, 1.0}),
        std::domain_error);
}

TEST_CASE("rho bounds projection restores feasibility") {
    RhoBounds b = default_bounds(Family::Uniform);
    Vector bad(2);
    bad << 5.0, 3.0; // violates a <= b - eps
    const Vector fixed = b.project(bad);
    CHECK(b.contains(fixed, 1e-12));
    CHECK(fixed[0] + b.eps_width <= fixed[1] + 1e-15);

    Vector outside(2);
    outside << -1.0, 100.0;
    CHECK(b.contains(b.project(outside), 1e-12));
}
