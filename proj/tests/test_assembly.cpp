#include "popest/assembly.hpp"

#include "popest/rng.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

using namespace popest;

namespace {

ModelSpec dirichlet_model() {
    ModelSpec m;
    m.bc = BcVariant::DirichletNeumann;
    m.eta0 = 1.0 / 3.0;
    return m;
}

ModelSpec robin_model() {
    ModelSpec m;
    m.bc = BcVariant::RobinNeumann;
    m.eta0 = 0.0;
    return m;
}

TruncatedDensity uniform24() {
    return make_density(Family::Uniform, (Vector(2) << 2.0, 4.0).finished());
}

} // namespace

TEST_CASE("single-cell averaging reduces to the deterministic system at E[q]") {
    const auto sys = assemble(dirichlet_model(), {4, {1, 1}}, uniform24());
    REQUIRE(sys.block_count() == 1);
    CHECK(sys.weights[0].mass == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(sys.weights[0].k_diff == doctest::Approx(3.0).epsilon(1e-15)); // E[q] on [2,4]
    CHECK((sys.mass_block(0) - sys.ops.mass).norm() == 0.0);
    CHECK((sys.stiffness_block(0) - 3.0 * sys.ops.k_diff).norm() < 1e-14);
}

TEST_CASE("two uniform cells carry the closed-form moments") {
    const auto sys = assemble(dirichlet_model(), {4, {2, 1}}, uniform24());
    REQUIRE(sys.block_count() == 2);
    CHECK(sys.weights[0].mass == doctest::Approx(0.5));
    CHECK(sys.weights[1].mass == doctest::Approx(0.5));
    CHECK(sys.weights[0].k_diff == doctest::Approx(1.25));
    CHECK(sys.weights[1].k_diff == doctest::Approx(1.75));
}

TEST_CASE("blocked assembly equals the dense brute-force assembly") {
    struct Case {
        ModelSpec model;
        Family family;
        Vector rho;
        double tol;
    };
    std::vector<Case> cases;
    cases.push_back({dirichlet_model(), Family::Uniform, (Vector(2) << 2.0, 4.0).finished(),
                     1e-14});
    cases.push_back({dirichlet_model(), Family::Normal,
                     (Vector(4) << 2.0, 4.5, 3.2, 0.6).finished(), 1e-10});
    cases.push_back({robin_model(), Family::BivariateNormal,
                     (Vector(9) << 1.0, 8.0, 1.0, 6.0, 4.0, 3.0, 1.5, 0.4, 1.2).finished(),
                     1e-9});
    for (const auto& tc : cases) {
        const auto density = make_density(tc.family, tc.rho);
        const DiscretizationLevel level{4, {4, 3}};
        const auto sys = assemble(tc.model, level, density);
        const auto dense = oracles::dense_assemble(tc.model, level, density);
        const int nd = sys.block_dim();
        for (int c = 0; c < sys.block_count(); ++c) {
            const Matrix mass = sys.mass_block(c);
            const Matrix stiff = sys.stiffness_block(c);
            const Vector input = sys.input_block(c);
            const RowVector output = sys.output_block(c);
            CHECK((mass - dense.mass.block(c * nd, c * nd, nd, nd)).cwiseAbs().maxCoeff() <
                  tc.tol);
            CHECK((stiff - dense.stiffness.block(c * nd, c * nd, nd, nd)).cwiseAbs().maxCoeff() <
                  tc.tol);
            CHECK((input - dense.input.segment(c * nd, nd)).cwiseAbs().maxCoeff() < tc.tol);
            CHECK((output - dense.output.segment(c * nd, nd)).cwiseAbs().maxCoeff() < tc.tol);
        }
        // Off-diagonal blocks of the dense assembly vanish (cells decouple).
        for (int c = 0; c < sys.block_count(); ++c) {
            for (int l = 0; l < sys.block_count(); ++l) {
                if (c == l) continue;
                CHECK(dense.mass.block(c * nd, l * nd, nd, nd).isZero(0.0));
            }
        }
    }
}

TEST_CASE("uniform single-cell bound partial has the closed form") {
    const auto sys = assemble(dirichlet_model(), {4, {1, 1}}, uniform24());
    const auto partials = assemble_partials(sys);
    REQUIRE(partials.rho_entries() == 2); // dimension contract: only (a, b)
    CHECK(partials.d[0][0].k_diff == doctest::Approx(0.5)); // d E[q] / d a
    CHECK(partials.d[1][0].k_diff == doctest::Approx(0.5));
    CHECK(partials.d[0][0].mass == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("assembly partials match directional finite differences") {
    struct Case {
        ModelSpec model;
        Family family;
        Vector rho;
    };
    std::vector<Case> cases;
    cases.push_back({dirichlet_model(), Family::Uniform, (Vector(2) << 2.0, 4.0).finished()});
    cases.push_back({dirichlet_model(), Family::Exponential,
                     (Vector(2) << 5.0, 0.6).finished()});
    cases.push_back({dirichlet_model(), Family::Normal,
                     (Vector(4) << 2.0, 4.5, 3.2, 0.6).finished()});
    cases.push_back({robin_model(), Family::BivariateNormal,
                     (Vector(9) << 1.0, 8.0, 1.0, 6.0, 4.0, 3.0, 1.5, 0.4, 1.2).finished()});
    Rng rng(31);
    for (const auto& tc : cases) {
        const DiscretizationLevel level{4, {3, 2}};
        const auto density = make_density(tc.family, tc.rho);
        const auto sys = assemble(tc.model, level, density);
        const auto partials = assemble_partials(sys);

        Vector dir(tc.rho.size());
        for (Eigen::Index k = 0; k < dir.size(); ++k) dir[k] = rng.uniform(-1.0, 1.0);
        dir /= dir.norm();
        const double h = 1e-6;
        const auto plus = assemble(tc.model, level, make_density(tc.family, tc.rho + h * dir));
        const auto minus = assemble(tc.model, level, make_density(tc.family, tc.rho - h * dir));
        for (int c = 0; c < sys.block_count(); ++c) {
            CellWeights dw{0, 0, 0};
            for (Eigen::Index k = 0; k < dir.size(); ++k) {
                dw.mass += partials.d[k][c].mass * dir[k];
                dw.k_diff += partials.d[k][c].k_diff * dir[k];
                dw.input += partials.d[k][c].input * dir[k];
            }
            const double fd_mass = (plus.weights[c].mass - minus.weights[c].mass) / (2 * h);
            const double fd_k = (plus.weights[c].k_diff - minus.weights[c].k_diff) / (2 * h);
            const double fd_in = (plus.weights[c].input - minus.weights[c].input) / (2 * h);
            CHECK(std::abs(dw.mass - fd_mass) / std::max({std::abs(fd_mass), 1e-6}) < 1e-5);
            CHECK(std::abs(dw.k_diff - fd_k) / std::max({std::abs(fd_k), 1e-6}) < 1e-5);
            CHECK(std::abs(dw.input - fd_in) / std::max({std::abs(fd_in), 1e-6}) < 1e-5);
        }
    }
}

TEST_CASE("weighted-sum identity: output weights add up to the plain functional") {
    const auto sys = assemble(dirichlet_model(), {8, {16, 1}},
                              make_density(Family::Normal,
                                           (Vector(4) << 2.0, 5.0, 3.5, 0.5).finished()));
    Rng rng(17);
    Vector v(sys.block_dim());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
    double weighted = 0.0;
    for (int c = 0; c < sys.block_count(); ++c) weighted += sys.output_block(c).dot(v);
    CHECK(weighted == doctest::Approx(sys.ops.output.dot(v)).epsilon(1e-10));
}

TEST_CASE("near-zero-mass cells are retained with exact-zero weights") {
    // theta R = 800 pushes the far tail under the 1e-300 floor.
    const auto d = make_density(Family::Exponential, (Vector(2) << 400.0, 2.0).finished());
    const auto sys = assemble(dirichlet_model(), {2, {20, 1}}, d);
    CHECK(sys.block_count() == 20); // stable shape
    bool any_degenerate = false;
    for (int c = 0; c < sys.block_count(); ++c) {
        if (sys.degenerate[c]) {
            any_degenerate = true;
            CHECK(sys.weights[c].mass == 0.0);
            CHECK(sys.weights[c].k_diff == 0.0);
            CHECK(sys.weights[c].input == 0.0);
        }
    }
    CHECK(any_degenerate);
    CHECK(!sys.degenerate[0]);
}

TEST_CASE("model/density compatibility is enforced") {
    CHECK_THROWS_AS(assemble(robin_model(), {4, {2, 2}}, uniform24()), std::invalid_argument);
    const auto biv = make_density(
        Family::BivariateNormal,
        (Vector(9) << 1.0, 8.0, 1.0, 6.0, 4.0, 3.0, 1.5, 0.4, 1.2).finished());
    CHECK_THROWS_AS(assemble(dirichlet_model(), {4, {2, 2}}, biv), std::invalid_argument);
    // Negative support would allow a negative diffusivity.
    const auto neg = make_density(Family::Uniform, (Vector(2) << -1.0, 1.0).finished());
    CHECK_THROWS_AS(assemble(dirichlet_model(), {4, {2, 1}}, neg), std::invalid_argument);
}
