#include "popest/fem1d.hpp"

#include <cmath>
#include <stdexcept>

namespace popest {

std::string bc_name(BcVariant bc) {
    return bc == BcVariant::DirichletNeumann ? "dirichlet_neumann" : "robin_neumann";
}

BcVariant bc_from_name(const std::string& name) {
    if (name == "dirichlet_neumann") return BcVariant::DirichletNeumann;
    if (name == "robin_neumann") return BcVariant::RobinNeumann;
    throw std::invalid_argument("unknown boundary-condition variant: " + name);
}

int ModelSpec::steps() const {
    const double ratio = horizon / tau;
    const long long k = std::llround(ratio);
    if (k < 1 || std::abs(ratio - static_cast<double>(k)) > 1e-9 * std::max(1.0, ratio))
        throw std::invalid_argument("horizon must be a positive integer multiple of tau");
    return static_cast<int>(k);
}

void validate_model(const ModelSpec& spec) {
    if (!(spec.eta0 >= 0.0 && spec.eta0 <= 1.0))
        throw std::invalid_argument("eta0 must lie in [0,1]");
    if (!(spec.tau > 0.0)) throw std::invalid_argument("tau must be positive");
    (void)spec.steps();
}

std::optional<std::string> model_warning(const ModelSpec& spec) {
    if (spec.bc == BcVariant::DirichletNeumann && spec.eta0 == 0.0)
        return "eta0 = 0 with a Dirichlet boundary: the output is identically zero";
    return std::nullopt;
}

Matrix spatial_mass(const SpatialMesh& mesh) {
    const int nd = mesh.dofs();
    const double h = mesh.h();
    Matrix m = Matrix::Zero(nd, nd);
    for (int i = 0; i < nd; ++i) {
        const int node = mesh.node_of_dof(i);
        const bool boundary = node == 0 || node == mesh.n;
        m(i, i) = boundary ? h / 3.0 : 2.0 * h / 3.0;
        if (i + 1 < nd) {
            m(i, i + 1) = h / 6.0;
            m(i + 1, i) = h / 6.0;
        }
    }
    return m;
}

StiffnessParts spatial_stiffness(const SpatialMesh& mesh) {
    const int nd = mesh.dofs();
    const double h = mesh.h();
    StiffnessParts parts;
    parts.diff = Matrix::Zero(nd, nd);
    parts.bdry = Matrix::Zero(nd, nd);
    for (int i = 0; i < nd; ++i) {
        const int node = mesh.node_of_dof(i);
        const bool boundary = node == 0 || node == mesh.n;
        parts.diff(i, i) = boundary ? 1.0 / h : 2.0 / h;
        if (i + 1 < nd) {
            parts.diff(i, i + 1) = -1.0 / h;
            parts.diff(i + 1, i) = -1.0 / h;
        }
    }
    if (mesh.bc == BcVariant::RobinNeumann) parts.bdry(0, 0) = 1.0; // phi(0) psi(0)
    return parts;
}

Vector spatial_input_vector(const SpatialMesh& mesh) {
    Vector b = Vector::Zero(mesh.dofs());
    b[mesh.dof_of_node(mesh.n)] = 1.0;
    return b;
}

Vector spatial_output_vector(const SpatialMesh& mesh, double eta0) {
    if (!(eta0 >= 0.0 && eta0 <= 1.0))
        throw std::invalid_argument("eta0 must lie in [0,1]");
    Vector c = Vector::Zero(mesh.dofs());
    const int elem = std::min(static_cast<int>(eta0 * mesh.n), mesh.n - 1);
    const double t = eta0 * mesh.n - elem;
    const int left = mesh.dof_of_node(elem);
    const int right = mesh.dof_of_node(elem + 1);
    if (left >= 0) c[left] += 1.0 - t;
    if (right >= 0) c[right] += t;
    return c;
}

SpatialOperators spatial_operators(const SpatialMesh& mesh, double eta0) {
    SpatialOperators ops;
    ops.mass = spatial_mass(mesh);
    auto parts = spatial_stiffness(mesh);
    ops.k_diff = std::move(parts.diff);
    ops.k_bdry = std::move(parts.bdry);
    ops.input = spatial_input_vector(mesh);
    ops.output = spatial_output_vector(mesh, eta0);
    return ops;
}

} // namespace popest
