#pragma once

#include "popest/types.hpp"

#include <optional>
#include <string>

namespace popest {

/// Boundary-condition variants of the 1D diffusion model on [0,1] with flux
/// input at eta = 1 and point output at eta0.
enum class BcVariant { DirichletNeumann, RobinNeumann };

std::string bc_name(BcVariant bc);
BcVariant bc_from_name(const std::string& name);

struct ModelSpec {
    BcVariant bc = BcVariant::DirichletNeumann;
    double eta0 = 1.0 / 3.0;
    double tau = 0.1;
    double horizon = 20.0;

    /// Number of sampling steps (horizon / tau). Throws if the horizon is not
    /// an integer multiple of tau.
    int steps() const;
};

void validate_model(const ModelSpec& spec);

/// Non-fatal configuration issues (e.g. output at a Dirichlet boundary).
std::optional<std::string> model_warning(const ModelSpec& spec);

/// Uniform mesh {0, 1/n, ..., 1}; DirichletNeumann eliminates node 0.
struct SpatialMesh {
    int n = 2;
    BcVariant bc = BcVariant::DirichletNeumann;

    double h() const { return 1.0 / n; }
    int dofs() const { return bc == BcVariant::DirichletNeumann ? n : n + 1; }
    /// Mesh node (0..n) carrying the given dof.
    int node_of_dof(int dof) const { return bc == BcVariant::DirichletNeumann ? dof + 1 : dof; }
    /// Dof index of a mesh node, or -1 when eliminated.
    int dof_of_node(int node) const {
        if (bc == BcVariant::DirichletNeumann) return node == 0 ? -1 : node - 1;
        return node;
    }
};

/// Hat-function overlap integrals ∫ phi_i phi_k; tridiagonal SPD.
Matrix spatial_mass(const SpatialMesh& mesh);

/// Stiffness split into the q-weighted diffusion part ∫ phi' psi' and the
/// q-independent Robin boundary term phi(0) psi(0) (zero for Dirichlet).
struct StiffnessParts {
    Matrix diff;
    Matrix bdry;
};
StiffnessParts spatial_stiffness(const SpatialMesh& mesh);

/// The weak-form input functional psi(1): one unit entry at the eta = 1 node.
Vector spatial_input_vector(const SpatialMesh& mesh);

/// Basis evaluation at eta0 (linear interpolation weights); zero vector when
/// eta0 sits on an eliminated Dirichlet node.
Vector spatial_output_vector(const SpatialMesh& mesh, double eta0);

/// Convenience bundle of all spatial factors for a mesh.
struct SpatialOperators {
    Matrix mass;
    Matrix k_diff;
    Matrix k_bdry;
    Vector input;
    Vector output;
};
SpatialOperators spatial_operators(const SpatialMesh& mesh, double eta0);

} // namespace popest
