#pragma once

#include "popest/types.hpp"

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace popest {

enum class Family { Uniform, Exponential, Normal, BivariateNormal };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

/// Dimension p of the parameter space (1 or 2).
int param_dim(Family f);

/// Length of the flat parameter vector rho for the family.
///   Uniform:          (a, b)
///   Exponential:      (R, theta)            support is [0, R]
///   Normal:           (a, b, mu, sigma)
///   BivariateNormal:  (a, b, c, d, mu1, mu2, L11, L12, L22)   Sigma = L^T L
int rho_dim(Family f);

std::vector<std::string> rho_labels(Family f);

/// Index into rho of the support bound on `axis` (side 0 = lower, 1 = upper),
/// or -1 when that bound is fixed (the exponential lower bound is pinned at 0).
int support_bound_rho_index(Family f, int axis, int side);

/// Exponential-family density restricted to a box and renormalized.
struct TruncatedDensity {
    Family family = Family::Uniform;
    Box support;

    // Shape parameters; which fields are meaningful depends on the family.
    double rate = 1.0;                            // Exponential
    double mu = 0.0;                              // Normal
    double sigma = 1.0;                           // Normal
    Eigen::Vector2d mu2 = Eigen::Vector2d::Zero();// BivariateNormal location
    Eigen::Matrix2d chol = Eigen::Matrix2d::Identity(); // upper-triangular L

    Eigen::Matrix2d covariance() const { return chol.transpose() * chol; }
};

Vector pack_rho(const TruncatedDensity& d);
TruncatedDensity make_density(Family f, const Vector& rho, double eps_width = 1e-6);

/// Throws std::domain_error when a structural invariant fails (support width,
/// positive shape parameters, positive normalizer).
void validate_density(const TruncatedDensity& d, double eps_width = 1e-6);

/// Box constraints plus pairwise ordering constraints rho[i] + eps_width <= rho[j]
/// describing the feasible set for a family's rho vector.
struct RhoBounds {
    Vector lower;
    Vector upper;
    std::vector<std::pair<int, int>> orderings;
    double eps_width = 1e-6;

    bool contains(const Vector& rho, double slack = 0.0) const;
    Vector project(const Vector& rho) const;
    void validate() const;
};

RhoBounds default_bounds(Family f);

/// Per-density cache of the normalizer Phi_D and its total rho-partials;
/// computing it once per iterate keeps repeated cell queries cheap.
struct DensityWorkspace {
    double z = 0.0; // normalizer Phi_D(theta)
    Vector dz;      // d z / d rho_k (shape dependence plus moving support bounds)
};

DensityWorkspace make_workspace(const TruncatedDensity& d);

double pdf(const TruncatedDensity& d, const ParamPoint& q);

double cell_mass(const TruncatedDensity& d, const DensityWorkspace& ws, const Box& cell);
double cell_mass(const TruncatedDensity& d, const Box& cell);

double cell_first_moment(const TruncatedDensity& d, const DensityWorkspace& ws, const Box& cell,
                         int axis);
double cell_first_moment(const TruncatedDensity& d, const Box& cell, int axis);

/// Sensitivity of a cell's endpoints to the rho entries. Row `axis`, column k
/// holds d lo[axis] / d rho_k (resp. hi). Assembly supplies the affine
/// partition geometry; the default treats an endpoint as moving only when it
/// coincides with the corresponding support bound.
struct CellGeometryJacobian {
    Matrix d_lo; // p x rho_dim
    Matrix d_hi; // p x rho_dim
};

CellGeometryJacobian bound_coincident_jacobian(const TruncatedDensity& d, const Box& cell);

struct CellMoments {
    double mass = 0.0;                 // f1 = ∫_cell f
    std::array<double, 2> first{0, 0}; // f2 per axis = ∫_cell q_axis f
    Vector d_mass;                     // d f1 / d rho
    Matrix d_first;                    // p x rho_dim, d f2[axis] / d rho
};

CellMoments cell_moments_with_partials(const TruncatedDensity& d, const DensityWorkspace& ws,
                                       const Box& cell, const CellGeometryJacobian& geo);
CellMoments cell_moments_with_partials(const TruncatedDensity& d, const Box& cell);

struct SamplingInfeasible : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// I.i.d. draws from the truncated density; inverse-CDF for uniform and
/// exponential, rejection from the untruncated family otherwise. Throws
/// SamplingInfeasible when the acceptance probability is below 1e-6.
std::vector<ParamPoint> sample(const TruncatedDensity& d, int count, std::uint64_t seed);

} // namespace popest
