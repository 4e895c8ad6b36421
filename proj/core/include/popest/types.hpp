#pragma once

#include <Eigen/Dense>

#include <array>
#include <cassert>
#include <cstdint>

namespace popest {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Axis-aligned box in parameter space, dim = 1 or 2.
struct Box {
    int dim = 1;
    std::array<double, 2> lo{0.0, 0.0};
    std::array<double, 2> hi{0.0, 0.0};

    static Box interval(double a, double b) { return Box{1, {a, 0.0}, {b, 0.0}}; }
    static Box rect(double a, double b, double c, double d) { return Box{2, {a, c}, {b, d}}; }

    double width(int axis) const { return hi[axis] - lo[axis]; }

    bool contains(const Box& other, double tol = 0.0) const {
        if (other.dim != dim) return false;
        for (int k = 0; k < dim; ++k) {
            if (other.lo[k] < lo[k] - tol || other.hi[k] > hi[k] + tol) return false;
        }
        return true;
    }

    bool contains_point(const std::array<double, 2>& q) const {
        for (int k = 0; k < dim; ++k) {
            if (q[k] < lo[k] || q[k] > hi[k]) return false;
        }
        return true;
    }
};

/// A point in parameter space (only the first `dim` coordinates are meaningful).
using ParamPoint = std::array<double, 2>;

} // namespace popest
