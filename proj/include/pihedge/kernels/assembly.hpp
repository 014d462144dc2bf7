#pragma once

#include "pihedge/bspline.hpp"

#include <Eigen/Core>

#include <span>

namespace pihedge::kernels {

// lhs = sum_u w_u psi_u psi_u^T, rhs = sum_u y_u psi_u.
struct NormalEquations {
    Eigen::MatrixXd lhs;
    Eigen::VectorXd rhs;
};

// Paths are summed in fixed blocks of this size; block partials are combined
// in block order, so results do not depend on the thread count.
inline constexpr std::size_t kBlock = 256;

/// `weights` may be empty (all ones).
NormalEquations assemble(std::span<const SparseRow> rows, std::span<const double> weights,
                         std::span<const double> targets, std::size_t count);

namespace serial {
/// Plain left-to-right accumulation; reference for assemble().
NormalEquations assemble(std::span<const SparseRow> rows, std::span<const double> weights,
                         std::span<const double> targets, std::size_t count);
}

}  // namespace pihedge::kernels
