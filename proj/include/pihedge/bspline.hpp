#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace pihedge {

// The (at most) four cubic B-splines that are non-zero at a point.
struct SparseRow {
    std::size_t first = 0;
    std::array<double, 4> values{};

    double dot(const Eigen::VectorXd& coeffs) const {
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k)
            if (first + k < static_cast<std::size_t>(coeffs.size()))
                s += values[k] * coeffs[static_cast<Eigen::Index>(first + k)];
        return s;
    }
};

// Cubic B-spline basis on a clamped uniform knot vector over [lo, hi].
class BasisSet {
public:
    static constexpr std::size_t degree = 3;

    BasisSet(double lo, double hi, std::size_t count);

    std::size_t count() const noexcept { return count_; }
    double lo() const noexcept { return knots_.front(); }
    double hi() const noexcept { return knots_.back(); }
    const std::vector<double>& knots() const noexcept { return knots_; }

    /// All `count` basis values at s; zero outside [lo, hi].
    Eigen::VectorXd evaluate(double s) const;
    SparseRow evaluate_sparse(double s) const;

private:
    std::size_t count_;
    std::vector<double> knots_;
};

/// Basis spanning [min, max] of every state in the matrix, widened by
/// `margin` times the range on each side. Throws DegenerateRange when all
/// states are equal and std::invalid_argument when count < 4.
BasisSet build_basis(const Eigen::MatrixXd& states, std::size_t count, double margin = 0.01);

}  // namespace pihedge
