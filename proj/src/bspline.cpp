#include "pihedge/bspline.hpp"

#include "pihedge/error.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pihedge {

BasisSet::BasisSet(double lo, double hi, std::size_t count) : count_(count) {
    if (count < degree + 1) throw std::invalid_argument("a cubic basis needs at least 4 functions");
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
        throw DegenerateRange("basis range must satisfy lo < hi");
    const std::size_t spans = count - degree;
    knots_.reserve(count + degree + 1);
    for (std::size_t k = 0; k < degree; ++k) knots_.push_back(lo);
    for (std::size_t k = 0; k <= spans; ++k)
        knots_.push_back(k == spans ? hi : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(spans));
    for (std::size_t k = 0; k < degree; ++k) knots_.push_back(hi);
}

SparseRow BasisSet::evaluate_sparse(double s) const {
    SparseRow row;
    if (!(s >= lo() && s <= hi())) return row;
    constexpr std::size_t p = degree;
    // Knot span index with knots_[span] <= s < knots_[span + 1]; the right
    // end point belongs to the last span.
    std::size_t span = count_ - 1;
    if (s < hi()) {
        auto it = std::upper_bound(knots_.begin() + static_cast<std::ptrdiff_t>(p),
                                   knots_.begin() + static_cast<std::ptrdiff_t>(count_ + 1), s);
        span = static_cast<std::size_t>(it - knots_.begin()) - 1;
    }
    // Triangular evaluation of the p+1 non-zero functions.
    std::array<double, p + 1> N{}, left{}, right{};
    N[0] = 1.0;
    for (std::size_t j = 1; j <= p; ++j) {
        left[j] = s - knots_[span + 1 - j];
        right[j] = knots_[span + j] - s;
        double saved = 0.0;
        for (std::size_t r = 0; r < j; ++r) {
            const double temp = N[r] / (right[r + 1] + left[j - r]);
            N[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        N[j] = saved;
    }
    row.first = span - p;
    row.values = N;
    return row;
}

Eigen::VectorXd BasisSet::evaluate(double s) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(count_));
    auto row = evaluate_sparse(s);
    for (std::size_t k = 0; k < 4; ++k)
        if (row.first + k < count_) out[static_cast<Eigen::Index>(row.first + k)] = row.values[k];
    return out;
}

BasisSet build_basis(const Eigen::MatrixXd& states, std::size_t count, double margin) {
    if (count < 4) throw std::invalid_argument("basis count must be at least 4");
    if (states.size() == 0 || !states.allFinite()) throw DegenerateRange("states must be finite and non-empty");
    const double lo = states.minCoeff(), hi = states.maxCoeff();
    if (!(hi > lo)) throw DegenerateRange("all states are equal; cannot place basis knots");
    const double pad = margin * (hi - lo);
    return BasisSet(lo - pad, hi + pad, count);
}

}  // namespace pihedge
