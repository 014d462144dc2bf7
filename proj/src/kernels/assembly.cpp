#include "pihedge/kernels/assembly.hpp"

#include <stdexcept>
#include <vector>

namespace pihedge::kernels {

namespace {

void check(std::span<const SparseRow> rows, std::span<const double> weights, std::span<const double> targets) {
    if (targets.size() != rows.size() || (!weights.empty() && weights.size() != rows.size()))
        throw std::invalid_argument("assembly inputs differ in length");
}

inline void accumulate(const SparseRow& row, double w, double y, std::size_t count, Eigen::MatrixXd& lhs,
                       Eigen::VectorXd& rhs) {
    for (std::size_t a = 0; a < 4; ++a) {
        const std::size_t n = row.first + a;
        if (n >= count) break;
        const double va = row.values[a];
        rhs[static_cast<Eigen::Index>(n)] += y * va;
        const double wa = w * va;
        for (std::size_t b = 0; b < 4; ++b) {
            const std::size_t m = row.first + b;
            if (m >= count) break;
            lhs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) += wa * row.values[b];
        }
    }
}

}  // namespace

NormalEquations assemble(std::span<const SparseRow> rows, std::span<const double> weights,
                         std::span<const double> targets, std::size_t count) {
    check(rows, weights, targets);
    const auto B = static_cast<Eigen::Index>(count);
    const std::size_t blocks = (rows.size() + kBlock - 1) / kBlock;
    std::vector<NormalEquations> partial(blocks);

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(blocks); ++k) {
        auto& part = partial[static_cast<std::size_t>(k)];
        part.lhs = Eigen::MatrixXd::Zero(B, B);
        part.rhs = Eigen::VectorXd::Zero(B);
        const std::size_t begin = static_cast<std::size_t>(k) * kBlock;
        const std::size_t end = std::min(rows.size(), begin + kBlock);
        for (std::size_t u = begin; u < end; ++u)
            accumulate(rows[u], weights.empty() ? 1.0 : weights[u], targets[u], count, part.lhs, part.rhs);
    }

    NormalEquations out{Eigen::MatrixXd::Zero(B, B), Eigen::VectorXd::Zero(B)};
    for (const auto& part : partial) {
        out.lhs += part.lhs;
        out.rhs += part.rhs;
    }
    return out;
}

namespace serial {

NormalEquations assemble(std::span<const SparseRow> rows, std::span<const double> weights,
                         std::span<const double> targets, std::size_t count) {
    check(rows, weights, targets);
    const auto B = static_cast<Eigen::Index>(count);
    NormalEquations out{Eigen::MatrixXd::Zero(B, B), Eigen::VectorXd::Zero(B)};
    for (std::size_t u = 0; u < rows.size(); ++u)
        accumulate(rows[u], weights.empty() ? 1.0 : weights[u], targets[u], count, out.lhs, out.rhs);
    return out;
}

}  // namespace serial

}  // namespace pihedge::kernels
