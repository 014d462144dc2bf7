#include "pihedge/paths.hpp"

#include "pihedge/error.hpp"
#include "pihedge/rng.hpp"

#include <cmath>
#include <exception>
#include <random>
#include <stdexcept>

namespace pihedge {

namespace {

void decision_row(const VhmnParams& g, const Quantizer& q, std::size_t slots, std::uint64_t seed, PathMatrix& out,
                  Eigen::Index row, Eigen::Index col0) {
    auto p = sample_path(g, slots, seed);
    for (std::size_t t = 0; t < slots; ++t) out(row, col0 + static_cast<Eigen::Index>(t)) = q.decode(p.O[t]);
}

void gbm_row(double s0, double drift, double vol, std::size_t slots, std::uint64_t seed, PathMatrix& out,
             Eigen::Index row) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    double log_s = std::log(s0);
    out(row, 0) = s0;
    for (std::size_t t = 1; t <= slots; ++t) {
        log_s += drift + vol * normal(rng);
        out(row, static_cast<Eigen::Index>(t)) = std::exp(log_s);
    }
}

void check_gbm(double s0, double sigma_s, double dt) {
    if (!(s0 > 0.0)) throw std::invalid_argument("s0 must be positive");
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (!(sigma_s >= 0.0)) throw std::invalid_argument("sigma_s must be non-negative");
}

void check_decisions(const VhmnParams& g, const Quantizer& q) {
    if (q.bins != g.observed()) throw std::invalid_argument("observation quantizer does not match L");
}

// Predictive mean and variance per observation bin of one segment.
struct SegmentTable {
    std::vector<double> mean, variance, decision;
    std::size_t slots = 0;
    const VhmnParams* params = nullptr;
};

std::vector<SegmentTable> tabulate(std::span<const Segment> segments) {
    std::vector<SegmentTable> tables;
    for (const auto& seg : segments) {
        if (!seg.vhmn || !seg.bdnn) throw std::invalid_argument("segment is missing a model");
        check_decisions(seg.vhmn->params, seg.vhmn->observation);
        SegmentTable tab;
        tab.slots = seg.slots;
        tab.params = &seg.vhmn->params;
        for (std::size_t l = 0; l < seg.vhmn->observation.bins; ++l) {
            const double d = seg.vhmn->observation.decode(l);
            auto p = seg.bdnn->predict(d);
            tab.decision.push_back(d);
            tab.mean.push_back(p.mean);
            tab.variance.push_back(p.variance);
        }
        tables.push_back(std::move(tab));
    }
    return tables;
}

void price_row(std::span<const SegmentTable> tables, double s0, std::uint64_t seed, PriceChangeMode mode,
               SimulatedPaths& out, Eigen::Index row) {
    double s = s0;
    out.prices(row, 0) = s0;
    Eigen::Index col = 0;
    for (std::size_t e = 0; e < tables.size(); ++e) {
        const auto& tab = tables[e];
        auto p = sample_path(*tab.params, tab.slots, stream_seed(seed, e));
        Rng noise_rng(stream_seed(seed, 0x10000 + e));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t t = 0; t < tab.slots; ++t, ++col) {
            const auto l = p.O[t];
            double g = tab.mean[l];
            if (mode == PriceChangeMode::PredictiveSample) g += std::sqrt(tab.variance[l]) * normal(noise_rng);
            if (!(1.0 + g > 0.0)) throw PathExplosion(static_cast<std::size_t>(col));
            s *= 1.0 + g;
            out.decisions(row, col) = tab.decision[l];
            out.prices(row, col + 1) = s;
        }
    }
}

std::size_t total_slots(std::span<const Segment> segments) {
    std::size_t T = 0;
    for (const auto& s : segments) T += s.slots;
    return T;
}

// Runs body(u) for every path in parallel and rethrows the first failure.
template <class Body>
void parallel_paths(std::size_t paths, Body body) {
    std::exception_ptr failure;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t u = 0; u < static_cast<std::ptrdiff_t>(paths); ++u) {
        try {
            body(static_cast<Eigen::Index>(u));
        } catch (...) {
#pragma omp critical(pihedge_paths_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

PathMatrix simulate_decisions(const VhmnParams& g, const Quantizer& q, std::size_t paths, std::size_t slots,
                              std::uint64_t seed) {
    check_decisions(g, q);
    PathMatrix out(static_cast<Eigen::Index>(paths), static_cast<Eigen::Index>(slots));
    parallel_paths(paths, [&](Eigen::Index u) {
        decision_row(g, q, slots, stream_seed(seed, static_cast<std::uint64_t>(u)), out, u, 0);
    });
    return out;
}

std::vector<double> decisions_to_prices(const Bdnn& bdnn, std::span<const double> decisions, double s0,
                                        PriceChangeMode mode, std::uint64_t noise_seed) {
    if (!(s0 > 0.0)) throw std::invalid_argument("s0 must be positive");
    Rng rng(noise_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> prices;
    prices.reserve(decisions.size() + 1);
    prices.push_back(s0);
    for (std::size_t t = 0; t < decisions.size(); ++t) {
        auto p = bdnn.predict(decisions[t]);
        double g = p.mean;
        if (mode == PriceChangeMode::PredictiveSample) g += p.stddev() * normal(rng);
        if (!(1.0 + g > 0.0)) throw PathExplosion(t);
        prices.push_back(prices.back() * (1.0 + g));
    }
    return prices;
}

std::vector<double> remove_drift(std::span<const double> prices, double mu, double sigma_s) {
    const double drift = mu - 0.5 * sigma_s * sigma_s;
    std::vector<double> out(prices.size());
    for (std::size_t t = 0; t < prices.size(); ++t) out[t] = std::log(prices[t]) - drift * static_cast<double>(t);
    return out;
}

std::vector<double> add_drift(std::span<const double> states, double mu, double sigma_s) {
    const double drift = mu - 0.5 * sigma_s * sigma_s;
    std::vector<double> out(states.size());
    for (std::size_t t = 0; t < states.size(); ++t) out[t] = std::exp(states[t] + drift * static_cast<double>(t));
    return out;
}

PathMatrix remove_drift(const PathMatrix& prices, double mu, double sigma_s) {
    const double drift = mu - 0.5 * sigma_s * sigma_s;
    PathMatrix out(prices.rows(), prices.cols());
    for (Eigen::Index t = 0; t < prices.cols(); ++t)
        out.col(t) = prices.col(t).array().log() - drift * static_cast<double>(t);
    return out;
}

PathMatrix add_drift(const PathMatrix& states, double mu, double sigma_s) {
    const double drift = mu - 0.5 * sigma_s * sigma_s;
    PathMatrix out(states.rows(), states.cols());
    for (Eigen::Index t = 0; t < states.cols(); ++t)
        out.col(t) = (states.col(t).array() + drift * static_cast<double>(t)).exp();
    return out;
}

PathMatrix gbm_paths(double s0, double mu, double sigma_s, std::size_t slots, std::size_t paths, double dt,
                     std::uint64_t seed) {
    check_gbm(s0, sigma_s, dt);
    const double drift = (mu - 0.5 * sigma_s * sigma_s) * dt, vol = sigma_s * std::sqrt(dt);
    PathMatrix out(static_cast<Eigen::Index>(paths), static_cast<Eigen::Index>(slots + 1));
    parallel_paths(paths, [&](Eigen::Index u) {
        gbm_row(s0, drift, vol, slots, stream_seed(seed, static_cast<std::uint64_t>(u)), out, u);
    });
    return out;
}

SimulatedPaths simulate_prices(std::span<const Segment> segments, std::size_t paths, double s0, std::uint64_t seed,
                               PriceChangeMode mode) {
    if (!(s0 > 0.0)) throw std::invalid_argument("s0 must be positive");
    const auto tables = tabulate(segments);
    const auto T = static_cast<Eigen::Index>(total_slots(segments));
    SimulatedPaths out{PathMatrix(static_cast<Eigen::Index>(paths), T),
                       PathMatrix(static_cast<Eigen::Index>(paths), T + 1)};
    parallel_paths(paths, [&](Eigen::Index u) {
        price_row(tables, s0, stream_seed(seed, static_cast<std::uint64_t>(u)), mode, out, u);
    });
    return out;
}

namespace serial {

PathMatrix simulate_decisions(const VhmnParams& g, const Quantizer& q, std::size_t paths, std::size_t slots,
                              std::uint64_t seed) {
    check_decisions(g, q);
    PathMatrix out(static_cast<Eigen::Index>(paths), static_cast<Eigen::Index>(slots));
    for (std::size_t u = 0; u < paths; ++u)
        decision_row(g, q, slots, stream_seed(seed, u), out, static_cast<Eigen::Index>(u), 0);
    return out;
}

PathMatrix gbm_paths(double s0, double mu, double sigma_s, std::size_t slots, std::size_t paths, double dt,
                     std::uint64_t seed) {
    check_gbm(s0, sigma_s, dt);
    const double drift = (mu - 0.5 * sigma_s * sigma_s) * dt, vol = sigma_s * std::sqrt(dt);
    PathMatrix out(static_cast<Eigen::Index>(paths), static_cast<Eigen::Index>(slots + 1));
    for (std::size_t u = 0; u < paths; ++u) gbm_row(s0, drift, vol, slots, stream_seed(seed, u), out, static_cast<Eigen::Index>(u));
    return out;
}

SimulatedPaths simulate_prices(std::span<const Segment> segments, std::size_t paths, double s0, std::uint64_t seed,
                               PriceChangeMode mode) {
    if (!(s0 > 0.0)) throw std::invalid_argument("s0 must be positive");
    const auto tables = tabulate(segments);
    const auto T = static_cast<Eigen::Index>(total_slots(segments));
    SimulatedPaths out{PathMatrix(static_cast<Eigen::Index>(paths), T),
                       PathMatrix(static_cast<Eigen::Index>(paths), T + 1)};
    for (std::size_t u = 0; u < paths; ++u)
        price_row(tables, s0, stream_seed(seed, u), mode, out, static_cast<Eigen::Index>(u));
    return out;
}

}  // namespace serial

}  // namespace pihedge
