#pragma once

#include "pihedge/bdnn.hpp"
#include "pihedge/vhmn.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace pihedge {

// Path sets are stored one path per row: U x T decisions, U x (T+1) prices
// and states. Column t is the cross-section at time t.
using PathMatrix = Eigen::MatrixXd;

enum class PriceChangeMode {
    PredictiveMean,    // g_t = posterior predictive mean
    PredictiveSample,  // g_t ~ N(mean, variance)
};

/// U independent sample_path draws of length T, observation indices decoded
/// to bin midpoints. Path u uses the stream stream_seed(seed, u).
PathMatrix simulate_decisions(const VhmnParams& gamma, const Quantizer& observation, std::size_t paths,
                              std::size_t slots, std::uint64_t seed);

/// S_0 = s0, S_{t+1} = S_t * (1 + g_t). Throws PathExplosion when a factor
/// is not positive. `noise_seed` is only used in sampling mode.
std::vector<double> decisions_to_prices(const Bdnn& bdnn, std::span<const double> decisions, double s0,
                                        PriceChangeMode mode = PriceChangeMode::PredictiveMean,
                                        std::uint64_t noise_seed = 0);

/// ln S_t - (mu - sigma_s^2 / 2) t with t counted in slots.
std::vector<double> remove_drift(std::span<const double> prices, double mu, double sigma_s);
std::vector<double> add_drift(std::span<const double> states, double mu, double sigma_s);
PathMatrix remove_drift(const PathMatrix& prices, double mu, double sigma_s);
PathMatrix add_drift(const PathMatrix& states, double mu, double sigma_s);

/// Exact lognormal stepping, U x (T+1). Path u uses stream_seed(seed, u).
PathMatrix gbm_paths(double s0, double mu, double sigma_s, std::size_t slots, std::size_t paths, double dt,
                     std::uint64_t seed);

// One episode's worth of simulated slots.
struct Segment {
    const VhmnModel* vhmn = nullptr;
    const Bdnn* bdnn = nullptr;
    std::size_t slots = 0;
};

struct SimulatedPaths {
    PathMatrix decisions;  // U x T
    PathMatrix prices;     // U x (T+1)
};

/// Chains segments: every path draws its decisions segment by segment and
/// compounds price changes from s0 across segment boundaries.
SimulatedPaths simulate_prices(std::span<const Segment> segments, std::size_t paths, double s0, std::uint64_t seed,
                               PriceChangeMode mode = PriceChangeMode::PredictiveMean);

// Single-threaded reference implementations; bit-identical to the parallel ones.
namespace serial {
PathMatrix simulate_decisions(const VhmnParams& gamma, const Quantizer& observation, std::size_t paths,
                              std::size_t slots, std::uint64_t seed);
PathMatrix gbm_paths(double s0, double mu, double sigma_s, std::size_t slots, std::size_t paths, double dt,
                     std::uint64_t seed);
SimulatedPaths simulate_prices(std::span<const Segment> segments, std::size_t paths, double s0, std::uint64_t seed,
                               PriceChangeMode mode = PriceChangeMode::PredictiveMean);
}  // namespace serial

}  // namespace pihedge
