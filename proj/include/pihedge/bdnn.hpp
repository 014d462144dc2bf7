#pragma once

#include "pihedge/market_data.hpp"
#include "pihedge/mlp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pihedge {

struct TrainConfig {
    double lambda = 0.7;  // L2 weight
    double sigma = 2.5;   // residual noise std, in model target units
    double learning_rate = 1e-3;
    std::size_t epochs = 2000;
    std::size_t batch_size = 0;  // 0 selects the whole dataset
    std::uint64_t rng_seed = 0;
    bool standardize_inputs = true;
    bool standardize_targets = true;
    bool zero_init = false;

    void validate() const;
};

/// Data term sum_n 1/2 (g_n - f(d_n))^2 plus (lambda/2) |theta|^2, in model
/// target units. Throws Error on an empty dataset.
double loss(const MlpModel& model, std::span<const DecisionSample> dataset, double lambda);

/// Gradient descent on loss() with deterministic per-epoch shuffling. Returns
/// the lowest-loss iterate. Throws Divergence if the loss becomes non-finite.
MlpModel train_map(std::span<const DecisionSample> dataset, const TrainConfig& config,
                   const Architecture& arch = {});

/// Feature map phi(d) = d f / d theta at the model's weights.
Eigen::VectorXd jacobian_features(const MlpModel& model, double d);

// Gaussian N(theta*, precision^-1) over the network weights.
class LaplacePosterior {
public:
    LaplacePosterior(Eigen::VectorXd theta_star, Eigen::MatrixXd precision);

    const Eigen::VectorXd& theta_star() const noexcept { return theta_star_; }
    const Eigen::MatrixXd& precision() const noexcept { return precision_; }
    std::size_t dimension() const noexcept { return static_cast<std::size_t>(theta_star_.size()); }

    /// phi^T precision^-1 phi via the cached Cholesky factor.
    double quadratic_form(const Eigen::VectorXd& phi) const;
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

    /// Explicit covariance; only offered for small M (<= 64).
    Eigen::MatrixXd covariance() const;

private:
    Eigen::VectorXd theta_star_;
    Eigen::MatrixXd precision_;
    Eigen::LLT<Eigen::MatrixXd> factor_;
};

/// precision = sum_n phi(d_n) phi(d_n)^T + lambda I (Gauss-Newton curvature).
LaplacePosterior laplace_posterior(const MlpModel& model, std::span<const DecisionSample> dataset,
                                   double lambda);

struct PredictiveDistribution {
    double mean = 0.0;      // price change
    double variance = 0.0;  // price change squared
    double stddev() const;
};

/// Mean f(d*) and variance phi^T precision^-1 phi + sigma^2, mapped to
/// price-change units through the model's target scaling.
PredictiveDistribution predictive(const LaplacePosterior& posterior, const MlpModel& model,
                                  double sigma, double d);

struct PredictiveBatch {
    std::vector<double> mean;
    std::vector<double> variance;
};

/// Elementwise predictive() over `inputs`, evaluated in parallel.
PredictiveBatch predictive_batch(const LaplacePosterior& posterior, const MlpModel& model,
                                 double sigma, std::span<const double> inputs);

namespace serial {
PredictiveBatch predictive_batch(const LaplacePosterior& posterior, const MlpModel& model,
                                 double sigma, std::span<const double> inputs);
}

/// `count` evenly spaced points from the smallest to the largest decision in
/// the dataset.
std::vector<double> decision_grid(std::span<const DecisionSample> dataset, std::size_t count);

// A trained regressor with its posterior and hyperparameters.
struct Bdnn {
    MlpModel model;
    LaplacePosterior posterior;
    double lambda = 0.0;
    double sigma = 0.0;

    PredictiveDistribution predict(double d) const { return predictive(posterior, model, sigma, d); }
};

Bdnn fit_bdnn(std::span<const DecisionSample> dataset, const TrainConfig& config,
              const Architecture& arch = {});

/// Fraction of samples whose target lies within mean +- k * stddev.
double coverage(const Bdnn& bdnn, std::span<const DecisionSample> samples, double k = 1.0);

/// JSON blob holding architecture, theta*, dense row-major precision,
/// lambda, sigma and the standardization constants. Lossless.
std::string save_bdnn_json(const Bdnn& bdnn);
Bdnn load_bdnn_json(const std::string& text);

}  // namespace pihedge
