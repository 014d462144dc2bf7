#include <doctest.h>

#include "pihedge/bdnn.hpp"
#include "pihedge/error.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace pihedge;

namespace {

TrainConfig raw_config(double lambda, double sigma) {
    TrainConfig c;
    c.lambda = lambda;
    c.sigma = sigma;
    c.learning_rate = 0.1;
    c.epochs = 2000;
    c.standardize_inputs = false;
    c.standardize_targets = false;
    return c;
}

std::vector<DecisionSample> noisy_line(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.1);
    std::uniform_real_distribution<double> x(-2.0, 2.0);
    std::vector<DecisionSample> out(n);
    for (auto& s : out) {
        s.d = x(rng);
        s.g = 0.5 * std::sin(s.d) + noise(rng);
    }
    return out;
}

}  // namespace

TEST_CASE("loss examples") {
    const std::vector<DecisionSample> one{{1.0, 1.0}};
    MlpModel half(Architecture::linear_no_bias(), Eigen::VectorXd::Constant(1, 0.5));
    CHECK(loss(half, one, 1.0) == doctest::Approx(0.25));
    MlpModel zero(Architecture::linear_no_bias(), Eigen::VectorXd::Zero(1));
    CHECK(loss(zero, one, 1.0) == doctest::Approx(0.5));
    const std::vector<DecisionSample> twice{{1.0, 1.0}, {1.0, 1.0}};
    CHECK(loss(half, twice, 0.0) == doctest::Approx(2.0 * loss(half, one, 0.0)));
    CHECK_THROWS_AS(loss(half, std::vector<DecisionSample>{}, 1.0), Error);
}

TEST_CASE("linear MAP estimate and Laplace posterior") {
    const std::vector<DecisionSample> one{{1.0, 1.0}};
    auto fit = fit_bdnn(one, raw_config(1.0, 1.0), Architecture::linear_no_bias());
    CHECK(fit.model.weights()[0] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(fit.posterior.precision()(0, 0) == doctest::Approx(2.0));
    CHECK(fit.posterior.covariance()(0, 0) == doctest::Approx(0.5));
    auto p = fit.predict(1.0);
    CHECK(p.mean == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(p.variance == doctest::Approx(1.5).epsilon(1e-8));
}

TEST_CASE("duplicated data doubles the data curvature") {
    MlpModel m(Architecture::linear_no_bias(), Eigen::VectorXd::Constant(1, 0.3));
    const std::vector<DecisionSample> one{{2.0, 1.0}}, two{{2.0, 1.0}, {2.0, 1.0}};
    const double h1 = laplace_posterior(m, one, 0.0).precision()(0, 0);
    const double h2 = laplace_posterior(m, two, 0.0).precision()(0, 0);
    CHECK(h1 == doctest::Approx(4.0));
    CHECK(h2 == doctest::Approx(2.0 * h1));
}

TEST_CASE("jacobian matches finite differences") {
    Architecture arch;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01(0.0, 0.5);
    Eigen::VectorXd theta(static_cast<Eigen::Index>(arch.parameter_count()));
    for (auto& v : theta) v = n01(rng);
    MlpModel m(arch, theta);
    for (double d : {-1.3, 0.0, 0.4, 2.2}) {
        const Eigen::VectorXd j = jacobian_features(m, d);
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
            const double h = 1e-6;
            Eigen::VectorXd tp = theta, tm = theta;
            tp[k] += h;
            tm[k] -= h;
            const double fd = (MlpModel(arch, tp).forward(d) - MlpModel(arch, tm).forward(d)) / (2 * h);
            CHECK(j[k] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
        }
    }
    MlpModel lin(Architecture::linear_no_bias(), Eigen::VectorXd::Constant(1, 0.7));
    CHECK(jacobian_features(lin, 3.0)[0] == doctest::Approx(3.0));
}

TEST_CASE("zero weights are a fixed point for zero targets") {
    Architecture arch{{1, 8, 8, 1}, Activation::Tanh, false};
    TrainConfig c = raw_config(0.5, 1.0);
    c.zero_init = true;
    c.epochs = 50;
    std::vector<DecisionSample> data{{-1.0, 0.0}, {0.5, 0.0}, {2.0, 0.0}};
    auto m = train_map(data, c, arch);
    CHECK(m.weights().norm() == 0.0);
    auto post = laplace_posterior(m, data, 0.5);
    CHECK((post.precision() - 0.5 * Eigen::MatrixXd::Identity(post.dimension(), post.dimension())).norm() == 0.0);
    auto p = predictive(post, m, 1.0, 0.3);
    CHECK(p.mean == 0.0);
    CHECK(p.variance == doctest::Approx(1.0));
}

TEST_CASE("training is deterministic for a fixed seed") {
    auto data = noisy_line(120, 11);
    TrainConfig c;
    c.epochs = 200;
    c.batch_size = 16;
    c.rng_seed = 99;
    c.learning_rate = 1e-3;
    auto a = train_map(data, c), b = train_map(data, c);
    CHECK(a.weights() == b.weights());
    c.rng_seed = 100;
    CHECK(train_map(data, c).weights() != a.weights());
}

TEST_CASE("divergence is reported") {
    auto data = noisy_line(50, 2);
    TrainConfig c = raw_config(1.0, 1.0);
    for (auto& s : data) s.d *= 1e6;
    c.learning_rate = 10.0;
    c.epochs = 200;
    CHECK_THROWS_AS(train_map(data, c, Architecture::linear_no_bias()), Divergence);
}

TEST_CASE("fitted model tracks a smooth signal and is calibrated") {
    auto data = noisy_line(300, 5);
    TrainConfig c;
    c.lambda = 1e-3;
    c.sigma = 0.1 / 0.35;  // noise std over a rough target scale
    c.learning_rate = 5e-4;
    c.epochs = 3000;
    c.batch_size = 32;
    c.rng_seed = 1;
    auto fit = fit_bdnn(data, c, Architecture{{1, 16, 1}, Activation::Tanh, true});
    double mse = 0.0;
    for (const auto& s : data) mse += std::pow(fit.predict(s.d).mean - 0.5 * std::sin(s.d), 2);
    CHECK(mse / data.size() < 0.01);
    const double cov1 = coverage(fit, data, 1.0), cov2 = coverage(fit, data, 2.0);
    CHECK(cov1 > 0.55);
    CHECK(cov2 > 0.9);
    CHECK(cov2 >= cov1);
}

TEST_CASE("predictive batch equals scalar evaluation") {
    auto data = noisy_line(80, 8);
    TrainConfig c;
    c.epochs = 100;
    c.learning_rate = 0.01;
    auto fit = fit_bdnn(data, c, Architecture{{1, 8, 8, 1}, Activation::Tanh, true});
    auto grid = decision_grid(data, 57);
    REQUIRE(grid.size() == 57);
    auto par = predictive_batch(fit.posterior, fit.model, fit.sigma, grid);
    auto ser = serial::predictive_batch(fit.posterior, fit.model, fit.sigma, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto p = fit.predict(grid[i]);
        CHECK(par.mean[i] == p.mean);
        CHECK(par.variance[i] == p.variance);
        CHECK(ser.mean[i] == par.mean[i]);
        CHECK(ser.variance[i] == par.variance[i]);
        CHECK(std::isfinite(p.variance));
        CHECK(p.variance >= fit.sigma * fit.sigma * std::pow(fit.model.scaling().target_scale, 2) * (1 - 1e-12));
    }
}

TEST_CASE("single sample fits") {
    const std::vector<DecisionSample> one{{2.0, 0.01}};
    TrainConfig c;
    c.epochs = 20;
    auto fit = fit_bdnn(one, c);
    CHECK(std::isfinite(fit.predict(2.0).mean));
    CHECK(fit.predict(2.0).variance > 0.0);
}

TEST_CASE("json round trip is lossless") {
    auto data = noisy_line(60, 4);
    TrainConfig c;
    c.epochs = 50;
    c.learning_rate = 0.01;
    auto fit = fit_bdnn(data, c);
    auto back = load_bdnn_json(save_bdnn_json(fit));
    CHECK(back.model.architecture() == fit.model.architecture());
    CHECK(back.model.weights() == fit.model.weights());
    CHECK(back.model.scaling() == fit.model.scaling());
    CHECK(back.posterior.precision() == fit.posterior.precision());
    CHECK(back.lambda == fit.lambda);
    CHECK(back.sigma == fit.sigma);
    for (double d : {-1.0, 0.0, 1.7}) {
        CHECK(back.predict(d).mean == fit.predict(d).mean);
        CHECK(back.predict(d).variance == fit.predict(d).variance);
    }
    CHECK_THROWS(load_bdnn_json("{\"format\": 3}"));
}
