#include "pihedge/bdnn.hpp"

#include "pihedge/error.hpp"
#include "pihedge/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace pihedge {

void TrainConfig::validate() const {
    if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
}

namespace {

void require_nonempty(std::span<const DecisionSample> dataset) {
    if (dataset.empty()) throw Error("dataset is empty");
}

std::pair<double, double> mean_and_scale(std::span<const DecisionSample> data, bool use_d) {
    double mean = 0.0;
    for (const auto& s : data) mean += use_d ? s.d : s.g;
    mean /= static_cast<double>(data.size());
    double var = 0.0;
    for (const auto& s : data) {
        double x = (use_d ? s.d : s.g) - mean;
        var += x * x;
    }
    var /= static_cast<double>(data.size());
    double scale = std::sqrt(var);
    if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
    return {mean, scale};
}

Eigen::VectorXd initial_weights(const Architecture& arch, const TrainConfig& cfg) {
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch.parameter_count()));
    if (cfg.zero_init) return theta;
    Rng rng(stream_seed(cfg.rng_seed, 0));
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < arch.widths.size(); ++l) {
        const std::size_t in = arch.widths[l], out = arch.widths[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (std::size_t k = 0; k < in * out; ++k) theta[static_cast<Eigen::Index>(off + k)] = u(rng);
        off += in * out + (arch.bias ? out : 0);
    }
    return theta;
}

double data_term(const MlpModel& model, std::span<const DecisionSample> dataset) {
    double sum = 0.0;
    for (const auto& s : dataset) {
        double r = model.scaling().target(s.g) - model.forward(s.d);
        sum += 0.5 * r * r;
    }
    return sum;
}

}  // namespace

double loss(const MlpModel& model, std::span<const DecisionSample> dataset, double lambda) {
    require_nonempty(dataset);
    return data_term(model, dataset) + 0.5 * lambda * model.weights().squaredNorm();
}

MlpModel train_map(std::span<const DecisionSample> dataset, const TrainConfig& config,
                   const Architecture& arch) {
    require_nonempty(dataset);
    config.validate();
    arch.validate();

    Standardization scaling;
    if (config.standardize_inputs) std::tie(scaling.input_mean, scaling.input_scale) = mean_and_scale(dataset, true);
    if (config.standardize_targets) std::tie(scaling.target_mean, scaling.target_scale) = mean_and_scale(dataset, false);

    MlpModel model(arch, initial_weights(arch, config), scaling);
    const std::size_t n = dataset.size();
    const std::size_t batch = (config.batch_size == 0 || config.batch_size > n) ? n : config.batch_size;
    const double lambda = config.lambda;
    const auto m = static_cast<Eigen::Index>(arch.parameter_count());

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(stream_seed(config.rng_seed, 1));

    Eigen::VectorXd theta = model.weights();
    Eigen::VectorXd best = theta;
    double best_loss = loss(model, dataset, lambda);
    Eigen::VectorXd grad(m), phi(m);

    auto check = [](double value) {
        if (!std::isfinite(value))
            throw Divergence("training loss became non-finite; try a smaller learning rate");
    };
    check(best_loss);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t stop = std::min(n, start + batch);
            const double weight = static_cast<double>(n) / static_cast<double>(stop - start);
            grad.setZero();
            double batch_data = 0.0;
            for (std::size_t k = start; k < stop; ++k) {
                const auto& s = dataset[order[k]];
                double y = model.forward_with_jacobian(s.d, phi);
                double r = y - scaling.target(s.g);
                batch_data += 0.5 * r * r;
                grad.noalias() += r * phi;
            }
            if (stop - start == n) {
                // Full-batch pass: the loss at the current weights comes for free.
                double current = batch_data + 0.5 * lambda * theta.squaredNorm();
                check(current);
                if (current < best_loss) {
                    best_loss = current;
                    best = theta;
                }
            }
            grad *= weight;
            grad.noalias() += lambda * theta;
            theta.noalias() -= config.learning_rate * grad;
            if (!theta.allFinite()) check(std::numeric_limits<double>::quiet_NaN());
            model.set_weights(theta);
        }
        if (batch < n || epoch + 1 == config.epochs) {
            double current = loss(model, dataset, lambda);
            check(current);
            if (current < best_loss) {
                best_loss = current;
                best = theta;
            }
        }
    }
    model.set_weights(best);
    return model;
}

Eigen::VectorXd jacobian_features(const MlpModel& model, double d) { return model.jacobian(d); }

LaplacePosterior::LaplacePosterior(Eigen::VectorXd theta_star, Eigen::MatrixXd precision)
    : theta_star_(std::move(theta_star)), precision_(std::move(precision)) {
    if (precision_.rows() != theta_star_.size() || precision_.cols() != theta_star_.size())
        throw std::invalid_argument("precision matrix shape does not match theta*");
    factor_.compute(precision_);
    if (factor_.info() != Eigen::Success)
        throw NotPositiveDefinite("posterior precision is not positive definite");
    const auto diag = factor_.matrixLLT().diagonal();
    if (!(diag.array() > 0.0).all() || !diag.allFinite())
        throw NotPositiveDefinite("posterior precision has a non-positive pivot");
}

double LaplacePosterior::quadratic_form(const Eigen::VectorXd& phi) const {
    // |L^-1 phi|^2 with precision = L L^T.
    Eigen::VectorXd half = factor_.matrixL().solve(phi);
    return half.squaredNorm();
}

Eigen::VectorXd LaplacePosterior::solve(const Eigen::VectorXd& rhs) const { return factor_.solve(rhs); }

Eigen::MatrixXd LaplacePosterior::covariance() const {
    if (dimension() > 64) throw std::logic_error("explicit covariance is only formed for M <= 64");
    return factor_.solve(Eigen::MatrixXd::Identity(precision_.rows(), precision_.cols()));
}

LaplacePosterior laplace_posterior(const MlpModel& model, std::span<const DecisionSample> dataset,
                                   double lambda) {
    const auto m = static_cast<Eigen::Index>(model.parameter_count());
    Eigen::MatrixXd precision = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd phi(m);
    for (const auto& s : dataset) {
        model.forward_with_jacobian(s.d, phi);
        precision.selfadjointView<Eigen::Lower>().rankUpdate(phi);
    }
    precision.triangularView<Eigen::StrictlyUpper>() = precision.transpose();
    precision.diagonal().array() += lambda;
    return LaplacePosterior(model.weights(), std::move(precision));
}

double PredictiveDistribution::stddev() const { return std::sqrt(variance); }

PredictiveDistribution predictive(const LaplacePosterior& posterior, const MlpModel& model,
                                  double sigma, double d) {
    Eigen::VectorXd phi(static_cast<Eigen::Index>(model.parameter_count()));
    const double y = model.forward_with_jacobian(d, phi);
    const double k = posterior.quadratic_form(phi);
    const double s = model.scaling().target_scale;
    return {model.scaling().untarget(y), s * s * (k + sigma * sigma)};
}

PredictiveBatch predictive_batch(const LaplacePosterior& posterior, const MlpModel& model,
                                 double sigma, std::span<const double> inputs) {
    PredictiveBatch out{std::vector<double>(inputs.size()), std::vector<double>(inputs.size())};
    const auto n = static_cast<std::ptrdiff_t>(inputs.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        auto p = predictive(posterior, model, sigma, inputs[static_cast<std::size_t>(i)]);
        out.mean[static_cast<std::size_t>(i)] = p.mean;
        out.variance[static_cast<std::size_t>(i)] = p.variance;
    }
    return out;
}

namespace serial {
PredictiveBatch predictive_batch(const LaplacePosterior& posterior, const MlpModel& model,
                                 double sigma, std::span<const double> inputs) {
    PredictiveBatch out;
    out.mean.reserve(inputs.size());
    out.variance.reserve(inputs.size());
    for (double d : inputs) {
        auto p = predictive(posterior, model, sigma, d);
        out.mean.push_back(p.mean);
        out.variance.push_back(p.variance);
    }
    return out;
}
}  // namespace serial

std::vector<double> decision_grid(std::span<const DecisionSample> dataset, std::size_t count) {
    require_nonempty(dataset);
    auto [lo_it, hi_it] = std::minmax_element(dataset.begin(), dataset.end(),
                                              [](const auto& a, const auto& b) { return a.d < b.d; });
    const double lo = lo_it->d, hi = hi_it->d;
    std::vector<double> grid(count);
    for (std::size_t i = 0; i < count; ++i) {
        grid[i] = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    }
    return grid;
}

Bdnn fit_bdnn(std::span<const DecisionSample> dataset, const TrainConfig& config, const Architecture& arch) {
    MlpModel model = train_map(dataset, config, arch);
    LaplacePosterior posterior = laplace_posterior(model, dataset, config.lambda);
    return Bdnn{std::move(model), std::move(posterior), config.lambda, config.sigma};
}

double coverage(const Bdnn& bdnn, std::span<const DecisionSample> samples, double k) {
    if (samples.empty()) return 0.0;
    std::size_t inside = 0;
    for (const auto& s : samples) {
        auto p = bdnn.predict(s.d);
        if (std::abs(s.g - p.mean) <= k * p.stddev()) ++inside;
    }
    return static_cast<double>(inside) / static_cast<double>(samples.size());
}

std::string save_bdnn_json(const Bdnn& bdnn) {
    using nlohmann::json;
    const auto& arch = bdnn.model.architecture();
    const auto& sc = bdnn.model.scaling();
    const auto& prec = bdnn.posterior.precision();
    std::vector<double> dense;
    dense.reserve(static_cast<std::size_t>(prec.size()));
    for (Eigen::Index r = 0; r < prec.rows(); ++r)
        for (Eigen::Index c = 0; c < prec.cols(); ++c) dense.push_back(prec(r, c));
    const auto& theta = bdnn.posterior.theta_star();
    json j;
    j["format"] = "pihedge.bdnn";
    j["version"] = 1;
    j["architecture"] = {{"widths", arch.widths}, {"activation", to_string(arch.hidden)}, {"bias", arch.bias}};
    j["theta"] = std::vector<double>(theta.data(), theta.data() + theta.size());
    j["precision"] = {{"rows", prec.rows()}, {"cols", prec.cols()}, {"data", dense}};
    j["lambda"] = bdnn.lambda;
    j["sigma"] = bdnn.sigma;
    j["standardization"] = {{"input_mean", sc.input_mean},
                            {"input_scale", sc.input_scale},
                            {"target_mean", sc.target_mean},
                            {"target_scale", sc.target_scale}};
    return j.dump(1) + "\n";
}

Bdnn load_bdnn_json(const std::string& text) {
    using nlohmann::json;
    json j;
    try {
        j = json::parse(text);
        if (j.at("format") != "pihedge.bdnn") throw Error("not a pihedge.bdnn document");
        Architecture arch{j.at("architecture").at("widths").get<std::vector<std::size_t>>(),
                          activation_from_string(j.at("architecture").at("activation").get<std::string>()),
                          j.at("architecture").at("bias").get<bool>()};
        auto theta_v = j.at("theta").get<std::vector<double>>();
        Eigen::VectorXd theta = Eigen::Map<Eigen::VectorXd>(theta_v.data(), static_cast<Eigen::Index>(theta_v.size()));
        const auto rows = j.at("precision").at("rows").get<Eigen::Index>();
        const auto cols = j.at("precision").at("cols").get<Eigen::Index>();
        auto data = j.at("precision").at("data").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw Error("precision data has the wrong length");
        Eigen::MatrixXd prec(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) prec(r, c) = data[static_cast<std::size_t>(r * cols + c)];
        const auto& s = j.at("standardization");
        Standardization sc{s.at("input_mean").get<double>(), s.at("input_scale").get<double>(),
                           s.at("target_mean").get<double>(), s.at("target_scale").get<double>()};
        MlpModel model(std::move(arch), theta, sc);
        LaplacePosterior post(theta, std::move(prec));
        return Bdnn{std::move(model), std::move(post), j.at("lambda").get<double>(), j.at("sigma").get<double>()};
    } catch (const json::exception& e) {
        throw Error(std::string("malformed bdnn JSON: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw Error(std::string("malformed bdnn JSON: ") + e.what());
    }
}

}  // namespace pihedge
