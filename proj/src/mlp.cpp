#include "pihedge/mlp.hpp"

#include "pihedge/error.hpp"

#include <cmath>
#include <stdexcept>

namespace pihedge {

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "identity"; }

Activation activation_from_string(const std::string& name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "identity" || name == "linear") return Activation::Identity;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

std::size_t Architecture::parameter_count() const {
    std::size_t m = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
        m += widths[l] * widths[l + 1] + (bias ? widths[l + 1] : 0);
    return m;
}

void Architecture::validate() const {
    if (widths.size() < 2 || widths.front() != 1 || widths.back() != 1)
        throw std::invalid_argument("architecture must map width 1 to width 1");
    for (auto w : widths)
        if (w == 0) throw std::invalid_argument("layer width must be positive");
}

MlpModel::MlpModel(Architecture arch, Eigen::VectorXd weights, Standardization scaling)
    : arch_(std::move(arch)), theta_(std::move(weights)), scaling_(scaling) {
    arch_.validate();
    if (static_cast<std::size_t>(theta_.size()) != arch_.parameter_count())
        throw std::invalid_argument("weight vector length does not match the architecture");
    if (!(scaling_.input_scale > 0.0) || !(scaling_.target_scale > 0.0))
        throw std::invalid_argument("standardization scales must be positive");
}

void MlpModel::set_weights(const Eigen::VectorXd& theta) {
    if (theta.size() != theta_.size()) throw std::invalid_argument("weight vector length mismatch");
    theta_ = theta;
}

double MlpModel::forward(double d) const { return run(scaling_.input(d), nullptr); }

Eigen::VectorXd MlpModel::jacobian(double d) const {
    Eigen::VectorXd grad(theta_.size());
    run(scaling_.input(d), &grad);
    return grad;
}

double MlpModel::forward_with_jacobian(double d, Eigen::Ref<Eigen::VectorXd> grad) const {
    Eigen::VectorXd g(theta_.size());
    double y = run(scaling_.input(d), &g);
    grad = g;
    return y;
}

double MlpModel::run(double x, Eigen::VectorXd* grad) const {
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const auto& w = arch_.widths;
    const std::size_t layers = w.size() - 1;
    const bool tanh_hidden = arch_.hidden == Activation::Tanh;

    // acts[l] is the input to layer l; acts[layers] is the output.
    std::vector<Eigen::VectorXd> acts(layers + 1);
    std::vector<std::size_t> offsets(layers);
    acts[0] = Eigen::VectorXd::Constant(1, x);
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        offsets[l] = off;
        Eigen::Map<const RowMajor> W(theta_.data() + off, w[l + 1], w[l]);
        off += w[l] * w[l + 1];
        Eigen::VectorXd z = W * acts[l];
        if (arch_.bias) {
            z += Eigen::Map<const Eigen::VectorXd>(theta_.data() + off, w[l + 1]);
            off += w[l + 1];
        }
        const bool hidden = l + 1 < layers;
        if (hidden && tanh_hidden) z = z.array().tanh();
        acts[l + 1] = std::move(z);
    }
    const double y = acts[layers](0);
    if (!grad) return y;

    // delta = d y / d z for the current layer's pre-activation.
    Eigen::VectorXd delta = Eigen::VectorXd::Ones(1);
    for (std::size_t l = layers; l-- > 0;) {
        std::size_t o = offsets[l];
        Eigen::Map<RowMajor> gW(grad->data() + o, w[l + 1], w[l]);
        gW.noalias() = delta * acts[l].transpose();
        if (arch_.bias) grad->segment(o + w[l] * w[l + 1], w[l + 1]) = delta;
        if (l == 0) break;
        Eigen::Map<const RowMajor> W(theta_.data() + o, w[l + 1], w[l]);
        Eigen::VectorXd back = W.transpose() * delta;
        if (tanh_hidden) back.array() *= 1.0 - acts[l].array().square();
        delta = std::move(back);
    }
    return y;
}

}  // namespace pihedge
