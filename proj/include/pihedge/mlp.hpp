#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

namespace pihedge {

enum class Activation { Tanh, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

// Fully connected scalar-in / scalar-out network. Hidden layers use
// `hidden`; the output layer is linear.
struct Architecture {
    std::vector<std::size_t> widths{1, 16, 16, 1};
    Activation hidden = Activation::Tanh;
    bool bias = true;

    std::size_t parameter_count() const;
    void validate() const;

    // f(d) = theta * d
    static Architecture linear_no_bias() { return {{1, 1}, Activation::Identity, false}; }

    bool operator==(const Architecture&) const = default;
};

// Affine maps applied around the network: x = (d - input_mean) / input_scale
// on the way in, g = target_mean + target_scale * y on the way out.
struct Standardization {
    double input_mean = 0.0;
    double input_scale = 1.0;
    double target_mean = 0.0;
    double target_scale = 1.0;

    double input(double d) const { return (d - input_mean) / input_scale; }
    double target(double g) const { return (g - target_mean) / target_scale; }
    double untarget(double y) const { return target_mean + target_scale * y; }

    bool operator==(const Standardization&) const = default;
};

/// Weights are stored flat, layer by layer: the row-major weight matrix
/// (out x in) followed by the bias vector when the architecture has biases.
class MlpModel {
public:
    MlpModel(Architecture arch, Eigen::VectorXd weights, Standardization scaling = {});

    const Architecture& architecture() const noexcept { return arch_; }
    const Eigen::VectorXd& weights() const noexcept { return theta_; }
    const Standardization& scaling() const noexcept { return scaling_; }
    std::size_t parameter_count() const noexcept { return static_cast<std::size_t>(theta_.size()); }

    void set_weights(const Eigen::VectorXd& theta);

    /// Network output in model (standardized target) units at raw input d.
    double forward(double d) const;

    /// forward() mapped back to price-change units.
    double predict(double d) const { return scaling_.untarget(forward(d)); }

    /// Gradient of forward(d) with respect to the weights.
    Eigen::VectorXd jacobian(double d) const;

    /// forward(d) and its weight gradient in one pass; grad must have size M.
    double forward_with_jacobian(double d, Eigen::Ref<Eigen::VectorXd> grad) const;

private:
    double run(double x, Eigen::VectorXd* grad) const;

    Architecture arch_;
    Eigen::VectorXd theta_;
    Standardization scaling_;
};

}  // namespace pihedge
