#pragma once

#include "pihedge/bspline.hpp"
#include "pihedge/paths.hpp"

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>

namespace pihedge {

enum class OptionKind { Call, Put };

// How deviations from expectations at time t are estimated in the action
// solve and the risk charge.
enum class Centering {
    Conditional,     // subtract the ridge regression on the basis at the state at t
    CrossSectional,  // subtract the sample mean over all paths
};

std::string to_string(OptionKind kind);
OptionKind option_kind_from_string(const std::string& name);

// All rates are per slot.
struct OptionSpec {
    OptionKind kind = OptionKind::Call;
    double strike = 100.0;
    std::size_t maturity_slots = 0;
    double shares = 1.0;           // Theta
    double rate = 0.0;             // r
    double risk_aversion = 1.0;    // eta, used for the terminal and reward risk charge
    bool pure_risk_hedge = false;  // drop the 1/(2 eta gamma) terms in the action solve
    double kappa = 0.0;
    double drift_mu = 0.0;
    double vol_sigma = 0.0;
    double ridge = 1e-3;
    Centering centering = Centering::Conditional;

    double discount() const { return std::exp(-rate); }
    void validate() const;
};

// Impact function f(F) for the compensation term kappa * f(F).
using ImpactFn = std::function<double(double)>;

struct HedgeConfig {
    std::size_t basis_count = 12;
    double basis_margin = 0.01;
    ImpactFn impact;  // required when kappa > 0
};

// Simulated prices plus the per-step quantities used by the recursion.
class CrossSection {
public:
    CrossSection(PathMatrix prices, const OptionSpec& spec);

    Eigen::Index paths() const noexcept { return prices_.rows(); }
    Eigen::Index steps() const noexcept { return prices_.cols() - 1; }

    const PathMatrix& prices() const noexcept { return prices_; }
    const PathMatrix& states() const noexcept { return states_; }
    const PathMatrix& delta() const noexcept { return delta_; }                    // U x T
    const PathMatrix& delta_centered() const noexcept { return delta_centered_; }  // U x T
    const PathMatrix& price_centered() const noexcept { return price_centered_; }  // U x (T+1)

private:
    PathMatrix prices_, states_, delta_, delta_centered_, price_centered_;
};

/// x - mean(x).
Eigen::VectorXd centered(const Eigen::VectorXd& x);

/// Unbiased cross-sectional variance.
double sample_variance(const Eigen::VectorXd& x);

double terminal_payoff(const OptionSpec& spec, double s_T);

struct TerminalValues {
    Eigen::VectorXd portfolio;  // Pi_T = H(S_T)
    Eigen::VectorXd q;          // -H(S_T) - eta * Var[H(S_T)]
    double payoff_variance = 0.0;
};

TerminalValues terminal_init(const OptionSpec& spec, const CrossSection& cs);

/// kappa * f(F) per path; empty spans below mean "no compensation".
using Compensation = std::span<const double>;

Eigen::VectorXd optimal_action_coeffs(Eigen::Index t, const CrossSection& cs, const Eigen::VectorXd& pi_next,
                                      const OptionSpec& spec, const BasisSet& basis, Compensation kf = {});

Eigen::VectorXd optimal_action(const Eigen::VectorXd& w, const BasisSet& basis, const Eigen::VectorXd& states);

Eigen::VectorXd portfolio_rollback(Eigen::Index t, const Eigen::VectorXd& pi_next, const Eigen::VectorXd& a,
                                   const CrossSection& cs, const OptionSpec& spec, Compensation kf = {});

/// `basis` is required for conditional centering.
Eigen::VectorXd reward(Eigen::Index t, const Eigen::VectorXd& a, const CrossSection& cs,
                       const Eigen::VectorXd& pi_next, const OptionSpec& spec, Compensation kf = {},
                       const BasisSet* basis = nullptr);

struct QFit {
    Eigen::VectorXd phi;
    Eigen::VectorXd q;
};

QFit qfit(const Eigen::VectorXd& rewards, const Eigen::VectorXd& q_next, const BasisSet& basis,
          const Eigen::VectorXd& states, const OptionSpec& spec);

/// Sampled action objective for a coefficient vector, minimized by
/// optimal_action_coeffs (ridge term included).
double action_objective(Eigen::Index t, const Eigen::VectorXd& w, const CrossSection& cs,
                        const Eigen::VectorXd& pi_next, const OptionSpec& spec, const BasisSet& basis,
                        Compensation kf = {});

struct HedgeSolution {
    BasisSet basis;
    PathMatrix positions{};         // U x (T+1), last column zero
    PathMatrix portfolio{};         // U x (T+1)
    PathMatrix rewards{};           // U x T
    PathMatrix q{};                 // U x (T+1)
    Eigen::MatrixXd action_coeffs{};  // B x (T+1), last column zero
    Eigen::MatrixXd q_coeffs{};     // B x T
    Eigen::VectorXd q_mean{};       // mean Q_t per t
    double payoff_variance = 0.0;
    double price = 0.0;             // -mean(Q_0), per share
};

HedgeSolution price_and_hedge(const CrossSection& cs, const OptionSpec& spec, const HedgeConfig& config = {});

void write_hedge_json(std::ostream& out, const HedgeSolution& solution, const OptionSpec& spec);

}  // namespace pihedge
