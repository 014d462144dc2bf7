#include "pihedge/hedging.hpp"

#include "pihedge/error.hpp"
#include "pihedge/kernels/assembly.hpp"

#include <Eigen/Cholesky>
#include <json.hpp>

#include <algorithm>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace pihedge {

std::string to_string(OptionKind kind) { return kind == OptionKind::Call ? "call" : "put"; }

OptionKind option_kind_from_string(const std::string& name) {
    if (name == "call") return OptionKind::Call;
    if (name == "put") return OptionKind::Put;
    throw std::invalid_argument("unknown option kind '" + name + "'");
}

void OptionSpec::validate() const {
    if (!(strike > 0.0)) throw std::invalid_argument("strike must be positive");
    if (!(shares > 0.0)) throw std::invalid_argument("shares must be positive");
    if (!std::isfinite(rate)) throw std::invalid_argument("rate must be finite");
    if (!(risk_aversion >= 0.0) || !std::isfinite(risk_aversion))
        throw std::invalid_argument("risk aversion must be finite and non-negative");
    if (!pure_risk_hedge && !(risk_aversion > 0.0))
        throw std::invalid_argument("the action solve needs eta > 0 unless the pure-risk hedge is selected");
    if (!(kappa >= 0.0)) throw std::invalid_argument("kappa must be non-negative");
    if (!(ridge >= 0.0)) throw std::invalid_argument("ridge must be non-negative");
    if (!(vol_sigma >= 0.0)) throw std::invalid_argument("vol_sigma must be non-negative");
}

Eigen::VectorXd centered(const Eigen::VectorXd& x) {
    if (x.size() == 0) return x;
    return x.array() - x.mean();
}

double sample_variance(const Eigen::VectorXd& x) {
    if (x.size() < 2) throw InsufficientPaths("variance needs at least 2 paths");
    return centered(x).squaredNorm() / static_cast<double>(x.size() - 1);
}

CrossSection::CrossSection(PathMatrix prices, const OptionSpec& spec) : prices_(std::move(prices)) {
    if (prices_.cols() < 2) throw std::invalid_argument("cross-section needs at least one step");
    if (prices_.rows() < 1) throw InsufficientPaths("cross-section has no paths");
    if (!(prices_.array() > 0.0).all() || !prices_.allFinite())
        throw std::invalid_argument("prices must be finite and positive");
    states_ = remove_drift(prices_, spec.drift_mu, spec.vol_sigma);
    const Eigen::Index T = steps();
    const double growth = std::exp(spec.rate);
    delta_.resize(prices_.rows(), T);
    delta_centered_.resize(prices_.rows(), T);
    price_centered_.resize(prices_.rows(), T + 1);
    for (Eigen::Index t = 0; t < T; ++t) {
        delta_.col(t) = prices_.col(t + 1) - growth * prices_.col(t);
        delta_centered_.col(t) = centered(delta_.col(t));
    }
    for (Eigen::Index t = 0; t <= T; ++t) price_centered_.col(t) = centered(prices_.col(t));
}

double terminal_payoff(const OptionSpec& spec, double s_T) {
    if (!(s_T > 0.0)) throw std::invalid_argument("terminal price must be positive");
    return spec.kind == OptionKind::Call ? std::max(s_T - spec.strike, 0.0) : std::max(spec.strike - s_T, 0.0);
}

TerminalValues terminal_init(const OptionSpec& spec, const CrossSection& cs) {
    if (cs.paths() < 2) throw InsufficientPaths("terminal variance needs at least 2 paths");
    TerminalValues out;
    const auto last = cs.prices().col(cs.steps());
    out.portfolio = last.unaryExpr([&](double s) { return terminal_payoff(spec, s); });
    out.payoff_variance = sample_variance(out.portfolio);
    out.q = -out.portfolio.array() - spec.risk_aversion * out.payoff_variance;
    return out;
}

namespace {

std::vector<SparseRow> basis_rows(const BasisSet& basis, const Eigen::VectorXd& states) {
    std::vector<SparseRow> rows(static_cast<std::size_t>(states.size()));
#pragma omp parallel for schedule(static)
    for (Eigen::Index u = 0; u < states.size(); ++u) rows[static_cast<std::size_t>(u)] = basis.evaluate_sparse(states[u]);
    return rows;
}

double comp(Compensation kf, Eigen::Index u) { return kf.empty() ? 0.0 : kf[static_cast<std::size_t>(u)]; }

void check_step(Eigen::Index t, const CrossSection& cs, const Eigen::VectorXd& pi_next, Compensation kf) {
    if (t < 0 || t >= cs.steps()) throw std::out_of_range("time step outside the cross-section");
    if (pi_next.size() != cs.paths()) throw std::invalid_argument("portfolio length differs from path count");
    if (!kf.empty() && kf.size() != static_cast<std::size_t>(cs.paths()))
        throw std::invalid_argument("compensation length differs from path count");
}

// Solves (lhs + ridge I) x = rhs, rejecting numerically singular systems.
Eigen::VectorXd solve_ridge(Eigen::MatrixXd lhs, const Eigen::VectorXd& rhs, double ridge, const char* what) {
    lhs.diagonal().array() += ridge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(lhs);
    const double tol = std::numeric_limits<double>::epsilon() * static_cast<double>(lhs.rows());
    const auto d = ldlt.vectorD().cwiseAbs();
    if (ldlt.info() != Eigen::Success || !(d.maxCoeff() > 0.0) || d.minCoeff() <= tol * d.maxCoeff() ||
        !(ldlt.rcond() > tol))
        throw SingularSystem(std::string(what) + " is singular; increase the ridge parameter");
    Eigen::VectorXd x = ldlt.solve(rhs);
    if (!x.allFinite()) throw SingularSystem(std::string(what) + " produced a non-finite solution");
    return x;
}

// x minus its ridge regression on the basis, with the mean removed exactly
// first. A tiny relative ridge keeps functions without support at this step
// from making the system singular.
Eigen::VectorXd project_out(const std::vector<SparseRow>& rows, const Eigen::VectorXd& raw, std::size_t count,
                            double ridge) {
    const Eigen::VectorXd x = centered(raw);
    auto eq = kernels::assemble(rows, {}, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), count);
    ridge = std::max(ridge, 1e-10 * eq.lhs.diagonal().maxCoeff());
    const Eigen::VectorXd c = solve_ridge(std::move(eq.lhs), eq.rhs, ridge, "centering regression");
    Eigen::VectorXd out(x.size());
    for (Eigen::Index u = 0; u < x.size(); ++u) out[u] = x[u] - rows[static_cast<std::size_t>(u)].dot(c);
    return out;
}

// Deviations of Pi_{t+1}, dS_t and S_t from their expectations at t.
struct Deviations {
    Eigen::VectorXd pi, delta, price;
};

Deviations deviations(Eigen::Index t, const CrossSection& cs, const Eigen::VectorXd& pi_next, const OptionSpec& spec,
                      const std::vector<SparseRow>& rows, std::size_t count) {
    if (spec.centering == Centering::CrossSectional)
        return {centered(pi_next), cs.delta_centered().col(t), cs.price_centered().col(t)};
    return {project_out(rows, pi_next, count, spec.ridge), project_out(rows, cs.delta().col(t), count, spec.ridge),
            project_out(rows, cs.prices().col(t), count, spec.ridge)};
}

struct ActionTerms {
    std::vector<double> xi_sq, target;
};

// Xi_u^2 and the D-vector weight per path.
ActionTerms action_terms(Eigen::Index t, const CrossSection& cs, const Deviations& dev, const OptionSpec& spec,
                         Compensation kf) {
    const auto n = static_cast<std::size_t>(cs.paths());
    ActionTerms out{std::vector<double>(n), std::vector<double>(n)};
    const double scale = spec.pure_risk_hedge ? 0.0 : 1.0 / (2.0 * spec.risk_aversion * spec.discount());
    for (Eigen::Index u = 0; u < cs.paths(); ++u) {
        const double k = comp(kf, u);
        const double xi = dev.delta[u] + k * dev.price[u];
        const auto i = static_cast<std::size_t>(u);
        out.xi_sq[i] = xi * xi;
        out.target[i] = scale * (cs.delta()(u, t) + k * cs.prices()(u, t)) + dev.pi[u] * xi;
    }
    return out;
}

}  // namespace

Eigen::VectorXd optimal_action_coeffs(Eigen::Index t, const CrossSection& cs, const Eigen::VectorXd& pi_next,
                                      const OptionSpec& spec, const BasisSet& basis, Compensation kf) {
    check_step(t, cs, pi_next, kf);
    const auto rows = basis_rows(basis, cs.states().col(t));
    const auto terms = action_terms(t, cs, deviations(t, cs, pi_next, spec, rows, basis.count()), spec, kf);
    auto eq = kernels::assemble(rows, terms.xi_sq, terms.target, basis.count());
    return solve_ridge(std::move(eq.lhs), eq.rhs, spec.ridge, "action system");
}

Eigen::VectorXd optimal_action(const Eigen::VectorXd& w, const BasisSet& basis, const Eigen::VectorXd& states) {
    if (static_cast<std::size_t>(w.size()) != basis.count())
        throw std::invalid_argument("coefficient length differs from basis count");
    Eigen::VectorXd a(states.size());
#pragma omp parallel for schedule(static)
    for (Eigen::Index u = 0; u < states.size(); ++u) a[u] = basis.evaluate_sparse(states[u]).dot(w);
    return a;
}

Eigen::VectorXd portfolio_rollback(Eigen::Index t, const Eigen::VectorXd& pi_next, const Eigen::VectorXd& a,
                                   const CrossSection& cs, const OptionSpec& spec, Compensation kf) {
    check_step(t, cs, pi_next, kf);
    if (a.size() != cs.paths()) throw std::invalid_argument("position length differs from path count");
    const double gamma = spec.discount();
    Eigen::VectorXd pi(cs.paths());
    for (Eigen::Index u = 0; u < cs.paths(); ++u)
        pi[u] = gamma * (pi_next[u] - a[u] * cs.delta()(u, t) - comp(kf, u) * a[u] * cs.prices()(u, t));
    return pi;
}

Eigen::VectorXd reward(Eigen::Index t, const Eigen::VectorXd& a, const CrossSection& cs,
                       const Eigen::VectorXd& pi_next, const OptionSpec& spec, Compensation kf,
                       const BasisSet* basis) {
    check_step(t, cs, pi_next, kf);
    if (a.size() != cs.paths()) throw std::invalid_argument("position length differs from path count");
    const double gamma = spec.discount(), eta = spec.risk_aversion;
    const Eigen::Index U = cs.paths();
    Eigen::VectorXd gain(U), resid(U);
    for (Eigen::Index u = 0; u < U; ++u) gain[u] = a[u] * cs.delta()(u, t) + comp(kf, u) * a[u] * cs.prices()(u, t);

    if (spec.centering == Centering::CrossSectional) {
        const Eigen::VectorXd pi_dot = centered(pi_next);
        for (Eigen::Index u = 0; u < U; ++u)
            resid[u] = pi_dot[u] - (a[u] * cs.delta_centered()(u, t) + comp(kf, u) * a[u] * cs.price_centered()(u, t));
    } else {
        if (!basis) throw std::invalid_argument("conditional centering needs a basis");
        resid = project_out(basis_rows(*basis, cs.states().col(t)), pi_next - gain, basis->count(), spec.ridge);
    }
    return gamma * gain.array() - eta * gamma * gamma * resid.array().square();
}

QFit qfit(const Eigen::VectorXd& rewards, const Eigen::VectorXd& q_next, const BasisSet& basis,
          const Eigen::VectorXd& states, const OptionSpec& spec) {
    if (rewards.size() != states.size() || q_next.size() != states.size())
        throw std::invalid_argument("Q-fit inputs differ in length");
    const auto rows = basis_rows(basis, states);
    const Eigen::VectorXd target = rewards + spec.discount() * q_next;
    auto eq = kernels::assemble(rows, {}, std::span<const double>(target.data(), static_cast<std::size_t>(target.size())),
                                basis.count());
    QFit out;
    out.phi = solve_ridge(std::move(eq.lhs), eq.rhs, spec.ridge, "Q-fit system");
    out.q.resize(states.size());
    for (Eigen::Index u = 0; u < states.size(); ++u) out.q[u] = rows[static_cast<std::size_t>(u)].dot(out.phi);
    return out;
}

double action_objective(Eigen::Index t, const Eigen::VectorXd& w, const CrossSection& cs,
                        const Eigen::VectorXd& pi_next, const OptionSpec& spec, const BasisSet& basis,
                        Compensation kf) {
    check_step(t, cs, pi_next, kf);
    const Eigen::VectorXd a = optimal_action(w, basis, cs.states().col(t));
    const auto dev = deviations(t, cs, pi_next, spec, basis_rows(basis, cs.states().col(t)), basis.count());
    const double scale = spec.pure_risk_hedge ? 0.0 : 1.0 / (spec.risk_aversion * spec.discount());
    double j = spec.ridge * w.squaredNorm();
    for (Eigen::Index u = 0; u < cs.paths(); ++u) {
        const double k = comp(kf, u);
        const double resid = dev.pi[u] - a[u] * (dev.delta[u] + k * dev.price[u]);
        j += resid * resid - scale * a[u] * (cs.delta()(u, t) + k * cs.prices()(u, t));
    }
    return j;
}

HedgeSolution price_and_hedge(const CrossSection& cs, const OptionSpec& spec, const HedgeConfig& config) {
    spec.validate();
    if (spec.kappa > 0.0 && !config.impact) throw std::invalid_argument("kappa > 0 needs an impact function");
    const Eigen::Index U = cs.paths(), T = cs.steps();
    if (U < 2) throw InsufficientPaths("pricing needs at least 2 paths");

    HedgeSolution sol{.basis = build_basis(cs.states(), config.basis_count, config.basis_margin)};
    const auto B = static_cast<Eigen::Index>(sol.basis.count());
    sol.positions = PathMatrix::Zero(U, T + 1);
    sol.portfolio.resize(U, T + 1);
    sol.rewards.resize(U, T);
    sol.q.resize(U, T + 1);
    sol.action_coeffs = Eigen::MatrixXd::Zero(B, T + 1);
    sol.q_coeffs.resize(B, T);
    sol.q_mean.resize(T + 1);

    auto term = terminal_init(spec, cs);
    sol.portfolio.col(T) = term.portfolio;
    sol.q.col(T) = term.q;
    sol.payoff_variance = term.payoff_variance;
    sol.q_mean[T] = term.q.mean();

    OptionSpec preliminary = spec;
    preliminary.kappa = 0.0;
    preliminary.pure_risk_hedge = true;

    std::vector<double> kf;
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        const Eigen::VectorXd pi_next = sol.portfolio.col(t + 1);
        const Eigen::VectorXd states = cs.states().col(t);
        kf.clear();
        if (spec.kappa > 0.0) {
            const auto w0 = optimal_action_coeffs(t, cs, pi_next, preliminary, sol.basis);
            const Eigen::VectorXd a0 = optimal_action(w0, sol.basis, states);
            kf.resize(static_cast<std::size_t>(U));
            for (Eigen::Index u = 0; u < U; ++u) {
                const double F = (sol.positions(u, t + 1) - a0[u]) * spec.shares * cs.prices()(u, t);
                kf[static_cast<std::size_t>(u)] = spec.kappa * config.impact(F);
            }
        }
        const auto w = optimal_action_coeffs(t, cs, pi_next, spec, sol.basis, kf);
        const Eigen::VectorXd a = optimal_action(w, sol.basis, states);
        sol.action_coeffs.col(t) = w;
        sol.positions.col(t) = a;
        sol.portfolio.col(t) = portfolio_rollback(t, pi_next, a, cs, spec, kf);
        sol.rewards.col(t) = reward(t, a, cs, pi_next, spec, kf, &sol.basis);
        auto fit = qfit(sol.rewards.col(t), sol.q.col(t + 1), sol.basis, states, spec);
        sol.q_coeffs.col(t) = fit.phi;
        sol.q.col(t) = fit.q;
        sol.q_mean[t] = fit.q.mean();
    }
    sol.price = -sol.q.col(0).mean();
    return sol;
}

void write_hedge_json(std::ostream& out, const HedgeSolution& sol, const OptionSpec& spec) {
    using nlohmann::json;
    auto matrix = [](const Eigen::MatrixXd& m) {
        json rows = json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            json r = json::array();
            for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
            rows.push_back(std::move(r));
        }
        return rows;
    };
    json j;
    j["format"] = "pihedge.hedge";
    j["option"] = {{"kind", to_string(spec.kind)},
                   {"strike", spec.strike},
                   {"maturity_slots", spec.maturity_slots},
                   {"shares", spec.shares},
                   {"rate_per_slot", spec.rate},
                   {"discount", spec.discount()},
                   {"risk_aversion", spec.risk_aversion},
                   {"pure_risk_hedge", spec.pure_risk_hedge},
                   {"kappa", spec.kappa},
                   {"drift_mu", spec.drift_mu},
                   {"vol_sigma", spec.vol_sigma},
                   {"ridge", spec.ridge},
                   {"centering", spec.centering == Centering::Conditional ? "conditional" : "cross_sectional"}};
    j["paths"] = sol.positions.rows();
    j["basis"] = {{"count", sol.basis.count()}, {"knots", sol.basis.knots()}};
    j["price"] = sol.price;
    j["price_total"] = sol.price * spec.shares;
    j["risk_charge_eta"] = spec.risk_aversion;
    j["payoff_variance"] = sol.payoff_variance;
    j["q_mean"] = std::vector<double>(sol.q_mean.data(), sol.q_mean.data() + sol.q_mean.size());
    j["mean_position"] = std::vector<double>();
    for (Eigen::Index t = 0; t < sol.positions.cols(); ++t) j["mean_position"].push_back(sol.positions.col(t).mean());
    j["action_coeffs"] = matrix(sol.action_coeffs.transpose());
    j["q_coeffs"] = matrix(sol.q_coeffs.transpose());
    out << j.dump(2) << '\n';
}

}  // namespace pihedge
