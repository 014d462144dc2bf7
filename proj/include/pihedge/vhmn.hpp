#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace pihedge {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Uniform binning of [lo, hi] into `bins` cells. Values outside clamp to the
// end cells.
struct Quantizer {
    double lo = 0.0;
    double hi = 1.0;
    std::size_t bins = 2;

    Quantizer() = default;
    Quantizer(double lo, double hi, std::size_t bins);

    /// Bounds from the sample range; a constant sample gets a unit-width window.
    static Quantizer fit(std::span<const double> values, std::size_t bins);

    std::size_t encode(double s) const;
    double decode(std::size_t index) const;  // bin midpoint; throws on out-of-range
    double width() const { return (hi - lo) / static_cast<double>(bins); }

    bool operator==(const Quantizer&) const = default;
};

// Hidden chain h -> visible state s -> observation o.
//   A (J x J): hidden transitions, B (J x K): visible given hidden,
//   C (K x L): observation given visible, Z (J): initial hidden distribution.
struct VhmnParams {
    RowMatrix A;
    RowMatrix B;
    RowMatrix C;
    Eigen::VectorXd Z;

    std::size_t hidden() const { return static_cast<std::size_t>(A.rows()); }
    std::size_t visible() const { return static_cast<std::size_t>(B.cols()); }
    std::size_t observed() const { return static_cast<std::size_t>(C.cols()); }

    /// Shapes agree, entries are non-negative, rows sum to 1 within tol.
    bool is_stochastic(double tol = 1e-12) const;
    void validate(double tol = 1e-9) const;

    static VhmnParams uniform(std::size_t J, std::size_t K, std::size_t L);
};

struct SequencePair {
    std::vector<std::size_t> S;  // visible indices
    std::vector<std::size_t> O;  // observation indices

    std::size_t size() const { return S.size(); }
    void validate(std::size_t K, std::size_t L) const;
};

// Scaled forward/backward quantities. With c_t the per-step normaliser,
// scale[t] = 1 / c_t, alpha[t] sums to one and sum_i alpha[t][i]*beta[t][i] = 1
// for every t; P(S,O) = prod_t c_t.
struct Trellis {
    RowMatrix alpha;  // T x J
    RowMatrix beta;   // T x J
    Eigen::VectorXd scale;
    double log_likelihood = 0.0;
};

/// Scaled forward recursion. Throws ImpossibleSequence naming the first
/// step whose total probability is zero.
Trellis forward(const VhmnParams& gamma, const SequencePair& seq);

/// Fills trellis.beta using the scale factors of a prior forward() call.
void backward(const VhmnParams& gamma, const SequencePair& seq, Trellis& trellis);

Trellis forward_backward(const VhmnParams& gamma, const SequencePair& seq);

struct Posteriors {
    std::vector<RowMatrix> digamma;  // T-1 matrices J x J: P(h_t=i, h_{t+1}=j | S,O)
    RowMatrix gamma1;                // T x J: P(h_t=i | S,O)
};

Posteriors posteriors(const Trellis& trellis, const VhmnParams& gamma, const SequencePair& seq);

/// M-step. Rows without posterior mass (or unvisited visible states for C)
/// are reset to uniform.
VhmnParams reestimate(const Posteriors& post, const SequencePair& seq, std::size_t K, std::size_t L);

struct FitOptions {
    std::size_t hidden = 2;
    std::size_t visible = 30;
    std::size_t observed = 30;
    double dirichlet_alpha = 1000.0;
    std::uint64_t rng_seed = 0;
    std::size_t max_iters = 500;
    double tol = 1e-6;
    std::size_t restarts = 5;
    std::size_t init_retries = 10;
};

struct RestartResult {
    std::uint64_t seed = 0;
    std::vector<double> trace;
    bool converged = false;
};

struct FitResult {
    VhmnParams params;
    std::vector<double> trace;  // log-likelihood before each re-estimation, last entry final
    std::size_t iterations = 0;  // re-estimation steps before the stopping test fired
    bool converged = false;
    std::size_t best_restart = 0;
    std::vector<RestartResult> restarts;
};

// Called after every likelihood evaluation of a single restart.
using FitObserver = std::function<void(std::size_t restart, std::size_t iteration,
                                       const VhmnParams& params, double log_likelihood)>;

/// Symmetric Dirichlet(alpha) draw for every row of A, B, C and for Z.
VhmnParams dirichlet_init(std::size_t J, std::size_t K, std::size_t L, double alpha, std::uint64_t seed);

/// EM from a single initialisation.
FitResult fit_single(const SequencePair& seq, const FitOptions& options, std::uint64_t seed,
                     const FitObserver& observer = {}, std::size_t restart_index = 0);

/// EM with `options.restarts` Dirichlet restarts (run in parallel); keeps the
/// restart with the highest final log-likelihood.
FitResult fit(const SequencePair& seq, const FitOptions& options, const FitObserver& observer = {});

struct SampledPath {
    std::vector<std::size_t> H, S, O;
};

/// h_0 ~ Z; s_t ~ B[h_t]; o_t ~ C[s_t]; h_{t+1} ~ A[h_t].
SampledPath sample_path(const VhmnParams& gamma, std::size_t T, std::uint64_t seed);

/// Visible states from open prices and observations from decisions, each
/// binned over its own sample range.
struct EncodedEpisode {
    SequencePair seq;
    Quantizer visible;
    Quantizer observation;
};
EncodedEpisode encode_episode(std::span<const double> opens, std::span<const double> decisions,
                              std::size_t K, std::size_t L);

struct VhmnModel {
    VhmnParams params;
    Quantizer visible;
    Quantizer observation;
};

std::string save_vhmn_json(const VhmnModel& model);
VhmnModel load_vhmn_json(const std::string& text);

}  // namespace pihedge
