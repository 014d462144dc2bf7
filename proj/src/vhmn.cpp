#include "pihedge/vhmn.hpp"

#include "pihedge/error.hpp"
#include "pihedge/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace pihedge {

Quantizer::Quantizer(double lo_, double hi_, std::size_t bins_) : lo(lo_), hi(hi_), bins(bins_) {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
        throw std::invalid_argument("quantizer needs finite bounds with lo < hi");
    if (bins < 2) throw std::invalid_argument("quantizer needs at least 2 bins");
}

Quantizer Quantizer::fit(std::span<const double> values, std::size_t bins) {
    if (values.empty()) throw std::invalid_argument("cannot fit a quantizer to no values");
    auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    double a = *lo, b = *hi;
    if (!(a < b)) {
        a -= 0.5;
        b += 0.5;
    }
    return Quantizer(a, b, bins);
}

std::size_t Quantizer::encode(double s) const {
    const double cell = std::floor((s - lo) / width());
    if (!(cell > 0.0)) return 0;  // also catches NaN
    if (cell >= static_cast<double>(bins - 1)) return bins - 1;
    return static_cast<std::size_t>(cell);
}

double Quantizer::decode(std::size_t index) const {
    if (index >= bins) throw std::out_of_range("quantizer index out of range");
    return lo + (static_cast<double>(index) + 0.5) * width();
}

namespace {

bool row_stochastic(const RowMatrix& m, double tol) {
    if ((m.array() < 0.0).any() || !m.allFinite()) return false;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        if (std::abs(m.row(r).sum() - 1.0) > tol) return false;
    return true;
}

void normalise_row(Eigen::Ref<Eigen::RowVectorXd> row) {
    const double s = row.sum();
    if (s > 0.0 && std::isfinite(s)) {
        row /= s;
    } else {
        row.setConstant(1.0 / static_cast<double>(row.size()));
    }
}

inline double emission(const VhmnParams& g, std::size_t i, std::size_t s, std::size_t o) {
    return g.B(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) *
           g.C(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(o));
}

std::size_t draw(const Eigen::Ref<const Eigen::RowVectorXd>& row, double u) {
    double acc = 0.0;
    std::size_t last = 0;
    for (Eigen::Index k = 0; k < row.size(); ++k) {
        if (row[k] <= 0.0) continue;
        acc += row[k];
        last = static_cast<std::size_t>(k);
        if (u < acc) return last;
    }
    return last;  // rounding left u at or above the final cumulative sum
}

}  // namespace

bool VhmnParams::is_stochastic(double tol) const {
    const auto J = A.rows();
    if (A.cols() != J || B.rows() != J || C.rows() != B.cols() || Z.size() != J || J == 0) return false;
    if (!row_stochastic(A, tol) || !row_stochastic(B, tol) || !row_stochastic(C, tol)) return false;
    if ((Z.array() < 0.0).any() || std::abs(Z.sum() - 1.0) > tol) return false;
    return true;
}

void VhmnParams::validate(double tol) const {
    if (!is_stochastic(tol)) throw std::invalid_argument("VHMN parameters are not row-stochastic");
}

VhmnParams VhmnParams::uniform(std::size_t J, std::size_t K, std::size_t L) {
    const auto j = static_cast<Eigen::Index>(J), k = static_cast<Eigen::Index>(K), l = static_cast<Eigen::Index>(L);
    return {RowMatrix::Constant(j, j, 1.0 / static_cast<double>(J)),
            RowMatrix::Constant(j, k, 1.0 / static_cast<double>(K)),
            RowMatrix::Constant(k, l, 1.0 / static_cast<double>(L)),
            Eigen::VectorXd::Constant(j, 1.0 / static_cast<double>(J))};
}

void SequencePair::validate(std::size_t K, std::size_t L) const {
    if (S.size() != O.size()) throw std::invalid_argument("visible and observation sequences differ in length");
    if (S.empty()) throw std::invalid_argument("empty sequence");
    for (auto s : S)
        if (s >= K) throw std::invalid_argument("visible index out of range");
    for (auto o : O)
        if (o >= L) throw std::invalid_argument("observation index out of range");
}

Trellis forward(const VhmnParams& g, const SequencePair& seq) {
    seq.validate(g.visible(), g.observed());
    const auto T = static_cast<Eigen::Index>(seq.size());
    const auto J = static_cast<Eigen::Index>(g.hidden());
    Trellis tr;
    tr.alpha.resize(T, J);
    tr.scale.resize(T);
    tr.log_likelihood = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
        const auto s = seq.S[static_cast<std::size_t>(t)], o = seq.O[static_cast<std::size_t>(t)];
        for (Eigen::Index i = 0; i < J; ++i) {
            double prior = 0.0;
            if (t == 0) {
                prior = g.Z[i];
            } else {
                for (Eigen::Index j = 0; j < J; ++j) prior += tr.alpha(t - 1, j) * g.A(j, i);
            }
            tr.alpha(t, i) = prior * emission(g, static_cast<std::size_t>(i), s, o);
        }
        const double c = tr.alpha.row(t).sum();
        if (!(c > 0.0) || !std::isfinite(c)) throw ImpossibleSequence(static_cast<std::size_t>(t));
        tr.alpha.row(t) /= c;
        tr.scale[t] = 1.0 / c;
        tr.log_likelihood += std::log(c);
    }
    return tr;
}

void backward(const VhmnParams& g, const SequencePair& seq, Trellis& tr) {
    const auto T = static_cast<Eigen::Index>(seq.size());
    const auto J = static_cast<Eigen::Index>(g.hidden());
    if (tr.scale.size() != T) throw std::invalid_argument("trellis does not match the sequence");
    tr.beta.resize(T, J);
    tr.beta.row(T - 1).setOnes();
    Eigen::VectorXd e(J);
    for (Eigen::Index t = T - 2; t >= 0; --t) {
        const auto s = seq.S[static_cast<std::size_t>(t + 1)], o = seq.O[static_cast<std::size_t>(t + 1)];
        for (Eigen::Index j = 0; j < J; ++j)
            e[j] = emission(g, static_cast<std::size_t>(j), s, o) * tr.beta(t + 1, j) * tr.scale[t + 1];
        for (Eigen::Index i = 0; i < J; ++i) tr.beta(t, i) = g.A.row(i).dot(e.transpose());
    }
}

Trellis forward_backward(const VhmnParams& g, const SequencePair& seq) {
    Trellis tr = forward(g, seq);
    backward(g, seq, tr);
    return tr;
}

Posteriors posteriors(const Trellis& tr, const VhmnParams& g, const SequencePair& seq) {
    const auto T = static_cast<Eigen::Index>(seq.size());
    const auto J = static_cast<Eigen::Index>(g.hidden());
    Posteriors p;
    p.gamma1.resize(T, J);
    p.digamma.reserve(static_cast<std::size_t>(std::max<Eigen::Index>(T - 1, 0)));
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
        const auto s = seq.S[static_cast<std::size_t>(t + 1)], o = seq.O[static_cast<std::size_t>(t + 1)];
        RowMatrix xi(J, J);
        for (Eigen::Index i = 0; i < J; ++i)
            for (Eigen::Index j = 0; j < J; ++j)
                xi(i, j) = tr.alpha(t, i) * g.A(i, j) * emission(g, static_cast<std::size_t>(j), s, o) *
                           tr.beta(t + 1, j) * tr.scale[t + 1];
        p.gamma1.row(t) = xi.rowwise().sum().transpose();
        p.digamma.push_back(std::move(xi));
    }
    p.gamma1.row(T - 1) = tr.alpha.row(T - 1) / tr.alpha.row(T - 1).sum();
    return p;
}

VhmnParams reestimate(const Posteriors& post, const SequencePair& seq, std::size_t K, std::size_t L) {
    const auto T = post.gamma1.rows();
    const auto J = post.gamma1.cols();
    const auto k = static_cast<Eigen::Index>(K), l = static_cast<Eigen::Index>(L);
    VhmnParams out;

    out.Z = post.gamma1.row(0).transpose();
    {
        Eigen::RowVectorXd z = out.Z.transpose();
        normalise_row(z);
        out.Z = z.transpose();
    }

    out.A = RowMatrix::Zero(J, J);
    Eigen::VectorXd from = Eigen::VectorXd::Zero(J);
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
        out.A += post.digamma[static_cast<std::size_t>(t)];
        from += post.gamma1.row(t).transpose();
    }
    for (Eigen::Index i = 0; i < J; ++i) {
        if (from[i] > 0.0) {
            out.A.row(i) /= from[i];
            normalise_row(out.A.row(i));
        } else {
            out.A.row(i).setConstant(1.0 / static_cast<double>(J));
        }
    }

    out.B = RowMatrix::Zero(J, k);
    for (Eigen::Index t = 0; t < T; ++t)
        out.B.col(static_cast<Eigen::Index>(seq.S[static_cast<std::size_t>(t)])) += post.gamma1.row(t).transpose();
    const Eigen::VectorXd occupancy = post.gamma1.colwise().sum().transpose();
    for (Eigen::Index i = 0; i < J; ++i) {
        if (occupancy[i] > 0.0) {
            out.B.row(i) /= occupancy[i];
            normalise_row(out.B.row(i));
        } else {
            out.B.row(i).setConstant(1.0 / static_cast<double>(K));
        }
    }

    out.C = RowMatrix::Zero(k, l);
    for (Eigen::Index t = 0; t < T; ++t)
        out.C(static_cast<Eigen::Index>(seq.S[static_cast<std::size_t>(t)]),
              static_cast<Eigen::Index>(seq.O[static_cast<std::size_t>(t)])) += 1.0;
    for (Eigen::Index r = 0; r < k; ++r) normalise_row(out.C.row(r));
    return out;
}

VhmnParams dirichlet_init(std::size_t J, std::size_t K, std::size_t L, double alpha, std::uint64_t seed) {
    if (!(alpha > 0.0)) throw std::invalid_argument("Dirichlet concentration must be positive");
    Rng rng(seed);
    std::gamma_distribution<double> gd(alpha, 1.0);
    auto fill = [&](RowMatrix& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = gd(rng);
            normalise_row(m.row(r));
        }
    };
    VhmnParams p;
    p.A.resize(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(J));
    p.B.resize(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(K));
    p.C.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(L));
    fill(p.A);
    fill(p.B);
    fill(p.C);
    Eigen::RowVectorXd z(static_cast<Eigen::Index>(J));
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = gd(rng);
    normalise_row(z);
    p.Z = z.transpose();
    return p;
}

FitResult fit_single(const SequencePair& seq, const FitOptions& opt, std::uint64_t seed,
                     const FitObserver& observer, std::size_t restart_index) {
    if (opt.hidden < 1) throw std::invalid_argument("at least one hidden state is required");
    seq.validate(opt.visible, opt.observed);

    FitResult res;
    Trellis tr;
    bool ready = false;
    for (std::size_t attempt = 0; attempt <= opt.init_retries && !ready; ++attempt) {
        res.params = dirichlet_init(opt.hidden, opt.visible, opt.observed, opt.dirichlet_alpha,
                                    stream_seed(seed, attempt));
        try {
            tr = forward_backward(res.params, seq);
            ready = true;
        } catch (const ImpossibleSequence&) {
        }
    }
    if (!ready) throw ImpossibleSequence(0);

    for (std::size_t iter = 0;; ++iter) {
        const double ll = tr.log_likelihood;
        res.trace.push_back(ll);
        if (observer) {
#pragma omp critical(pihedge_vhmn_observer)
            observer(restart_index, iter, res.params, ll);
        }
        if (res.trace.size() > 1 && ll - res.trace[res.trace.size() - 2] < opt.tol) {
            res.converged = true;
            break;
        }
        if (iter >= opt.max_iters) break;
        res.params = reestimate(posteriors(tr, res.params, seq), seq, opt.visible, opt.observed);
        tr = forward_backward(res.params, seq);
    }
    res.iterations = res.trace.size() - (res.converged ? 2 : 1);
    res.restarts.push_back({seed, res.trace, res.converged});
    return res;
}

FitResult fit(const SequencePair& seq, const FitOptions& opt, const FitObserver& observer) {
    const std::size_t n = std::max<std::size_t>(opt.restarts, 1);
    std::vector<FitResult> runs(n);
    std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(n); ++r) {
        const auto idx = static_cast<std::size_t>(r);
        try {
            runs[idx] = fit_single(seq, opt, stream_seed(opt.rng_seed, idx), observer, idx);
        } catch (const std::exception& e) {
            errors[idx] = e.what();
        }
    }
    std::size_t best = n;
    for (std::size_t r = 0; r < n; ++r) {
        if (!errors[r].empty()) continue;
        if (best == n || runs[r].trace.back() > runs[best].trace.back()) best = r;
    }
    if (best == n) throw Error("every VHMN restart failed: " + errors[0]);
    FitResult out = runs[best];
    out.best_restart = best;
    out.restarts.clear();
    for (std::size_t r = 0; r < n; ++r) {
        if (errors[r].empty()) out.restarts.push_back(runs[r].restarts.front());
        else out.restarts.push_back({stream_seed(opt.rng_seed, r), {}, false});
    }
    return out;
}

SampledPath sample_path(const VhmnParams& g, std::size_t T, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SampledPath p;
    p.H.resize(T);
    p.S.resize(T);
    p.O.resize(T);
    if (T == 0) return p;
    const Eigen::RowVectorXd z = g.Z.transpose();
    std::size_t h = draw(z, u(rng));
    for (std::size_t t = 0; t < T; ++t) {
        p.H[t] = h;
        p.S[t] = draw(g.B.row(static_cast<Eigen::Index>(h)), u(rng));
        p.O[t] = draw(g.C.row(static_cast<Eigen::Index>(p.S[t])), u(rng));
        if (t + 1 < T) h = draw(g.A.row(static_cast<Eigen::Index>(h)), u(rng));
    }
    return p;
}

EncodedEpisode encode_episode(std::span<const double> opens, std::span<const double> decisions,
                              std::size_t K, std::size_t L) {
    if (opens.size() != decisions.size()) throw std::invalid_argument("opens and decisions differ in length");
    EncodedEpisode e{{}, Quantizer::fit(opens, K), Quantizer::fit(decisions, L)};
    e.seq.S.reserve(opens.size());
    e.seq.O.reserve(decisions.size());
    for (double o : opens) e.seq.S.push_back(e.visible.encode(o));
    for (double d : decisions) e.seq.O.push_back(e.observation.encode(d));
    return e;
}

namespace {

nlohmann::json matrix_json(const RowMatrix& m) {
    return {{"rows", m.rows()},
            {"cols", m.cols()},
            {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

RowMatrix matrix_from(const nlohmann::json& j) {
    const auto r = j.at("rows").get<Eigen::Index>(), c = j.at("cols").get<Eigen::Index>();
    auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != r * c) throw Error("matrix data has the wrong length");
    return Eigen::Map<RowMatrix>(data.data(), r, c);
}

nlohmann::json quantizer_json(const Quantizer& q) { return {{"min", q.lo}, {"max", q.hi}, {"bins", q.bins}}; }

Quantizer quantizer_from(const nlohmann::json& j) {
    return Quantizer(j.at("min").get<double>(), j.at("max").get<double>(), j.at("bins").get<std::size_t>());
}

}  // namespace

std::string save_vhmn_json(const VhmnModel& m) {
    nlohmann::json j;
    j["format"] = "pihedge.vhmn";
    j["version"] = 1;
    j["dims"] = {{"J", m.params.hidden()}, {"K", m.params.visible()}, {"L", m.params.observed()}};
    j["A"] = matrix_json(m.params.A);
    j["B"] = matrix_json(m.params.B);
    j["C"] = matrix_json(m.params.C);
    j["Z"] = std::vector<double>(m.params.Z.data(), m.params.Z.data() + m.params.Z.size());
    j["visible_quantizer"] = quantizer_json(m.visible);
    j["observation_quantizer"] = quantizer_json(m.observation);
    return j.dump(1) + "\n";
}

VhmnModel load_vhmn_json(const std::string& text) {
    try {
        auto j = nlohmann::json::parse(text);
        if (j.at("format") != "pihedge.vhmn") throw Error("not a pihedge.vhmn document");
        VhmnModel m;
        m.params.A = matrix_from(j.at("A"));
        m.params.B = matrix_from(j.at("B"));
        m.params.C = matrix_from(j.at("C"));
        auto z = j.at("Z").get<std::vector<double>>();
        m.params.Z = Eigen::Map<Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
        m.visible = quantizer_from(j.at("visible_quantizer"));
        m.observation = quantizer_from(j.at("observation_quantizer"));
        const auto& dims = j.at("dims");
        if (dims.at("J").get<std::size_t>() != m.params.hidden() || dims.at("K").get<std::size_t>() != m.params.visible() ||
            dims.at("L").get<std::size_t>() != m.params.observed() || m.visible.bins != m.params.visible() ||
            m.observation.bins != m.params.observed())
            throw Error("VHMN dimensions are inconsistent");
        m.params.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed vhmn JSON: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw Error(std::string("malformed vhmn JSON: ") + e.what());
    }
}

}  // namespace pihedge
