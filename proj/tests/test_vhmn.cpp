#include <doctest.h>

#include "pihedge/error.hpp"
#include "pihedge/market_data.hpp"
#include "pihedge/vhmn.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace pihedge;

namespace {

VhmnParams random_params(std::size_t J, std::size_t K, std::size_t L, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    auto fill = [&](RowMatrix& m, Eigen::Index r, Eigen::Index c) {
        m.resize(r, c);
        for (Eigen::Index i = 0; i < r; ++i) {
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
            m.row(i) /= m.row(i).sum();
        }
    };
    VhmnParams p;
    fill(p.A, J, J);
    fill(p.B, J, K);
    fill(p.C, K, L);
    p.Z.resize(J);
    for (auto& z : p.Z) z = u(rng);
    p.Z /= p.Z.sum();
    return p;
}

double emission(const VhmnParams& g, std::size_t h, std::size_t s, std::size_t o) {
    return g.B(h, s) * g.C(s, o);
}

// Sum over every hidden sequence of the joint probability; optionally
// restricted to h_0 = first and/or h_1 = second.
double brute_joint(const VhmnParams& g, const SequencePair& seq, long first = -1, long second = -1) {
    const std::size_t J = g.hidden(), T = seq.size();
    std::vector<std::size_t> h(T, 0);
    double total = 0.0;
    while (true) {
        if ((first < 0 || h[0] == static_cast<std::size_t>(first)) &&
            (second < 0 || (T > 1 && h[1] == static_cast<std::size_t>(second)))) {
            double p = g.Z[h[0]] * emission(g, h[0], seq.S[0], seq.O[0]);
            for (std::size_t t = 1; t < T; ++t) p *= g.A(h[t - 1], h[t]) * emission(g, h[t], seq.S[t], seq.O[t]);
            total += p;
        }
        std::size_t k = 0;
        while (k < T && ++h[k] == J) h[k++] = 0;
        if (k == T) break;
    }
    return total;
}

SequencePair random_seq(std::size_t T, std::size_t K, std::size_t L, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SequencePair s;
    for (std::size_t t = 0; t < T; ++t) {
        s.S.push_back(rng() % K);
        s.O.push_back(rng() % L);
    }
    return s;
}

VhmnParams known_gamma() {
    VhmnParams g;
    g.A.resize(2, 2);
    g.A << 0.9, 0.1, 0.2, 0.8;
    g.B.resize(2, 4);
    g.B << 0.6, 0.3, 0.05, 0.05, 0.05, 0.05, 0.3, 0.6;
    g.C.resize(4, 4);
    g.C << 0.7, 0.1, 0.1, 0.1, 0.1, 0.7, 0.1, 0.1, 0.1, 0.1, 0.7, 0.1, 0.1, 0.1, 0.1, 0.7;
    g.Z.resize(2);
    g.Z << 0.5, 0.5;
    return g;
}

SequencePair to_pair(const SampledPath& p) { return {p.S, p.O}; }

}  // namespace

TEST_CASE("quantizer examples") {
    Quantizer q(0, 30, 30);
    CHECK(q.encode(15) == 15);
    CHECK(q.encode(0) == 0);
    CHECK(q.encode(30) == 29);
    CHECK(q.encode(-100) == 0);
    CHECK(q.encode(1e9) == 29);
    CHECK(q.decode(15) == doctest::Approx(15.5));
    Quantizer sym(-10, 10, 4);
    CHECK(sym.encode(-10) == 0);
    CHECK(sym.decode(0) == doctest::Approx(-7.5));
    CHECK_THROWS(sym.decode(4));
    for (std::size_t i = 0; i < 30; ++i) CHECK(q.encode(q.decode(i)) == i);
    for (std::size_t i = 0; i < 4; ++i) CHECK(sym.encode(sym.decode(i)) == i);
    const std::vector<double> flat{3.0, 3.0};
    auto f = Quantizer::fit(flat, 5);
    CHECK(f.hi > f.lo);
    CHECK(f.encode(3.0) < 5);
}

TEST_CASE("forward with one hidden state collapses to emissions") {
    auto g = random_params(1, 3, 4, 1);
    auto seq = random_seq(6, 3, 4, 2);
    double expect = 0.0;
    for (std::size_t t = 0; t < seq.size(); ++t) expect += std::log(emission(g, 0, seq.S[t], seq.O[t]));
    CHECK(forward(g, seq).log_likelihood == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("forward matches exhaustive enumeration") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        auto g = random_params(2, 2, 2, 10 + s);
        auto seq = random_seq(2, 2, 2, 20 + s);
        CHECK(std::exp(forward(g, seq).log_likelihood) == doctest::Approx(brute_joint(g, seq)).epsilon(1e-12));
    }
    auto g = random_params(3, 4, 3, 7);
    auto seq = random_seq(8, 4, 3, 8);  // 3^8 hidden sequences
    CHECK(forward(g, seq).log_likelihood == doctest::Approx(std::log(brute_joint(g, seq))).epsilon(1e-10));
}

TEST_CASE("impossible sequence names the step") {
    auto g = random_params(2, 2, 2, 3);
    g.B.col(0).setZero();
    g.B.col(1).setOnes();
    SequencePair seq{{0, 1}, {0, 0}};
    try {
        forward(g, seq);
        FAIL("expected an impossible sequence");
    } catch (const ImpossibleSequence& e) {
        CHECK(e.step() == 0);
    }
}

TEST_CASE("backward pass") {
    auto g = random_params(2, 3, 3, 4);
    SequencePair one{{1}, {2}};
    auto tr = forward_backward(g, one);
    CHECK(tr.beta(0, 0) == doctest::Approx(1.0));
    CHECK(tr.beta(0, 1) == doctest::Approx(1.0));

    auto seq = random_seq(3, 3, 3, 5);
    tr = forward_backward(g, seq);
    for (Eigen::Index t = 0; t < 3; ++t)
        CHECK(tr.alpha.row(t).dot(tr.beta.row(t)) == doctest::Approx(1.0).epsilon(1e-9));
    // unscaled beta_0(i) from enumeration, up to the common scale factor
    const double p = brute_joint(g, seq);
    for (std::size_t i = 0; i < 2; ++i) {
        const double head = g.Z[i] * emission(g, i, seq.S[0], seq.O[0]);
        const double beta0 = brute_joint(g, seq, static_cast<long>(i)) / head;
        CHECK(tr.alpha(0, i) * tr.beta(0, i) == doctest::Approx(head * beta0 / p).epsilon(1e-12));
    }
}

TEST_CASE("posteriors") {
    auto g = random_params(2, 2, 2, 6);
    auto seq = random_seq(2, 2, 2, 9);
    auto post = posteriors(forward_backward(g, seq), g, seq);
    const double p = brute_joint(g, seq);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(post.digamma[0](i, j) ==
                  doctest::Approx(brute_joint(g, seq, static_cast<long>(i), static_cast<long>(j)) / p).epsilon(1e-12));

    auto g3 = random_params(3, 5, 4, 12);
    auto long_seq = random_seq(40, 5, 4, 13);
    auto post3 = posteriors(forward_backward(g3, long_seq), g3, long_seq);
    for (Eigen::Index t = 0; t < 40; ++t) CHECK(post3.gamma1.row(t).sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t t = 0; t < 39; ++t)
        for (Eigen::Index i = 0; i < 3; ++i)
            CHECK(post3.digamma[t].row(i).sum() == doctest::Approx(post3.gamma1(static_cast<Eigen::Index>(t), i)).epsilon(1e-12));
}

TEST_CASE("reestimate keeps rows stochastic and defaults unvisited rows") {
    auto g = random_params(3, 5, 4, 14);
    auto seq = random_seq(50, 5, 4, 15);
    auto next = reestimate(posteriors(forward_backward(g, seq), g, seq), seq, 5, 4);
    CHECK(next.is_stochastic(1e-12));

    Posteriors p;
    p.gamma1 = RowMatrix::Zero(3, 2);
    p.gamma1.col(0).setOnes();
    RowMatrix d = RowMatrix::Zero(2, 2);
    d(0, 0) = 1.0;
    p.digamma = {d, d};
    SequencePair s{{0, 1, 0}, {1, 1, 0}};
    auto r = reestimate(p, s, 3, 2);
    CHECK(r.Z[0] == doctest::Approx(1.0));
    CHECK(r.A(0, 0) == doctest::Approx(1.0));
    CHECK(r.A(1, 0) == doctest::Approx(0.5));
    CHECK(r.B(1, 2) == doctest::Approx(1.0 / 3.0));
    CHECK(r.C(2, 0) == doctest::Approx(0.5));  // visible state 2 never visited
    CHECK(r.C(0, 1) == doctest::Approx(0.5));
    CHECK(r.is_stochastic(1e-12));
}

TEST_CASE("observation matrix recovered from a long sample") {
    const auto g = known_gamma();
    auto seq = to_pair(sample_path(g, 100000, 42));
    auto start = random_params(2, 4, 4, 1);
    auto est = reestimate(posteriors(forward_backward(start, seq), start, seq), seq, 4, 4);
    CHECK((est.C - g.C).cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("sampled frequencies follow the parameters") {
    const auto g = known_gamma();
    auto path = sample_path(g, 100000, 77);
    RowMatrix a = RowMatrix::Zero(2, 2), b = RowMatrix::Zero(2, 4), c = RowMatrix::Zero(4, 4);
    for (std::size_t t = 0; t < path.H.size(); ++t) {
        b(path.H[t], path.S[t]) += 1;
        c(path.S[t], path.O[t]) += 1;
        if (t + 1 < path.H.size()) a(path.H[t], path.H[t + 1]) += 1;
    }
    for (auto* m : {&a, &b, &c})
        for (Eigen::Index i = 0; i < m->rows(); ++i) m->row(i) /= m->row(i).sum();
    CHECK((a - g.A).cwiseAbs().maxCoeff() < 1e-2);
    CHECK((b - g.B).cwiseAbs().maxCoeff() < 1e-2);
    CHECK((c - g.C).cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("deterministic parameters give determined sequences") {
    VhmnParams g;
    g.A.resize(2, 2);
    g.A << 0, 1, 1, 0;
    g.B.resize(2, 2);
    g.B << 1, 0, 0, 1;
    g.C.resize(2, 3);
    g.C << 0, 0, 1, 1, 0, 0;
    g.Z.resize(2);
    g.Z << 1, 0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto p = sample_path(g, 6, seed);
        CHECK(p.H == std::vector<std::size_t>{0, 1, 0, 1, 0, 1});
        CHECK(p.S == std::vector<std::size_t>{0, 1, 0, 1, 0, 1});
        CHECK(p.O == std::vector<std::size_t>{2, 0, 2, 0, 2, 0});
    }
}

TEST_CASE("EM is monotone, deterministic and reaches the generator likelihood") {
    const auto g = known_gamma();
    auto seq = to_pair(sample_path(g, 5000, 9));
    FitOptions opt;
    opt.hidden = 2;
    opt.visible = 4;
    opt.observed = 4;
    opt.rng_seed = 5;
    opt.dirichlet_alpha = 1.0;
    auto fit1 = fit(seq, opt);
    for (std::size_t i = 1; i < fit1.trace.size(); ++i) CHECK(fit1.trace[i] >= fit1.trace[i - 1] - 1e-9);
    CHECK(fit1.params.is_stochastic(1e-12));
    const double generator = forward(g, seq).log_likelihood;
    CHECK(fit1.trace.back() >= generator - 1e-3 * 5000);
    auto fit2 = fit(seq, opt);
    CHECK(fit2.trace == fit1.trace);
    CHECK(fit2.best_restart == fit1.best_restart);
}

TEST_CASE("one hidden state converges in one step to frequencies") {
    auto seq = random_seq(200, 3, 3, 31);
    FitOptions opt;
    opt.hidden = 1;
    opt.visible = 3;
    opt.observed = 3;
    opt.restarts = 2;
    auto r = fit(seq, opt);
    CHECK(r.converged);
    CHECK(r.iterations == 1);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(3);
    for (auto s : seq.S) counts[static_cast<Eigen::Index>(s)] += 1;
    for (Eigen::Index k = 0; k < 3; ++k) CHECK(r.params.B(0, k) == doctest::Approx(counts[k] / 200.0));
}

TEST_CASE("json round trip") {
    VhmnModel m{random_params(2, 5, 4, 8), Quantizer(-3.5, 7.25, 5), Quantizer(-1e6, 2e6, 4)};
    auto back = load_vhmn_json(save_vhmn_json(m));
    CHECK(back.params.A == m.params.A);
    CHECK(back.params.B == m.params.B);
    CHECK(back.params.C == m.params.C);
    CHECK(back.params.Z == m.params.Z);
    CHECK(back.visible == m.visible);
    CHECK(back.observation == m.observation);
}

TEST_CASE("volatile fixture day samples more volatile decisions") {
    auto eps = load_ohlcv_csv_file(std::string(PIHEDGE_SOURCE_DIR) + "/tests/data/fixture.csv");
    auto variance_for = [](const Episode& ep) {
        std::vector<double> opens, decisions;
        for (const auto& b : modeled_bars(ep)) {
            opens.push_back(b.open);
            decisions.push_back(quantize_decision(b));
        }
        auto enc = encode_episode(opens, decisions, 30, 30);
        FitOptions opt;
        opt.rng_seed = 3;
        opt.max_iters = 100;
        auto r = fit(enc.seq, opt);
        double s = 0.0, ss = 0.0;
        const int n = 20000;
        auto path = sample_path(r.params, n, 17);
        for (auto o : path.O) {
            const double d = enc.observation.decode(o);
            s += d;
            ss += d * d;
        }
        return ss / n - (s / n) * (s / n);
    };
    double calm = 0.0, wild = 0.0;
    for (const auto& ep : eps) {
        const double v = variance_for(ep);
        if (ep.label == "2024-03-07") wild = v;
        else calm = std::max(calm, v);
    }
    CHECK(wild > calm);
}
