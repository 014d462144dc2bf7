#include <doctest.h>

#include "support.hpp"

#include <cmath>

using namespace support;
using pihedge::cli::PipelineConfig;

namespace {

// One shared fit of both model families on the fixture.
const TempDir& fitted() {
    static TempDir dir("fitted");
    static bool done = [] {
        const auto a = pipeline("fit-bdnn", dir.str(), {"--set", "bdnn.epochs=300"});
        const auto b = pipeline("fit-vhmn", dir.str());
        return a.code == 0 && b.code == 0;
    }();
    REQUIRE(done);
    return dir;
}

}  // namespace

TEST_CASE("fit-bdnn writes one model per episode and reruns byte-identically") {
    const auto& dir = fitted();
    int models = 0;
    for (const auto& e : fs::directory_iterator(dir.path() / "bdnn")) {
        const auto name = e.path().filename().string();
        if (name.size() == 15 && name.ends_with(".json")) ++models;
    }
    CHECK(models == 6);
    auto meta = read_json(dir / "bdnn/meta.json");
    CHECK(meta.at("command") == "fit-bdnn");
    CHECK(meta.at("outputs").size() == 6 * 3 + 1);
    auto metrics = read_json(dir / "bdnn/metrics.json").at("episodes");
    CHECK(metrics.size() == 6);
    for (const auto& m : metrics) CHECK(m.at("samples") == 77);

    const auto before = snapshot(dir.path() / "bdnn");
    REQUIRE(pipeline("fit-bdnn", dir.str(), {"--set", "bdnn.epochs=300"}).code == 0);
    CHECK(snapshot(dir.path() / "bdnn") == before);
}

TEST_CASE("fit-vhmn traces are monotone") {
    const auto& dir = fitted();
    auto metrics = read_json(dir / "vhmn/metrics.json").at("episodes");
    REQUIRE(metrics.size() == 6);
    for (const auto& m : metrics) {
        CHECK(m.at("monotone").get<bool>());
        CHECK(m.at("restart_log_likelihoods").size() == 5);
    }
    auto model = pihedge::load_vhmn_json(pihedge::read_text_file(dir / "vhmn/2024-03-04.json"));
    CHECK(model.params.hidden() == 2);
    CHECK(model.params.visible() == 30);
}

TEST_CASE("one hidden state converges after one iteration") {
    TempDir dir("j1");
    REQUIRE(pipeline("fit-vhmn", dir.str(), {"--set", "vhmn.hidden=1", "--episodes", "0"}).code == 0);
    for (const auto& m : read_json(dir / "vhmn/metrics.json").at("episodes")) {
        CHECK(m.at("iterations") == 1);
        CHECK(m.at("converged").get<bool>());
    }
}

TEST_CASE("missing inputs exit with code 2 and name the path") {
    TempDir dir("missing");
    const std::string absent = dir / "nope.csv";
    auto r = pipeline("fit-bdnn", dir.str(), {"--set", "data.csv=" + absent});
    CHECK(r.code == 2);
    CHECK(r.err.find(absent) != std::string::npos);

    auto sim = pipeline("simulate", dir.str());
    CHECK(sim.code == 2);
    CHECK(sim.err.find("bdnn") != std::string::npos);

    CHECK(run_cli({"price", "--input", dir / "absent.csv"}).code == 2);
    CHECK(run_cli({"bogus"}).code == 2);
    CHECK(run_cli({"price", "--set", "option.colour=blue"}).code == 2);
    CHECK(run_cli({"price", "--config", dir / "absent.ini"}).code == 2);
    CHECK(run_cli({"--version"}).code == 0);
}

TEST_CASE("simulate writes U paths and records the market drift") {
    const auto& dir = fitted();
    TempDir out("sim");
    fs::copy(dir.path(), out.path(), fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    REQUIRE(pipeline("simulate", out.str(), {"--paths", "10", "--episodes", "2024-03-04,2024-03-05"}).code == 0);
    auto prices = pihedge::read_matrix_csv_file(out / "simulate/prices.csv");
    CHECK(prices.rows() == 10);
    CHECK(prices.cols() == 2 * 77 + 1);
    CHECK(pihedge::read_matrix_csv_file(out / "simulate/decisions.csv").cols() == 2 * 77);
    auto meta = read_json(out / "simulate/meta.json");
    CHECK(meta.at("details").at("mu_annual").get<double>() == 0.05);
    CHECK(meta.at("details").at("sigma_annual").get<double>() == 0.2926);
    CHECK(meta.at("inputs").size() == 5);

    const auto first = pihedge::read_text_file(out / "simulate/prices.csv");
    REQUIRE(pipeline("simulate", out.str(), {"--paths", "10", "--episodes", "2024-03-04,2024-03-05"}).code == 0);
    CHECK(pihedge::read_text_file(out / "simulate/prices.csv") == first);
    REQUIRE(pipeline("simulate", out.str(), {"--paths", "10", "--episodes", "0,1", "--seed", "8"}).code == 0);
    CHECK(pihedge::read_text_file(out / "simulate/prices.csv") != first);

    REQUIRE(pipeline("price", out.str(), {"--eta", "0.01"}).code == 0);
    auto report = read_json(out / "price/report.json");
    CHECK(std::isfinite(report.at("price").get<double>()));
    CHECK(report.at("option").at("maturity_slots") == 154);

    REQUIRE(pipeline("price", out.str(), {"--eta", "0.01", "--kappa", "1e-9", "--episodes", "0,1"}).code == 0);
    CHECK(read_json(out / "price/meta.json").at("details").at("impact_episode") == "2024-03-05");
}

TEST_CASE("rate conversion") {
    CHECK(pihedge::cli::per_slot_rate(0.01059, 5) == doctest::Approx(5.3876e-7).epsilon(1e-4));
    CHECK(pihedge::cli::per_slot_vol(0.2926, 390) == doctest::Approx(0.2926 / std::sqrt(252.0)));
}

TEST_CASE("binomial toy through the command line") {
    TempDir dir("binomial");
    pihedge::write_text_file(dir / "toy.csv", "t0,t1\n100,110\n100,90\n");
    auto r = run_cli({"price", "--input", dir / "toy.csv", "--out", dir.str(), "--eta", "1", "--pure-risk-hedge",
                      "--set", "market.rate_annual=0", "--set", "option.ridge=1e-9"});
    REQUIRE(r.code == 0);
    auto report = read_json(dir / "price/report.json");
    CHECK(report.at("price").get<double>() == doctest::Approx(55.0).epsilon(1e-6));
    CHECK(report.at("price_total").get<double>() == doctest::Approx(5500.0).epsilon(1e-6));
    auto pos = pihedge::read_matrix_csv_file(dir / "price/positions.csv");
    CHECK(pos(0, 0) == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("GBM pricing through the command line") {
    TempDir dir("gbm");
    auto r = run_cli({"price", "--gbm", "--out", dir.str(), "--eta", "0.001", "--pure-risk-hedge", "--paths", "10000"});
    REQUIRE(r.code == 0);
    auto report = read_json(dir / "price/report.json");
    CHECK(std::abs(report.at("relative_error").get<double>()) < 0.05);
    CHECK(report.at("mean_abs_delta_error").get<double>() < 0.05);
    CHECK(report.at("black_scholes").get<double>() == doctest::Approx(7.4851).epsilon(1e-4));
}

TEST_CASE("configuration") {
    auto cfg = pihedge::cli::load_config(source_path("config/pipeline.ini"));
    CHECK(cfg.vhmn.hidden == 2);
    CHECK(cfg.arch.widths == std::vector<std::size_t>{1, 16, 16, 1});
    CHECK(cfg.hash() == pihedge::cli::load_config(source_path("config/pipeline.ini")).hash());
    PipelineConfig other = cfg;
    other.set("run.seed", "8");
    CHECK(other.hash() != cfg.hash());
    CHECK_THROWS_AS(other.set("vhmn.hidden", "two"), pihedge::cli::ConfigError);
    CHECK_THROWS_AS(other.set("nope.key", "1"), pihedge::cli::ConfigError);

    auto eps = pihedge::load_ohlcv_csv_file(source_path("tests/data/fixture.csv"));
    CHECK(pihedge::cli::select_episodes("all", eps).size() == 6);
    CHECK(pihedge::cli::select_episodes("2024-03-07,0", eps) == std::vector<std::size_t>{3, 0});
    CHECK_THROWS_AS(pihedge::cli::select_episodes("9", eps), pihedge::cli::ConfigError);
}
