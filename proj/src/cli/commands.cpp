#include "pihedge/black_scholes.hpp"
#include "pihedge/cli.hpp"
#include "pihedge/io.hpp"
#include "pihedge/rng.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#ifndef PIHEDGE_VERSION
#define PIHEDGE_VERSION "0.0.0"
#endif

namespace pihedge::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Stream tags that keep the stages' random numbers apart.
enum Stage : std::uint64_t { kBdnnStage = 1, kVhmnStage = 2, kSimulateStage = 3, kGbmStage = 4 };

struct Overrides {
    std::string config_path;
    std::vector<std::string> settings;
    bool gbm = false;
    bool pure_risk_hedge = false;
    std::string input;
};

// Writes files below the output directory and records their hashes for the
// stage's metadata sidecar.
class Outputs {
public:
    Outputs(const PipelineConfig& cfg, std::string stage) : cfg_(cfg), stage_(std::move(stage)) {}

    void emit(const std::string& name, const std::string& text) {
        const std::string rel = stage_ + "/" + name;
        write_text_file((fs::path(cfg_.out_dir) / rel).string(), text);
        outputs_[rel] = hex64(fnv1a64(text));
    }
    void input(const std::string& path, const std::string& text) { inputs_[path] = hex64(fnv1a64(text)); }
    json& extra() { return extra_; }

    void finish(const std::string& command) {
        json config = json::object();
        std::istringstream lines(cfg_.canonical());
        for (std::string line; std::getline(lines, line);) {
            const auto eq = line.find('=');
            config[line.substr(0, eq)] = line.substr(eq + 1);
        }
        json meta = {{"tool", "pihedge"},       {"version", PIHEDGE_VERSION},
                     {"command", command},      {"seed", cfg_.seed},
                     {"config_hash", hex64(cfg_.hash())}, {"config", config},
                     {"inputs", inputs_},       {"outputs", outputs_}};
        if (!extra_.is_null()) meta["details"] = extra_;
        write_text_file((fs::path(cfg_.out_dir) / stage_ / "meta.json").string(), meta.dump(2) + "\n");
    }

private:
    const PipelineConfig& cfg_;
    std::string stage_;
    std::map<std::string, std::string> inputs_, outputs_;
    json extra_;
};

std::vector<Episode> load_episodes(const PipelineConfig& cfg, Outputs& outputs) {
    const std::string text = read_text_file(cfg.data_csv);
    outputs.input(cfg.data_csv, text);
    std::istringstream in(text);
    auto episodes = load_ohlcv_csv(in, cfg.schema, cfg.drop_first_slot);
    if (episodes.empty()) throw EmptyEpisode("'" + cfg.data_csv + "' contains no bars");
    return episodes;
}

std::string model_path(const PipelineConfig& cfg, const std::string& stage, const std::string& label) {
    return (fs::path(cfg.out_dir) / stage / (label + ".json")).string();
}

std::string csv_vector(const std::string& header, const Eigen::VectorXd& v) {
    std::string s = header + "\n";
    for (Eigen::Index i = 0; i < v.size(); ++i) s += std::to_string(i) + "," + format_double(v[i]) + "\n";
    return s;
}

std::string matrix_text(const Eigen::MatrixXd& m) {
    std::ostringstream out;
    write_matrix_csv(out, m);
    return out.str();
}

void cmd_fit_bdnn(const PipelineConfig& cfg, std::ostream& out) {
    Outputs outputs(cfg, "bdnn");
    const auto episodes = load_episodes(cfg, outputs);
    json metrics = json::array();
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        const auto& ep = episodes[i];
        const auto dataset = build_dataset(ep);
        TrainConfig train = cfg.train;
        train.rng_seed = stream_seed(stream_seed(cfg.seed, kBdnnStage), i);
        const Bdnn bdnn = fit_bdnn(dataset, train, cfg.arch);
        outputs.emit(ep.label + ".json", save_bdnn_json(bdnn));

        std::ostringstream data;
        write_dataset_csv(data, ep, dataset);
        outputs.emit(ep.label + "_data.csv", data.str());

        std::string band = "d,mean,stddev\n";
        for (double d : decision_grid(dataset, 200)) {
            const auto p = bdnn.predict(d);
            band += format_double(d) + "," + format_double(p.mean) + "," + format_double(p.stddev()) + "\n";
        }
        outputs.emit(ep.label + "_band.csv", band);

        const double final_loss = loss(bdnn.model, dataset, bdnn.lambda);
        metrics.push_back({{"episode", ep.label},
                           {"samples", dataset.size()},
                           {"final_loss", final_loss},
                           {"coverage_1sd", coverage(bdnn, dataset, 1.0)},
                           {"coverage_2sd", coverage(bdnn, dataset, 2.0)}});
        out << "fit-bdnn " << ep.label << ": " << dataset.size() << " samples, loss " << final_loss
            << ", 1-sd coverage " << metrics.back()["coverage_1sd"].get<double>() << "\n";
    }
    outputs.emit("metrics.json", json{{"episodes", metrics}}.dump(2) + "\n");
    outputs.finish("fit-bdnn");
}

void cmd_fit_vhmn(const PipelineConfig& cfg, std::ostream& out) {
    Outputs outputs(cfg, "vhmn");
    const auto episodes = load_episodes(cfg, outputs);
    json metrics = json::array();
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        const auto& ep = episodes[i];
        const auto dataset = build_dataset(ep);
        std::vector<double> opens, decisions;
        for (const auto& bar : modeled_bars(ep)) opens.push_back(bar.open);
        for (const auto& s : dataset) decisions.push_back(s.d);
        const auto enc = encode_episode(opens, decisions, cfg.vhmn.visible, cfg.vhmn.observed);

        FitOptions options = cfg.vhmn;
        options.rng_seed = stream_seed(stream_seed(cfg.seed, kVhmnStage), i);
        const auto result = fit(enc.seq, options);
        outputs.emit(ep.label + ".json", save_vhmn_json({result.params, enc.visible, enc.observation}));

        std::string trace = "restart,iteration,log_likelihood,selected\n";
        json finals = json::array();
        bool monotone = true;
        for (std::size_t r = 0; r < result.restarts.size(); ++r) {
            const auto& tr = result.restarts[r].trace;
            for (std::size_t k = 0; k < tr.size(); ++k) {
                trace += std::to_string(r) + "," + std::to_string(k) + "," + format_double(tr[k]) + "," +
                         (r == result.best_restart ? "1" : "0") + "\n";
                if (k > 0 && tr[k] < tr[k - 1] - 1e-9) monotone = false;
            }
            finals.push_back(tr.empty() ? 0.0 : tr.back());
        }
        outputs.emit(ep.label + "_trace.csv", trace);
        metrics.push_back({{"episode", ep.label},
                           {"log_likelihood", result.trace.back()},
                           {"iterations", result.iterations},
                           {"converged", result.converged},
                           {"best_restart", result.best_restart},
                           {"restart_log_likelihoods", finals},
                           {"monotone", monotone}});
        out << "fit-vhmn " << ep.label << ": log-likelihood " << result.trace.back() << " after "
            << result.iterations << " iterations (restart " << result.best_restart << ")\n";
    }
    outputs.emit("metrics.json", json{{"episodes", metrics}}.dump(2) + "\n");
    outputs.finish("fit-vhmn");
}

struct LoadedModels {
    std::vector<Episode> episodes;
    std::vector<std::size_t> selected;
    std::vector<std::unique_ptr<Bdnn>> bdnn;
    std::vector<std::unique_ptr<VhmnModel>> vhmn;
};

LoadedModels load_models(const PipelineConfig& cfg, Outputs& outputs, bool need_vhmn) {
    LoadedModels m;
    m.episodes = load_episodes(cfg, outputs);
    m.selected = select_episodes(cfg.episodes, m.episodes);
    for (auto i : m.selected) {
        const auto& label = m.episodes[i].label;
        const auto bpath = model_path(cfg, "bdnn", label);
        const auto btext = read_text_file(bpath);
        outputs.input(bpath, btext);
        m.bdnn.push_back(std::make_unique<Bdnn>(load_bdnn_json(btext)));
        if (need_vhmn) {
            const auto vpath = model_path(cfg, "vhmn", label);
            const auto vtext = read_text_file(vpath);
            outputs.input(vpath, vtext);
            m.vhmn.push_back(std::make_unique<VhmnModel>(load_vhmn_json(vtext)));
        }
    }
    return m;
}

void cmd_simulate(const PipelineConfig& cfg, std::ostream& out) {
    Outputs outputs(cfg, "simulate");
    const auto models = load_models(cfg, outputs, true);
    std::vector<Segment> segments;
    json labels = json::array();
    for (std::size_t k = 0; k < models.selected.size(); ++k) {
        const auto& ep = models.episodes[models.selected[k]];
        segments.push_back({models.vhmn[k].get(), models.bdnn[k].get(), modeled_bars(ep).size()});
        labels.push_back(ep.label);
    }
    const double s0 = cfg.s0 > 0.0 ? cfg.s0 : modeled_bars(models.episodes[models.selected.front()]).front().open;
    const double mu = per_slot_rate(cfg.mu_annual, cfg.slot_minutes);
    const double sigma = per_slot_vol(cfg.sigma_annual, cfg.slot_minutes);
    const auto sim = simulate_prices(segments, cfg.paths, s0, stream_seed(cfg.seed, kSimulateStage), cfg.mode);

    outputs.emit("prices.csv", matrix_text(sim.prices));
    outputs.emit("states.csv", matrix_text(remove_drift(sim.prices, mu, sigma)));
    outputs.emit("decisions.csv", matrix_text(sim.decisions));
    outputs.extra() = {{"episodes", labels},
                       {"paths", cfg.paths},
                       {"slots", sim.decisions.cols()},
                       {"s0", s0},
                       {"mu_annual", cfg.mu_annual},
                       {"sigma_annual", cfg.sigma_annual},
                       {"mu_per_slot", mu},
                       {"sigma_per_slot", sigma}};
    outputs.finish("simulate");
    out << "simulate: " << cfg.paths << " paths x " << sim.decisions.cols() << " slots from s0 = " << s0 << "\n";
}

void cmd_price(const PipelineConfig& cfg, const Overrides& ov, std::ostream& out) {
    Outputs outputs(cfg, "price");
    OptionSpec spec = cfg.option;
    PathMatrix prices;
    json details;
    if (ov.gbm) {
        const auto& g = cfg.gbm;
        const double slot_years = g.years / static_cast<double>(g.slots);
        spec.rate = g.rate_annual * slot_years;
        spec.drift_mu = g.mu_annual * slot_years;
        spec.vol_sigma = g.sigma_annual * std::sqrt(slot_years);
        prices = gbm_paths(g.s0, spec.drift_mu, spec.vol_sigma, g.slots, g.paths, 1.0, stream_seed(cfg.seed, kGbmStage));
        outputs.emit("prices.csv", matrix_text(prices));
        details["source"] = "gbm";
        details["black_scholes"] =
            bs_price(spec.kind, g.s0, spec.strike, spec.rate, spec.vol_sigma, static_cast<double>(g.slots));
    } else {
        const std::string path =
            ov.input.empty() ? (fs::path(cfg.out_dir) / "simulate" / "prices.csv").string() : ov.input;
        const std::string text = read_text_file(path);
        outputs.input(path, text);
        std::istringstream in(text);
        prices = read_matrix_csv(in);
        spec.rate = per_slot_rate(cfg.rate_annual, cfg.slot_minutes);
        spec.drift_mu = per_slot_rate(cfg.mu_annual, cfg.slot_minutes);
        spec.vol_sigma = per_slot_vol(cfg.sigma_annual, cfg.slot_minutes);
        details["source"] = path;
    }
    spec.maturity_slots = static_cast<std::size_t>(std::max<Eigen::Index>(prices.cols() - 1, 0));

    HedgeConfig hc;
    hc.basis_count = cfg.basis_count;
    std::unique_ptr<Bdnn> impact_model;
    if (spec.kappa > 0.0) {
        auto models = load_models(cfg, outputs, false);
        impact_model = std::move(models.bdnn.back());
        const Bdnn* b = impact_model.get();
        hc.impact = [b](double F) { return b->predict(F).mean; };
        details["impact_episode"] = models.episodes[models.selected.back()].label;
    }

    const CrossSection cs(prices, spec);
    const auto sol = price_and_hedge(cs, spec, hc);

    std::ostringstream report;
    write_hedge_json(report, sol, spec);
    json j = json::parse(report.str());
    j["seed"] = cfg.seed;
    j["source"] = details["source"];
    if (details.contains("black_scholes")) {
        const double bs = details["black_scholes"].get<double>();
        j["black_scholes"] = bs;
        j["relative_error"] = (sol.price - bs) / bs;
        double err = 0.0;
        std::size_t n = 0;
        const Eigen::Index T = cs.steps();
        for (Eigen::Index t = 1; t < T; ++t)
            for (Eigen::Index u = 0; u < cs.paths(); ++u, ++n)
                err += std::abs(sol.positions(u, t) - bs_delta(spec.kind, prices(u, t), spec.strike, spec.rate,
                                                               spec.vol_sigma, static_cast<double>(T - t)));
        j["mean_abs_delta_error"] = n ? err / static_cast<double>(n) : 0.0;
    }
    outputs.emit("report.json", j.dump(2) + "\n");
    outputs.emit("positions.csv", matrix_text(sol.positions));
    outputs.emit("portfolio.csv", matrix_text(sol.portfolio));
    outputs.emit("rewards.csv", matrix_text(sol.rewards));
    outputs.emit("q.csv", matrix_text(sol.q));
    outputs.emit("q_mean.csv", csv_vector("t,q_mean", sol.q_mean));
    outputs.emit("states.csv", matrix_text(cs.states()));
    outputs.extra() = details;
    outputs.finish("price");

    out << "price: " << format_double(sol.price) << " per share, " << format_double(sol.price * spec.shares)
        << " for " << spec.shares << " shares (eta " << spec.risk_aversion
        << (spec.pure_risk_hedge ? ", pure-risk hedge" : "") << ")\n";
    if (j.contains("black_scholes"))
        out << "black-scholes: " << format_double(j["black_scholes"].get<double>()) << " (relative error "
            << j["relative_error"].get<double>() << ")\n";
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Option pricing and hedging driven by principal-investor models of intraday data", "pihedge"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", PIHEDGE_VERSION);

    Overrides ov;
    std::uint64_t seed = 0;
    std::string episodes, out_dir;
    std::size_t paths = 0;
    double eta = 0.0, kappa = 0.0;
    app.add_option("--config", ov.config_path, "INI configuration file");
    auto* seed_opt = app.add_option("--seed", seed, "Master random seed");
    auto* ep_opt = app.add_option("--episodes", episodes, "Episodes to chain: all, or indices / dates, comma-separated");
    auto* out_opt = app.add_option("--out", out_dir, "Output directory");
    app.add_flag("--gbm", ov.gbm, "price: use geometric Brownian motion paths instead of simulated ones");
    auto* paths_opt = app.add_option("--paths", paths, "Number of simulated paths U");
    auto* eta_opt = app.add_option("--eta", eta, "Risk aversion used for the price's risk charge");
    app.add_flag("--pure-risk-hedge", ov.pure_risk_hedge, "Solve the hedge in the pure risk-minimising limit");
    auto* kappa_opt = app.add_option("--kappa", kappa, "Compensation scale");
    app.add_option("--input", ov.input, "price: path matrix CSV (default: <out>/simulate/prices.csv)");
    app.add_option("--set", ov.settings, "Override any config key: section.key=value")->take_all();

    auto* fit_bdnn_cmd = app.add_subcommand("fit-bdnn", "Train one B-DNN per episode");
    auto* fit_vhmn_cmd = app.add_subcommand("fit-vhmn", "Fit one visible-hidden Markov network per episode");
    auto* simulate_cmd = app.add_subcommand("simulate", "Simulate price paths from the fitted models");
    auto* price_cmd = app.add_subcommand("price", "Price and hedge the configured option");

    std::vector<const char*> argv;
    argv.push_back(args.empty() ? "pihedge" : args[0].c_str());
    for (std::size_t i = 1; i < args.size(); ++i) argv.push_back(args[i].c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        PipelineConfig cfg = ov.config_path.empty() ? PipelineConfig{} : load_config(ov.config_path);
        for (const auto& s : ov.settings) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + s + "'");
            cfg.set(s.substr(0, eq), s.substr(eq + 1));
        }
        if (seed_opt->count()) cfg.seed = seed;
        if (ep_opt->count()) cfg.episodes = episodes;
        if (out_opt->count()) cfg.out_dir = out_dir;
        if (paths_opt->count()) {
            cfg.paths = paths;
            cfg.gbm.paths = paths;
        }
        if (eta_opt->count()) cfg.option.risk_aversion = eta;
        if (ov.pure_risk_hedge) cfg.option.pure_risk_hedge = true;
        if (kappa_opt->count()) cfg.option.kappa = kappa;
        try {
            cfg.train.validate();
            cfg.arch.validate();
            cfg.option.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }

        if (fit_bdnn_cmd->parsed()) cmd_fit_bdnn(cfg, out);
        else if (fit_vhmn_cmd->parsed()) cmd_fit_vhmn(cfg, out);
        else if (simulate_cmd->parsed()) cmd_simulate(cfg, out);
        else if (price_cmd->parsed()) cmd_price(cfg, ov, out);
        return 0;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace pihedge::cli
