#include "pihedge/cli.hpp"

#include "pihedge/io.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <concepts>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

namespace pihedge::cli {

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || end != text.data() + text.size())
        throw ConfigError("config key '" + key + "': cannot parse '" + text + "' as a number");
    return v;
}

bool parse_bool(const std::string& key, std::string text) {
    std::transform(text.begin(), text.end(), text.begin(), [](unsigned char c) { return std::tolower(c); });
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

std::string show(bool b) { return b ? "true" : "false"; }
std::string show(double x) { return format_double(x); }
template <std::integral T>
std::string show(T x) { return std::to_string(x); }

struct Field {
    std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

#define PIHEDGE_NUM(name, member, type)                                                                        \
    {name,                                                                                                     \
     {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.member = parse_number<type>(k, v); }, \
      [](const PipelineConfig& c) { return show(static_cast<type>(c.member)); }}}
#define PIHEDGE_BOOL(name, member)                                                                          \
    {name,                                                                                                  \
     {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); }, \
      [](const PipelineConfig& c) { return show(static_cast<bool>(c.member)); }}}
#define PIHEDGE_STR(name, member)                                                                          \
    {name,                                                                                                 \
     {[](PipelineConfig& c, const std::string&, const std::string& v) { c.member = v; },                 \
      [](const PipelineConfig& c) { return c.member; }}}

std::string join_widths(const std::vector<std::size_t>& w) {
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
    return s;
}

std::vector<std::size_t> split_widths(const std::string& key, const std::string& text) {
    std::vector<std::size_t> w;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
        w.push_back(parse_number<std::size_t>(key, item));
    }
    return w;
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        PIHEDGE_STR("data.csv", data_csv),
        PIHEDGE_STR("data.timestamp_column", schema.timestamp),
        PIHEDGE_STR("data.open_column", schema.open),
        PIHEDGE_STR("data.high_column", schema.high),
        PIHEDGE_STR("data.low_column", schema.low),
        PIHEDGE_STR("data.close_column", schema.close),
        PIHEDGE_STR("data.volume_column", schema.volume),
        PIHEDGE_BOOL("data.drop_first_slot", drop_first_slot),

        {"bdnn.widths",
         {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.arch.widths = split_widths(k, v); },
          [](const PipelineConfig& c) { return join_widths(c.arch.widths); }}},
        {"bdnn.activation",
         {[](PipelineConfig& c, const std::string& k, const std::string& v) {
              try {
                  c.arch.hidden = activation_from_string(v);
              } catch (const std::exception& e) {
                  throw ConfigError("config key '" + k + "': " + e.what());
              }
          },
          [](const PipelineConfig& c) { return to_string(c.arch.hidden); }}},
        PIHEDGE_BOOL("bdnn.bias", arch.bias),
        PIHEDGE_NUM("bdnn.lambda", train.lambda, double),
        PIHEDGE_NUM("bdnn.sigma", train.sigma, double),
        PIHEDGE_NUM("bdnn.learning_rate", train.learning_rate, double),
        PIHEDGE_NUM("bdnn.epochs", train.epochs, std::size_t),
        PIHEDGE_NUM("bdnn.batch_size", train.batch_size, std::size_t),
        PIHEDGE_BOOL("bdnn.standardize_inputs", train.standardize_inputs),
        PIHEDGE_BOOL("bdnn.standardize_targets", train.standardize_targets),

        PIHEDGE_NUM("vhmn.hidden", vhmn.hidden, std::size_t),
        PIHEDGE_NUM("vhmn.visible", vhmn.visible, std::size_t),
        PIHEDGE_NUM("vhmn.observed", vhmn.observed, std::size_t),
        PIHEDGE_NUM("vhmn.dirichlet_alpha", vhmn.dirichlet_alpha, double),
        PIHEDGE_NUM("vhmn.restarts", vhmn.restarts, std::size_t),
        PIHEDGE_NUM("vhmn.tol", vhmn.tol, double),
        PIHEDGE_NUM("vhmn.max_iters", vhmn.max_iters, std::size_t),

        PIHEDGE_NUM("run.seed", seed, std::uint64_t),

        PIHEDGE_NUM("simulate.paths", paths, std::size_t),
        PIHEDGE_NUM("simulate.s0", s0, double),
        {"simulate.mode",
         {[](PipelineConfig& c, const std::string& k, const std::string& v) {
              if (v == "mean") c.mode = PriceChangeMode::PredictiveMean;
              else if (v == "sample") c.mode = PriceChangeMode::PredictiveSample;
              else throw ConfigError("config key '" + k + "': expected mean or sample");
          },
          [](const PipelineConfig& c) {
              return std::string(c.mode == PriceChangeMode::PredictiveMean ? "mean" : "sample");
          }}},
        PIHEDGE_STR("simulate.episodes", episodes),

        PIHEDGE_NUM("market.slot_minutes", slot_minutes, double),
        PIHEDGE_NUM("market.rate_annual", rate_annual, double),
        PIHEDGE_NUM("market.mu_annual", mu_annual, double),
        PIHEDGE_NUM("market.sigma_annual", sigma_annual, double),

        {"option.kind",
         {[](PipelineConfig& c, const std::string& k, const std::string& v) {
              try {
                  c.option.kind = option_kind_from_string(v);
              } catch (const std::exception& e) {
                  throw ConfigError("config key '" + k + "': " + e.what());
              }
          },
          [](const PipelineConfig& c) { return to_string(c.option.kind); }}},
        PIHEDGE_NUM("option.strike", option.strike, double),
        PIHEDGE_NUM("option.shares", option.shares, double),
        PIHEDGE_NUM("option.eta", option.risk_aversion, double),
        PIHEDGE_BOOL("option.pure_risk_hedge", option.pure_risk_hedge),
        PIHEDGE_NUM("option.kappa", option.kappa, double),
        PIHEDGE_NUM("option.ridge", option.ridge, double),
        PIHEDGE_NUM("option.basis_count", basis_count, std::size_t),
        {"option.centering",
         {[](PipelineConfig& c, const std::string& k, const std::string& v) {
              if (v == "conditional") c.option.centering = Centering::Conditional;
              else if (v == "cross_sectional") c.option.centering = Centering::CrossSectional;
              else throw ConfigError("config key '" + k + "': expected conditional or cross_sectional");
          },
          [](const PipelineConfig& c) {
              return std::string(c.option.centering == Centering::Conditional ? "conditional"
                                                                                     : "cross_sectional");
          }}},

        PIHEDGE_NUM("gbm.s0", gbm.s0, double),
        PIHEDGE_NUM("gbm.slots", gbm.slots, std::size_t),
        PIHEDGE_NUM("gbm.years", gbm.years, double),
        PIHEDGE_NUM("gbm.paths", gbm.paths, std::size_t),
        PIHEDGE_NUM("gbm.rate_annual", gbm.rate_annual, double),
        PIHEDGE_NUM("gbm.mu_annual", gbm.mu_annual, double),
        PIHEDGE_NUM("gbm.sigma_annual", gbm.sigma_annual, double),

        PIHEDGE_STR("output.dir", out_dir),
    };
    return table;
}

#undef PIHEDGE_NUM
#undef PIHEDGE_BOOL
#undef PIHEDGE_STR

}  // namespace

PipelineConfig::PipelineConfig() {
    option.strike = 100.0;
    option.shares = 100.0;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(*this, key, value);
}

std::string PipelineConfig::canonical() const {
    std::string out;
    for (const auto& [name, field] : fields()) out += name + "=" + field.get(*this) + "\n";
    return out;
}

std::uint64_t PipelineConfig::hash() const { return fnv1a64(canonical()); }

PipelineConfig load_config(const std::string& path) {
    namespace pt = boost::property_tree;
    std::istringstream in(read_text_file(path));
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("'" + path + "' line " + std::to_string(e.line()) + ": " + e.message());
    }
    PipelineConfig cfg;
    for (const auto& [section, keys] : tree) {
        if (keys.empty()) throw ConfigError("'" + path + "': key '" + section + "' is outside a section");
        for (const auto& [key, value] : keys) cfg.set(section + "." + key, value.data());
    }
    return cfg;
}

double per_slot_rate(double annual, double slot_minutes) { return annual * slot_minutes / (252.0 * 390.0); }

double per_slot_vol(double annual, double slot_minutes) {
    return annual * std::sqrt(slot_minutes / (252.0 * 390.0));
}

std::vector<std::size_t> select_episodes(const std::string& selection, std::span<const Episode> episodes) {
    std::vector<std::size_t> out;
    if (selection.empty() || selection == "all") {
        for (std::size_t i = 0; i < episodes.size(); ++i) out.push_back(i);
        return out;
    }
    std::stringstream ss(selection);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
        auto it = std::find_if(episodes.begin(), episodes.end(), [&](const Episode& e) { return e.label == item; });
        std::size_t idx = episodes.size();
        if (it != episodes.end()) {
            idx = static_cast<std::size_t>(it - episodes.begin());
        } else {
            auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), idx);
            if (ec != std::errc() || end != item.data() + item.size()) idx = episodes.size();
        }
        if (idx >= episodes.size()) throw ConfigError("no episode matches '" + item + "'");
        out.push_back(idx);
    }
    if (out.empty()) throw ConfigError("episode selection is empty");
    return out;
}

}  // namespace pihedge::cli
