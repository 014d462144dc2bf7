#pragma once

#include "pihedge/bdnn.hpp"
#include "pihedge/error.hpp"
#include "pihedge/hedging.hpp"
#include "pihedge/market_data.hpp"
#include "pihedge/paths.hpp"
#include "pihedge/vhmn.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace pihedge::cli {

// Bad configuration keys or values; exit code 2.
class ConfigError : public IoError {
public:
    using IoError::IoError;
};

struct GbmSettings {
    double s0 = 100.0;
    std::size_t slots = 24;
    double years = 1.0;
    std::size_t paths = 10000;
    double rate_annual = 0.03;
    double mu_annual = 0.03;
    double sigma_annual = 0.15;
};

struct PipelineConfig {
    // [data]
    std::string data_csv = "data/fixture.csv";
    CsvSchema schema;
    bool drop_first_slot = true;
    // [bdnn]
    Architecture arch;
    TrainConfig train;
    // [vhmn]
    FitOptions vhmn;
    // [run]
    std::uint64_t seed = 7;
    // [simulate]
    std::size_t paths = 1000;
    double s0 = 0.0;  // 0: first modelled open of the first selected episode
    PriceChangeMode mode = PriceChangeMode::PredictiveMean;
    std::string episodes = "all";
    // [market]
    double slot_minutes = 5.0;
    double rate_annual = 0.01059;
    double mu_annual = 0.05;
    double sigma_annual = 0.2926;
    // [option]
    OptionSpec option;
    std::size_t basis_count = 12;
    // [gbm]
    GbmSettings gbm;
    // [output]
    std::string out_dir = "out";

    PipelineConfig();

    /// Sets "section.key" from text. Throws ConfigError for unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    /// Every key with its current value, one "section.key=value" per line, sorted.
    std::string canonical() const;
    std::uint64_t hash() const;
};

/// Reads an INI file on top of the defaults.
PipelineConfig load_config(const std::string& path);

// Trading-year conversions: 252 days of 390 minutes.
double per_slot_rate(double annual, double slot_minutes);
double per_slot_vol(double annual, double slot_minutes);

/// Parses "all" or a comma-separated list of indices / YYYY-MM-DD labels.
std::vector<std::size_t> select_episodes(const std::string& selection, std::span<const Episode> episodes);

/// Runs one subcommand; returns the process exit code.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace pihedge::cli
