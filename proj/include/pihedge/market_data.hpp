#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace pihedge {

// One OHLCV bar. `timestamp` is seconds since the Unix epoch of the wall-clock
// time written in the source file (time-zone offsets are not applied).
struct OhlcvBar {
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;
    double volume = 0.0;
    std::size_t slot_index = 0;
    std::int64_t timestamp = 0;
};

// Throws InvalidBar if prices are non-positive, volume is negative, or the
// low/high envelope does not contain open and close.
void validate_bar(const OhlcvBar& bar);

struct Episode {
    std::vector<OhlcvBar> bars;
    std::string label;  // calendar day, YYYY-MM-DD
    bool first_slot_dropped = true;
};

struct DecisionSample {
    double d = 0.0;  // signed USD flow
    double g = 0.0;  // fractional price change over the bar
};

/// Signed dollar flow attributed to the dominant investor during one bar:
/// v * h * (h - o) / (h - l) * sign(c - o). A flat bar (h == l) yields 0.
double quantize_decision(const OhlcvBar& bar);

/// c / o - 1. Throws InvalidBar when o <= 0.
double price_change(const OhlcvBar& bar);

/// One sample per bar in slot order, skipping the earliest slot when
/// `episode.first_slot_dropped` is set. Throws EmptyEpisode if nothing remains.
std::vector<DecisionSample> build_dataset(const Episode& episode);

/// The bars that feed the dataset (same selection rule as build_dataset).
std::span<const OhlcvBar> modeled_bars(const Episode& episode);

struct CsvSchema {
    std::string timestamp = "timestamp";
    std::string open = "open";
    std::string high = "high";
    std::string low = "low";
    std::string close = "close";
    std::string volume = "volume";
};

/// Parses an OHLCV CSV (header row, RFC-4180 quoting, ISO-8601 timestamps)
/// into per-calendar-day episodes ordered by date. Header matching is
/// case-insensitive. Throws ParseError / OrderingError carrying the 1-based
/// line number of the offending row.
std::vector<Episode> load_ohlcv_csv(std::istream& in, const CsvSchema& schema = {},
                                    bool drop_first_slot = true);
std::vector<Episode> load_ohlcv_csv_file(const std::string& path, const CsvSchema& schema = {},
                                         bool drop_first_slot = true);

/// Writes episodes back in the loader's format; load(write(x)) == x.
void write_ohlcv_csv(std::ostream& out, std::span<const Episode> episodes);

/// Dataset dump with columns slot,d,g.
void write_dataset_csv(std::ostream& out, const Episode& episode,
                       std::span<const DecisionSample> samples);

std::string format_timestamp(std::int64_t seconds);
std::int64_t parse_timestamp(const std::string& text);  // throws std::invalid_argument

}  // namespace pihedge
