#include "pihedge/market_data.hpp"

#include "pihedge/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>

namespace pihedge {

namespace {

int sign(double x) { return (x > 0.0) - (x < 0.0); }

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Reads one RFC-4180 record. Returns nullopt at end of input. `line` is
// advanced by the number of physical lines consumed.
std::optional<std::vector<std::string>> read_record(std::istream& in, std::size_t& line,
                                                    std::size_t& record_line) {
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    record_line = line + 1;
    int ch;
    while ((ch = in.get()) != EOF) {
        any = true;
        char c = static_cast<char>(ch);
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get();
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            ++line;
            fields.push_back(std::move(field));
            return fields;
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    if (in_quotes) throw ParseError(record_line, "unterminated quoted field");
    if (!any) return std::nullopt;
    ++line;
    fields.push_back(std::move(field));
    return fields;
}

double parse_number(const std::string& text, std::size_t line, const std::string& column) {
    std::string t = trim(text);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(value)) {
        throw ParseError(line, "column '" + column + "': not a finite number: '" + text + "'");
    }
    return value;
}

std::string day_label(std::int64_t seconds) {
    using namespace std::chrono;
    auto days = floor<std::chrono::days>(sys_seconds{std::chrono::seconds{seconds}});
    year_month_day ymd{days};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

}  // namespace

void validate_bar(const OhlcvBar& bar) {
    if (!(bar.open > 0.0 && bar.high > 0.0 && bar.low > 0.0 && bar.close > 0.0))
        throw InvalidBar("prices must be positive");
    if (!(bar.volume >= 0.0)) throw InvalidBar("volume must be non-negative");
    if (bar.low > std::min(bar.open, bar.close) || std::max(bar.open, bar.close) > bar.high)
        throw InvalidBar("low/high do not bracket open and close");
}

double quantize_decision(const OhlcvBar& bar) {
    const double range = bar.high - bar.low;
    if (range == 0.0) return 0.0;
    return bar.volume * bar.high * (bar.high - bar.open) / range * sign(bar.close - bar.open);
}

double price_change(const OhlcvBar& bar) {
    if (!(bar.open > 0.0)) throw InvalidBar("open price must be positive");
    return bar.close / bar.open - 1.0;
}

std::span<const OhlcvBar> modeled_bars(const Episode& episode) {
    std::span<const OhlcvBar> bars(episode.bars);
    if (episode.first_slot_dropped && !bars.empty()) {
        // Bars are kept in slot order, so the smallest slot is the front.
        bars = bars.subspan(1);
    }
    return bars;
}

std::vector<DecisionSample> build_dataset(const Episode& episode) {
    auto bars = modeled_bars(episode);
    if (bars.empty()) throw EmptyEpisode("episode '" + episode.label + "' has no modeled bars");
    std::vector<DecisionSample> out;
    out.reserve(bars.size());
    for (const auto& bar : bars) out.push_back({quantize_decision(bar), price_change(bar)});
    return out;
}

std::int64_t parse_timestamp(const std::string& raw) {
    const std::string text = trim(raw);
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    int consumed = 0;
    if (std::sscanf(text.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &consumed) != 3 || consumed != 10)
        throw std::invalid_argument("bad ISO-8601 date: '" + raw + "'");
    std::size_t pos = 10;
    if (pos < text.size()) {
        if (text[pos] != 'T' && text[pos] != ' ')
            throw std::invalid_argument("bad ISO-8601 timestamp: '" + raw + "'");
        int n = 0;
        if (std::sscanf(text.c_str() + pos + 1, "%2d:%2d%n", &h, &mi, &n) != 2 || n != 5)
            throw std::invalid_argument("bad ISO-8601 time: '" + raw + "'");
        pos += 1 + 5;
        if (pos < text.size() && text[pos] == ':') {
            if (std::sscanf(text.c_str() + pos + 1, "%2d%n", &s, &n) != 1 || n != 2)
                throw std::invalid_argument("bad ISO-8601 seconds: '" + raw + "'");
            pos += 3;
            if (pos < text.size() && text[pos] == '.') {
                ++pos;
                while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
            }
        }
        // Offsets and 'Z' are accepted and ignored; grouping uses the written clock time.
        if (pos < text.size() && text[pos] != 'Z' && text[pos] != '+' && text[pos] != '-')
            throw std::invalid_argument("bad ISO-8601 suffix: '" + raw + "'");
    }
    using namespace std::chrono;
    year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 60)
        throw std::invalid_argument("out-of-range timestamp: '" + raw + "'");
    auto tp = sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
    return tp.time_since_epoch().count();
}

std::string format_timestamp(std::int64_t seconds) {
    using namespace std::chrono;
    sys_seconds tp{std::chrono::seconds{seconds}};
    auto days = floor<std::chrono::days>(tp);
    hh_mm_ss<std::chrono::seconds> hms{tp - days};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%sT%02lld:%02lld:%02lld", day_label(seconds).c_str(),
                  static_cast<long long>(hms.hours().count()),
                  static_cast<long long>(hms.minutes().count()),
                  static_cast<long long>(hms.seconds().count()));
    return buf;
}

std::vector<Episode> load_ohlcv_csv(std::istream& in, const CsvSchema& schema, bool drop_first_slot) {
    std::size_t line = 0;
    std::size_t record_line = 0;
    auto header = read_record(in, line, record_line);
    if (!header) return {};

    const std::string wanted[6] = {schema.timestamp, schema.open, schema.high,
                                   schema.low,       schema.close, schema.volume};
    std::size_t column[6];
    for (int k = 0; k < 6; ++k) {
        auto it = std::find_if(header->begin(), header->end(), [&](const std::string& h) {
            return lower(trim(h)) == lower(wanted[k]);
        });
        if (it == header->end()) throw ParseError(record_line, "missing column '" + wanted[k] + "'");
        column[k] = static_cast<std::size_t>(it - header->begin());
    }

    std::map<std::string, Episode> by_day;
    while (auto rec = read_record(in, line, record_line)) {
        if (rec->size() == 1 && trim((*rec)[0]).empty()) continue;
        for (std::size_t c : column) {
            if (c >= rec->size()) throw ParseError(record_line, "too few fields");
        }
        OhlcvBar bar;
        try {
            bar.timestamp = parse_timestamp((*rec)[column[0]]);
        } catch (const std::invalid_argument& e) {
            throw ParseError(record_line, e.what());
        }
        bar.open = parse_number((*rec)[column[1]], record_line, wanted[1]);
        bar.high = parse_number((*rec)[column[2]], record_line, wanted[2]);
        bar.low = parse_number((*rec)[column[3]], record_line, wanted[3]);
        bar.close = parse_number((*rec)[column[4]], record_line, wanted[4]);
        bar.volume = parse_number((*rec)[column[5]], record_line, wanted[5]);
        try {
            validate_bar(bar);
        } catch (const InvalidBar& e) {
            throw ParseError(record_line, e.what());
        }

        const std::string day = day_label(bar.timestamp);
        auto& ep = by_day[day];
        if (ep.bars.empty()) {
            ep.label = day;
            ep.first_slot_dropped = drop_first_slot;
        } else if (bar.timestamp <= ep.bars.back().timestamp) {
            throw OrderingError(record_line, "timestamp not after previous bar of " + day);
        }
        bar.slot_index = ep.bars.size();
        ep.bars.push_back(bar);
    }

    std::vector<Episode> out;
    out.reserve(by_day.size());
    for (auto& [day, ep] : by_day) out.push_back(std::move(ep));
    return out;
}

std::vector<Episode> load_ohlcv_csv_file(const std::string& path, const CsvSchema& schema,
                                         bool drop_first_slot) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open input file '" + path + "'");
    return load_ohlcv_csv(in, schema, drop_first_slot);
}

namespace {

std::string exact(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace

void write_ohlcv_csv(std::ostream& out, std::span<const Episode> episodes) {
    out << "timestamp,open,high,low,close,volume\n";
    for (const auto& ep : episodes) {
        for (const auto& b : ep.bars) {
            out << format_timestamp(b.timestamp) << ',' << exact(b.open) << ',' << exact(b.high) << ','
                << exact(b.low) << ',' << exact(b.close) << ',' << exact(b.volume) << '\n';
        }
    }
}

void write_dataset_csv(std::ostream& out, const Episode& episode,
                       std::span<const DecisionSample> samples) {
    auto bars = modeled_bars(episode);
    out << "slot,d,g\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::size_t slot = i < bars.size() ? bars[i].slot_index : i;
        out << slot << ',' << exact(samples[i].d) << ',' << exact(samples[i].g) << '\n';
    }
}

}  // namespace pihedge
