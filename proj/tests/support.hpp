#pragma once

#include "pihedge/cli.hpp"
#include "pihedge/io.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace support {

namespace fs = std::filesystem;

inline std::string source_path(const std::string& rel) { return std::string(PIHEDGE_SOURCE_DIR) + "/" + rel; }

// Directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("pihedge-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    std::string str() const { return path_.string(); }
    std::string operator/(const std::string& rel) const { return (path_ / rel).string(); }

private:
    fs::path path_;
};

struct RunResult {
    int code = 0;
    std::string out, err;
};

inline RunResult run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "pihedge");
    std::ostringstream out, err;
    RunResult r;
    r.code = pihedge::cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

// Pipeline command on the bundled config and fixture, writing below `out`.
inline RunResult pipeline(const std::string& command, const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{command,
                                  "--config",
                                  source_path("config/pipeline.ini"),
                                  "--out",
                                  out,
                                  "--set",
                                  "data.csv=" + source_path("tests/data/fixture.csv")};
    args.insert(args.end(), extra.begin(), extra.end());
    return run_cli(args);
}

inline nlohmann::json read_json(const std::string& path) { return nlohmann::json::parse(pihedge::read_text_file(path)); }

// Relative path -> contents for every regular file below root.
inline std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = pihedge::read_text_file(e.path().string());
    return files;
}

}  // namespace support
