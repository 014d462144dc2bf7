#include "pihedge/io.hpp"

#include "pihedge/error.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace pihedge {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("error reading '" + path + "'");
    return buf.str();
}

void write_text_file(const std::string& path, std::string_view text) {
    namespace fs = std::filesystem;
    std::error_code ec;
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent, ec);
    if (ec) throw IoError("cannot create directory '" + parent.string() + "': " + ec.message());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("error writing '" + path + "'");
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    auto [end, ec] = std::to_chars(buf, buf + 16, value, 16);
    std::string s(buf, end);
    return std::string(16 - s.size(), '0') + s;
}

std::string format_double(double x) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, end);
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m, const std::string& column_prefix) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << column_prefix << j;
    out << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
        out << '\n';
    }
}

Eigen::MatrixXd read_matrix_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "missing header row");
    std::size_t cols = 1;
    for (char c : line) cols += c == ',';
    std::vector<double> data;
    std::size_t rows = 0, lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t n = 0;
        const char* p = line.data();
        const char* end = p + line.size();
        while (true) {
            double v = 0.0;
            auto [next, ec] = std::from_chars(p, end, v);
            if (ec != std::errc()) throw ParseError(lineno, "expected a number");
            data.push_back(v);
            ++n;
            if (next == end) break;
            if (*next != ',') throw ParseError(lineno, "expected ','");
            p = next + 1;
        }
        if (n != cols) throw ParseError(lineno, "expected " + std::to_string(cols) + " values, found " + std::to_string(n));
        ++rows;
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data[i * cols + j];
    return m;
}

Eigen::MatrixXd read_matrix_csv_file(const std::string& path) {
    std::istringstream in(read_text_file(path));
    return read_matrix_csv(in);
}

}  // namespace pihedge
