#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "types.hpp"
#include "wigner.hpp"

namespace giant_cavity::io {

/// Comma-separated numeric table with a header row. Values are written
/// with 17 significant digits so they re-parse bit-exactly.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        throw std::out_of_range("no column named " + name);
    }
};

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    return fmt::format("{:.17g}", v);
}

inline double parse_number(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw std::runtime_error("not a number: '" + s + "'");
    return v;
}

inline std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string(), "output.directory");
    return out;
}

inline void write_table(const std::filesystem::path& path, const Table& t) {
    auto out = open_for_write(path);
    for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << t.columns[i];
    out << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_number(row[i]);
        out << '\n';
    }
    if (!out) throw ConfigError("failed writing " + path.string(), "output.directory");
}

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, sep)) parts.push_back(item);
    return parts;
}

inline Table read_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty table");
    t.columns = split(line, ',');
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != t.columns.size())
            throw std::runtime_error(path.string() + ": row width does not match the header");
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) row.push_back(parse_number(c));
        t.rows.push_back(std::move(row));
    }
    return t;
}

/// Dense Wigner grid: one header line
///   # q_min=.. q_max=.. p_min=.. p_max=.. n_q=.. n_p=.. [key=value ...]
/// then n_q rows of n_p space-separated values (row i is q_i).
inline void write_wigner(const std::filesystem::path& path, const WignerGrid& g,
                         const std::map<std::string, std::string>& extra = {}) {
    auto out = open_for_write(path);
    const auto& s = g.spec;
    out << "# q_min=" << format_number(s.q_min) << " q_max=" << format_number(s.q_max)
        << " p_min=" << format_number(s.p_min) << " p_max=" << format_number(s.p_max) << " n_q=" << s.n_q
        << " n_p=" << s.n_p;
    for (const auto& [k, v] : extra) out << ' ' << k << '=' << v;
    out << '\n';
    for (Eigen::Index i = 0; i < g.values.rows(); ++i) {
        for (Eigen::Index j = 0; j < g.values.cols(); ++j) out << (j ? " " : "") << format_number(g.values(i, j));
        out << '\n';
    }
    if (!out) throw ConfigError("failed writing " + path.string(), "output.directory");
}

struct WignerFile {
    WignerGrid grid;
    std::map<std::string, std::string> header;
};

inline WignerFile read_wigner(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    if (line.rfind("# ", 0) != 0) throw std::runtime_error(path.string() + ": missing grid header");
    WignerFile f;
    for (const auto& tok : split(line.substr(2), ' ')) {
        const auto eq = tok.find('=');
        if (eq != std::string::npos) f.header[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    auto& s = f.grid.spec;
    s.q_min = parse_number(f.header.at("q_min"));
    s.q_max = parse_number(f.header.at("q_max"));
    s.p_min = parse_number(f.header.at("p_min"));
    s.p_max = parse_number(f.header.at("p_max"));
    s.n_q = std::stoul(f.header.at("n_q"));
    s.n_p = std::stoul(f.header.at("n_p"));
    f.grid.values.resize(static_cast<Eigen::Index>(s.n_q), static_cast<Eigen::Index>(s.n_p));
    for (Eigen::Index i = 0; i < f.grid.values.rows(); ++i) {
        if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": truncated grid");
        const auto cells = split(line, ' ');
        if (static_cast<Eigen::Index>(cells.size()) != f.grid.values.cols())
            throw std::runtime_error(path.string() + ": row width does not match n_p");
        for (Eigen::Index j = 0; j < f.grid.values.cols(); ++j)
            f.grid.values(i, j) = parse_number(cells[static_cast<std::size_t>(j)]);
    }
    return f;
}

}  // namespace giant_cavity::io
