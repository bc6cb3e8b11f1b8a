#pragma once

/**
 * File formats: lattice fields travel as CSV (`index,re,im`, one row per
 * cell) plus a JSON sidecar `<path>.json` carrying the geometry {p,N,K}.
 * Doubles are printed with 17 significant digits so a write/read cycle is
 * bit-exact.  All writers go through an atomic temp-file + rename.
 */

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "qpfield/lattice.hpp"

namespace qpfield {

using json = nlohmann::json;

/// Write `content` to `path` atomically (temp file in the same directory,
/// then rename), so readers never observe a partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open for writing: " + tmp.string());
        os << content;
        if (!os.good()) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

/// 17 significant digits: round-trips any double exactly.
inline std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void write_field_csv(const std::filesystem::path& path, const LatticeField& f) {
    std::string out;
    out.reserve(f.size() * 24 + 16);
    out += "index,re,im\n";
    for (std::size_t i = 0; i < f.size(); ++i) {
        out += std::to_string(i);
        out += ',';
        out += fmt_double(f[i].real());
        out += ',';
        out += fmt_double(f[i].imag());
        out += '\n';
    }
    atomic_write(path, out);
    const auto& g = f.geometry();
    json side{{"p", g.p}, {"N", g.N}, {"K", g.K}};
    atomic_write(path.string() + ".json", side.dump(2) + "\n");
}

inline LatticeField read_field_csv(const std::filesystem::path& path) {
    std::ifstream side(path.string() + ".json");
    if (!side) throw std::runtime_error("missing geometry sidecar for " + path.string());
    json meta = json::parse(side);
    LatticeGeometry g(meta.at("p").get<long>(), meta.at("N").get<int>(), meta.at("K").get<int>());

    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line.rfind("index,re,im", 0) != 0)
        throw std::runtime_error("bad field CSV header in " + path.string());
    LatticeField f(g);
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t idx;
        double re, im;
        if (std::sscanf(line.c_str(), "%zu,%lf,%lf", &idx, &re, &im) != 3)
            throw std::runtime_error("bad field CSV row: " + line);
        if (idx >= g.points) throw std::runtime_error("field CSV index out of range");
        f[idx] = {re, im};
        ++rows;
    }
    if (rows != g.points) throw std::runtime_error("field CSV row count does not match geometry");
    return f;
}

/// Generic CSV writer for small tables (header + rows of preformatted cells).
inline void write_csv(const std::filesystem::path& path, const std::string& header,
                      const std::vector<std::string>& rows) {
    std::string out = header;
    out += '\n';
    for (const auto& r : rows) {
        out += r;
        out += '\n';
    }
    atomic_write(path, out);
}

}  // namespace qpfield
