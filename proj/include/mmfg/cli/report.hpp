#pragma once

// Report emission. Reports are JSON documents with insertion-ordered keys and
// floats printed as %.17g; per-epsilon tables are CSV with a fixed header.
// Nothing time-dependent (wall clock, host) is written, so identical inputs
// give byte-identical files.

#include "mmfg/cli/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace mmfg::cli {

inline std::string format_double(double x) {
  if (!std::isfinite(x)) return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline void write_json(std::ostream& os, const json& j, int indent, int depth) {
  auto pad = [&](int d) { os << std::string(std::size_t(indent * d), ' '); };
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      std::size_t i = 0;
      for (auto it = j.begin(); it != j.end(); ++it, ++i) {
        pad(depth + 1);
        os << json(it.key()).dump() << ": ";
        write_json(os, it.value(), indent, depth + 1);
        os << (i + 1 < j.size() ? ",\n" : "\n");
      }
      pad(depth);
      os << "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      bool flat = std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_primitive(); });
      os << (flat ? "[" : "[\n");
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (!flat) pad(depth + 1);
        write_json(os, j[i], indent, depth + 1);
        if (i + 1 < j.size()) os << (flat ? ", " : ",\n");
      }
      if (!flat) {
        os << "\n";
        pad(depth);
      }
      os << "]";
      return;
    }
    case json::value_t::number_float: {
      double x = j.get<double>();
      // JSON has no literal for non-finite values.
      os << (std::isfinite(x) ? format_double(x) : "null");
      return;
    }
    default: os << j.dump();
  }
}

}  // namespace detail

/// Serializes with 17 significant digits for every float.
inline std::string dump_report(const json& j) {
  std::ostringstream os;
  detail::write_json(os, j, 2, 0);
  os << "\n";
  return os.str();
}

inline const std::vector<std::string>& table_header() {
  static const std::vector<std::string> h{"epsilon", "mgm",  "mDu",  "phiDu",     "regQuad", "intM",    "intU",
                                          "intUM",   "intH", "minM", "maxWeakVI", "iters",   "residual"};
  return h;
}

struct TableRow {
  double epsilon = 0, mgm = 0, mDu = 0, phiDu = 0, regQuad = 0, intM = 0, intU = 0, intUM = 0, intH = 0, minM = 0,
         maxWeakVI = 0;
  int iters = 0;
  double residual = 0;
};

inline std::string format_table(const std::vector<TableRow>& rows) {
  std::ostringstream os;
  const auto& h = table_header();
  for (std::size_t i = 0; i < h.size(); ++i) os << (i ? "," : "") << h[i];
  os << "\n";
  for (const auto& r : rows) {
    for (double v : {r.epsilon, r.mgm, r.mDu, r.phiDu, r.regQuad, r.intM, r.intU, r.intUM, r.intH, r.minM, r.maxWeakVI})
      os << format_double(v) << ",";
    os << r.iters << "," << format_double(r.residual) << "\n";
  }
  return os.str();
}

struct ReportBundle {
  json report;
  std::vector<TableRow> rows;
  bool has_table = false;
};

struct WrittenFiles {
  std::string report;
  std::string table;  // empty when the command has no table
};

/// Writes <dir>/<stem>.json and, if present, <dir>/<stem>.csv. Filesystem
/// errors are reported with the OS message.
inline WrittenFiles emit_report(const ReportBundle& b, const std::string& dir, const std::string& stem) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
  auto write = [](const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + p.string() + "' for writing: " + std::strerror(errno));
    out << text;
    out.close();
    if (!out) throw Error("write to '" + p.string() + "' failed: " + std::strerror(errno));
  };
  WrittenFiles w;
  fs::path base(dir);
  w.report = (base / (stem + ".json")).string();
  write(w.report, dump_report(b.report));
  if (b.has_table) {
    w.table = (base / (stem + ".csv")).string();
    write(w.table, format_table(b.rows));
  }
  return w;
}

}  // namespace mmfg::cli
