#pragma once

// Architecture report rows and prune-trace CSV export/import. CSV fields use
// RFC-4180-style quoting and doubles print with max_digits10 so re-importing
// reproduces values exactly.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "prunelab/errors.hpp"
#include "prunelab/groups.hpp"
#include "prunelab/model.hpp"
#include "prunelab/trainer.hpp"

namespace prunelab {

struct ArchRow {
  int hidden = 0;
  int ffn_intermediate = 0;
  int heads = 0;
  int head_dim = 0;
  int layers = 0;
  std::int64_t params = 0;

  bool operator==(const ArchRow&) const = default;
};

inline ArchRow arch_row(const ModelConfig& cfg) {
  ArchRow r;
  r.hidden = cfg.hidden;
  r.ffn_intermediate = cfg.ffn.empty() ? 0 : cfg.ffn[0];
  r.heads = cfg.heads.empty() ? 0 : cfg.heads[0];
  r.head_dim = cfg.head_dim;
  r.layers = cfg.layers();
  r.params = parameter_count(cfg);
  return r;
}

template <typename T>
ArchRow arch_row(const TransformerModel<T>& mdl) {
  ArchRow r = arch_row(mdl.cfg);
  r.params = parameter_count(mdl);
  return r;
}

namespace detail {

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string fmt_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return ss.str();
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(Errc::config_error, what + " holds unparsable number '" + s + "'");
  }
}

inline std::int64_t parse_i64(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const std::int64_t v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(Errc::config_error, what + " holds unparsable integer '" + s + "'");
  }
}

}  // namespace detail

inline constexpr const char* kArchHeader = "hidden,ffn_intermediate,heads,head_dim,layers,params";

inline std::string render_arch_csv(const std::vector<ArchRow>& rows) {
  std::string out = std::string(kArchHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.hidden) + "," + std::to_string(r.ffn_intermediate) + "," +
           std::to_string(r.heads) + "," + std::to_string(r.head_dim) + "," +
           std::to_string(r.layers) + "," + std::to_string(r.params) + "\n";
  }
  return out;
}

// Fixed-width human rendering of the same values in the same column order.
inline std::string render_arch_table(const std::vector<ArchRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(8) << "hidden" << std::setw(18) << "ffn_intermediate"
      << std::setw(7) << "heads" << std::setw(10) << "head_dim" << std::setw(8) << "layers"
      << "params\n";
  for (const auto& r : rows)
    out << std::left << std::setw(8) << r.hidden << std::setw(18) << r.ffn_intermediate
        << std::setw(7) << r.heads << std::setw(10) << r.head_dim << std::setw(8) << r.layers
        << r.params << "\n";
  return out.str();
}

inline std::vector<ArchRow> parse_arch_csv(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  if (!std::getline(ss, line) || line != kArchHeader)
    fail(Errc::config_error, "arch csv header mismatch: " + line);
  std::vector<ArchRow> rows;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto f = detail::csv_split(line);
    if (f.size() != 6) fail(Errc::config_error, "arch csv row needs 6 fields: " + line);
    ArchRow r;
    r.hidden = static_cast<int>(detail::parse_i64(f[0], "hidden"));
    r.ffn_intermediate = static_cast<int>(detail::parse_i64(f[1], "ffn_intermediate"));
    r.heads = static_cast<int>(detail::parse_i64(f[2], "heads"));
    r.head_dim = static_cast<int>(detail::parse_i64(f[3], "head_dim"));
    r.layers = static_cast<int>(detail::parse_i64(f[4], "layers"));
    r.params = detail::parse_i64(f[5], "params");
    rows.push_back(r);
  }
  return rows;
}

// The CSV-facing view of a prune event; per-layer means stand in for the
// full index lists.
struct ExportedTraceRow {
  std::int64_t step = 0;
  std::int64_t tokens = 0;
  double s_attn = 0, s_ffn = 0, s_stem = 0;
  std::string chosen;
  int m = 0;
  double mean_h = 0, mean_n = 0;
  std::int64_t params = 0;

  bool operator==(const ExportedTraceRow&) const = default;
};

inline constexpr const char* kTraceHeader =
    "step,tokens,s_attn,s_ffn,s_stem,chosen,m,mean_h,mean_n,params";

inline std::vector<ExportedTraceRow> exported_rows(const PruneTrace& trace) {
  std::vector<ExportedTraceRow> out;
  for (const auto& t : trace) {
    ExportedTraceRow r;
    r.step = t.step;
    r.tokens = t.tokens;
    r.s_attn = t.s_attn;
    r.s_ffn = t.s_ffn;
    r.s_stem = t.s_stem;
    r.chosen = group_type_name(t.chosen);
    r.m = t.hidden;
    double sh = 0, sn = 0;
    for (int h : t.heads) sh += h;
    for (int n : t.ffn) sn += n;
    r.mean_h = t.heads.empty() ? 0.0 : sh / static_cast<double>(t.heads.size());
    r.mean_n = t.ffn.empty() ? 0.0 : sn / static_cast<double>(t.ffn.size());
    r.params = t.params;
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string export_trace(const PruneTrace& trace) {
  if (trace.empty()) fail(Errc::config_error, "refusing to export an empty trace");
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i].params >= trace[i - 1].params)
      fail(Errc::config_error, "trace params not strictly decreasing at event " +
                                   std::to_string(i));
  std::string out = std::string(kTraceHeader) + "\n";
  for (const auto& r : exported_rows(trace)) {
    out += std::to_string(r.step) + "," + std::to_string(r.tokens) + "," +
           detail::fmt_double(r.s_attn) + "," + detail::fmt_double(r.s_ffn) + "," +
           detail::fmt_double(r.s_stem) + "," + detail::csv_quote(r.chosen) + "," +
           std::to_string(r.m) + "," + detail::fmt_double(r.mean_h) + "," +
           detail::fmt_double(r.mean_n) + "," + std::to_string(r.params) + "\n";
  }
  return out;
}

inline void export_trace_file(const PruneTrace& trace, const std::string& path) {
  const std::string body = export_trace(trace);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_failure, "cannot open trace file for writing: " + path);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  out.flush();
  if (!out) fail(Errc::io_failure, "write error on trace file: " + path);
}

inline std::vector<ExportedTraceRow> import_trace(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  if (!std::getline(ss, line) || line != kTraceHeader)
    fail(Errc::config_error, "trace csv header mismatch: " + line);
  std::vector<ExportedTraceRow> rows;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto f = detail::csv_split(line);
    if (f.size() != 10) fail(Errc::config_error, "trace csv row needs 10 fields: " + line);
    ExportedTraceRow r;
    r.step = detail::parse_i64(f[0], "step");
    r.tokens = detail::parse_i64(f[1], "tokens");
    r.s_attn = detail::parse_double(f[2], "s_attn");
    r.s_ffn = detail::parse_double(f[3], "s_ffn");
    r.s_stem = detail::parse_double(f[4], "s_stem");
    r.chosen = f[5];
    r.m = static_cast<int>(detail::parse_i64(f[6], "m"));
    r.mean_h = detail::parse_double(f[7], "mean_h");
    r.mean_n = detail::parse_double(f[8], "mean_n");
    r.params = detail::parse_i64(f[9], "params");
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<ExportedTraceRow> import_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_failure, "cannot open trace file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return import_trace(ss.str());
}

// Metrics log (one row per gd step) shares the CSV conventions.
inline constexpr const char* kMetricsHeader = "step,tokens,loss,lr,params";

inline std::string export_metrics(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows)
    out += std::to_string(r.step) + "," + std::to_string(r.tokens) + "," +
           detail::fmt_double(r.loss) + "," + detail::fmt_double(r.lr) + "," +
           std::to_string(r.params) + "\n";
  return out;
}

inline void export_metrics_file(const std::vector<MetricsRow>& rows, const std::string& path) {
  const std::string body = export_metrics(rows);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_failure, "cannot open metrics file for writing: " + path);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) fail(Errc::io_failure, "write error on metrics file: " + path);
}

}  // namespace prunelab
