#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdpa/evaluation.hpp"
#include "mdpa/sampler.hpp"
#include "mdpa/scenario.hpp"

namespace mdpa {

/// 17 significant digits: enough to round-trip any double exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  // subnormals report out-of-range but still parse exactly
  if ((ec != std::errc{} && ec != std::errc::result_out_of_range) || ptr != end || text.empty()) {
    throw Error(ErrorKind::Parse, "not a number: '" + text + "'");
  }
  return v;
}

namespace detail {

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

inline void write_sequence_rows(std::ostream& out, std::size_t segment, const Sequence& seq) {
  for (std::size_t s = 0; s < seq.frames(); ++s) {
    out << segment << ',' << s;
    for (std::size_t c = 0; c < seq.channels(); ++c) out << ',' << format_double(seq(s, c));
    out << '\n';
  }
}

inline void write_sequence_header(std::ostream& out, std::size_t channels) {
  out << "segment,frame";
  for (std::size_t c = 0; c < channels; ++c) out << ",ch" << c;
  out << '\n';
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

inline nlohmann::json report_to_json(const EvalReport& r) {
  return {{"fid_k", r.fid_k},           {"fid_m", r.fid_m},         {"div_k", r.div_k},
          {"div_m", r.div_m},           {"accel_mean", r.accel_mean}, {"accel_var", r.accel_var},
          {"jerk_mean", r.jerk_mean},   {"jerk_var", r.jerk_var},   {"n_gen", r.n_gen},
          {"n_gt", r.n_gt}};
}

/// Writes the run artifacts into `dir` and returns the manifest path.
/// Everything except manifest.json is a pure function of the run; the
/// wall time and timestamp live only in the manifest.
inline std::filesystem::path write_run(const RunResult& result, const std::optional<EvalReport>& report,
                                       const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create '" + dir.string() + "': " + ec.message());
  if (result.final_segments.empty()) throw Error(ErrorKind::InvalidConfig, "write_run: empty result");
  const std::size_t channels = result.final_segments.front().channels();

  {
    const auto path = dir / "segments.csv";
    auto out = detail::open_for_write(path);
    detail::write_sequence_header(out, channels);
    for (std::size_t k = 0; k < result.final_segments.size(); ++k) {
      detail::write_sequence_rows(out, k, result.final_segments[k]);
    }
    detail::finish(out, path);
  }
  {
    const auto path = dir / "long_sequence.csv";
    auto out = detail::open_for_write(path);
    detail::write_sequence_header(out, channels);
    detail::write_sequence_rows(out, 0, result.long_sequence);
    detail::finish(out, path);
  }
  {
    const auto path = dir / "omega.csv";
    auto out = detail::open_for_write(path);
    out << "step";
    for (std::size_t k = 0; k < result.final_segments.size(); ++k) out << ",omega" << k;
    out << '\n';
    for (std::size_t n = 0; n < result.omega_grid.size(); ++n) {
      out << n;
      for (double w : result.omega_grid[n]) out << ',' << format_double(w);
      out << '\n';
    }
    detail::finish(out, path);
  }
  {
    const auto path = dir / "energy.csv";
    auto out = detail::open_for_write(path);
    out << "step,transient,terminal,total\n";
    for (std::size_t n = 0; n < result.energy_trace.size(); ++n) {
      const auto& e = result.energy_trace[n];
      out << n << ',' << format_double(e.transient) << ',' << format_double(e.terminal) << ','
          << format_double(e.total) << '\n';
    }
    detail::finish(out, path);
  }

  nlohmann::json manifest;
  manifest["method"] = to_string(result.method);
  manifest["seed"] = result.seed;
  manifest["fingerprint"] = result.fingerprint;
  manifest["wall_time_seconds"] = result.wall_time_seconds;
  manifest["timestamp"] = detail::utc_timestamp();
  manifest["steps"] = result.omega_grid.size();
  manifest["segments"] = result.final_segments.size();
  manifest["diagnostics"] = result.diagnostics;
  manifest["files"] = {"segments.csv", "long_sequence.csv", "omega.csv", "energy.csv"};
  if (report) manifest["metrics"] = report_to_json(*report);
  const auto path = dir / "manifest.json";
  auto out = detail::open_for_write(path);
  out << manifest.dump(2) << '\n';
  detail::finish(out, path);
  return path;
}

inline constexpr const char* kComparisonOrder[] = {"ground_truth", "linear", "sigmoid", "sine", "mdpa"};

/// Table-1 style CSV: known method names first in canonical order, then any
/// other keys alphabetically.
inline std::filesystem::path export_comparison_table(const std::map<std::string, EvalReport>& reports,
                                                     const std::filesystem::path& path) {
  if (reports.empty()) throw Error(ErrorKind::InvalidConfig, "export_comparison_table: no reports");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::vector<std::string> order;
  for (const char* name : kComparisonOrder) {
    if (reports.count(name)) order.emplace_back(name);
  }
  for (const auto& [name, _] : reports) {
    if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);
  }
  auto out = detail::open_for_write(path);
  out << "method,fid_k,fid_m,div_k,div_m,accel_mean,accel_var,jerk_mean,jerk_var\n";
  for (const auto& name : order) {
    const EvalReport& r = reports.at(name);
    out << name << ',' << format_double(r.fid_k) << ',' << format_double(r.fid_m) << ',' << format_double(r.div_k)
        << ',' << format_double(r.div_m) << ',' << format_double(r.accel_mean) << ',' << format_double(r.accel_var)
        << ',' << format_double(r.jerk_mean) << ',' << format_double(r.jerk_var) << '\n';
  }
  detail::finish(out, path);
  return path;
}

/// Reads back a CSV written by this module: header row plus numeric rows
/// (the first column of comparison tables is kept as text).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return cells;
  };
  CsvTable table;
  std::string line;
  if (std::getline(in, line)) table.header = split(line);
  while (std::getline(in, line)) {
    if (!line.empty()) table.rows.push_back(split(line));
  }
  return table;
}

}  // namespace mdpa
