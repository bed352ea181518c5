#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "termcov/empirical.hpp"
#include "termcov/io.hpp"
#include "termcov/mc.hpp"

namespace termcov {

inline std::string l_label(double l) {
  if (std::isinf(l)) return "inf";
  std::ostringstream os;
  os << l;
  return os.str();
}

inline json mc_result_to_json(const McResult& r) {
  json cells = json::array();
  for (const auto& c : r.cells) {
    json jc{{"model", c.model},       {"scenario", c.scenario}, {"l", l_label(c.l)},
            {"re_median", c.re_median}, {"re_q1", c.re_q1},     {"re_q3", c.re_q3},
            {"replications", c.replications}, {"wall_seconds", c.wall_seconds}};
    for (size_t p = 0; p < kDimensionThresholds.size(); ++p) {
      const std::string key = "d" + std::to_string(static_cast<int>(kDimensionThresholds[p] * 100));
      jc[key + "_median"] = c.d_median[p];
      jc[key + "_q1"] = c.d_q1[p];
      jc[key + "_q3"] = c.d_q3[p];
    }
    cells.push_back(jc);
  }
  return json{{"kind", "mc"}, {"cells", cells}};
}

inline void write_mc_summary_csv(const std::string& path, const json& mc_json) {
  auto out = detail::open_out(path);
  out << "model,scenario,l,re_median,re_q1,re_q3";
  for (double p : kDimensionThresholds) {
    const std::string key = "d" + std::to_string(static_cast<int>(p * 100));
    out << "," << key << "_median," << key << "_q1," << key << "_q3";
  }
  out << ",replications,wall_seconds\n";
  for (const auto& c : mc_json.at("cells")) {
    out << c.at("model").get<std::string>() << "," << c.at("scenario").get<std::string>() << ","
        << c.at("l").get<std::string>() << "," << c.at("re_median").get<double>() << ","
        << c.at("re_q1").get<double>() << "," << c.at("re_q3").get<double>();
    for (double p : kDimensionThresholds) {
      const std::string key = "d" + std::to_string(static_cast<int>(p * 100));
      out << "," << c.at(key + "_median").get<double>() << "," << c.at(key + "_q1").get<double>()
          << "," << c.at(key + "_q3").get<double>();
    }
    out << "," << c.at("replications").get<int>() << "," << c.at("wall_seconds").get<double>()
        << "\n";
  }
}

inline json empirical_result_to_json(const EmpiricalResult& r) {
  json years = json::array();
  for (const auto& y : r.years) {
    json jy{{"label", y.label},
            {"rows", y.rows},
            {"hs_norm_total", y.hs_norm_total},
            {"degenerate", y.degenerate}};
    json levels = json::array();
    for (const auto& s : y.levels)
      levels.push_back({{"l", s.l}, {"flags", s.flags}, {"ratio", s.ratio}});
    jy["levels"] = levels;
    jy["d_own"] = y.d_own;
    jy["d_long"] = y.d_long;
    years.push_back(jy);
  }
  return json{{"kind", "empirical"}, {"years", years}};
}

inline void write_year_report_csv(const std::string& path, const json& emp_json) {
  auto out = detail::open_out(path);
  const auto& years = emp_json.at("years");
  out << "label,rows,hs_norm_total";
  if (!years.empty())
    for (const auto& lv : years.front().at("levels"))
      out << ",flags_l" << lv.at("l").get<double>() << ",ratio_l" << lv.at("l").get<double>();
  out << ",d_own_85,d_own_90,d_own_95,d_own_99,d_long_85,d_long_90,d_long_95,d_long_99,degenerate\n";
  for (const auto& y : years) {
    out << y.at("label").get<std::string>() << "," << y.at("rows").get<int>() << ","
        << y.at("hs_norm_total").get<double>();
    for (const auto& lv : y.at("levels"))
      out << "," << lv.at("flags").get<int>() << "," << lv.at("ratio").get<double>();
    for (const auto& v : y.at("d_own")) out << "," << v.get<int>();
    for (const auto& v : y.at("d_long")) out << "," << v.get<int>();
    out << "," << (y.at("degenerate").get<bool>() ? 1 : 0) << "\n";
  }
}

inline json rmae_result_to_json(const RmaeResult& r) {
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"lag", row.lag}, {"source", row.source}, {"d", row.d}, {"rmae", row.rmae}});
  return json{{"kind", "rmae"}, {"rows", rows}, {"validation_rows", r.validation_rows}};
}

inline void write_rmae_csv(const std::string& path, const json& rmae_json) {
  auto out = detail::open_out(path);
  out << "lag,source,d,rmae\n";
  for (const auto& row : rmae_json.at("rows"))
    out << row.at("lag").get<int>() << "," << row.at("source").get<std::string>() << ","
        << row.at("d").get<int>() << "," << row.at("rmae").get<double>() << "\n";
}

/// Run manifest: configuration hash, seed, version, and the only timestamp
/// that appears anywhere in the outputs.
inline void write_run_manifest(const std::string& path, const json& config, uint64_t seed,
                               const std::string& command) {
  char stamp[64];
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::strftime(stamp, sizeof(stamp), "%FT%TZ", std::gmtime(&now));
  json j{{"config_hash", fnv1a64(config.dump())},
         {"seed", seed},
         {"command", command},
         {"version", "termcov 0.1.0"},
         {"timestamp", stamp}};
  write_json_file(path, j);
}

/// Re-emit the CSV tables from a previously written results.json.
inline void emit_tables(const std::string& out_dir, const json& results) {
  std::filesystem::create_directories(out_dir);
  const std::string kind = results.value("kind", "");
  if (kind == "mc")
    write_mc_summary_csv(out_dir + "/mc_summary.csv", results);
  else if (kind == "empirical")
    write_year_report_csv(out_dir + "/year_report.csv", results);
  else if (kind == "rmae")
    write_rmae_csv(out_dir + "/rmae.csv", results);
  else
    throw DataError("emit_tables: unknown results kind '" + kind + "'");
}

}  // namespace termcov
