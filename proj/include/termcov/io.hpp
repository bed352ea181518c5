#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "termcov/covariation.hpp"
#include "termcov/errors.hpp"
#include "termcov/panels.hpp"
#include "termcov/simulator.hpp"
#include "termcov/step_kernel.hpp"
#include "termcov/truncation.hpp"
#include "termcov/util.hpp"

namespace termcov {

using nlohmann::json;

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << std::setprecision(17);
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Yield CSV ingestion: long format  date,maturity_years,yield
// ---------------------------------------------------------------------------

/// Loads a long-format yield CSV. Dates are ISO-8601 strings ordered
/// lexicographically; maturities are snapped to the grid within delta_n/2.
/// Duplicate (date, cell) pairs and unparseable rows are rejected with line
/// numbers. Every (date, maturity) cell must be present.
inline YieldPanel load_yield_csv(const std::string& path, double delta_n, double max_maturity) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open yield csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty yield csv: " + path);
  {
    auto header = detail::split_csv_line(line);
    if (header.size() != 3 || header[0] != "date" || header[1] != "maturity_years" ||
        header[2] != "yield")
      throw DataError("yield csv: expected header 'date,maturity_years,yield'");
  }
  const int m_cells = static_cast<int>(std::llround(max_maturity / delta_n));
  std::map<std::string, std::map<int, double>> by_date;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != 3)
      throw DataError("yield csv line " + std::to_string(line_no) + ": expected 3 fields");
    double maturity = 0.0, value = 0.0;
    try {
      maturity = std::stod(fields[1]);
      value = std::stod(fields[2]);
    } catch (const std::exception&) {
      throw DataError("yield csv line " + std::to_string(line_no) + ": unparseable number");
    }
    if (!std::isfinite(value))
      throw DataError("yield csv line " + std::to_string(line_no) + ": non-finite yield");
    const double cell = maturity / delta_n;
    const int j = static_cast<int>(std::llround(cell));
    if (std::abs(maturity - j * delta_n) > 0.5 * delta_n + 1e-12 || j < 0 || j > m_cells)
      throw DataError("yield csv line " + std::to_string(line_no) +
                      ": maturity off the grid: " + fields[1]);
    auto [it, inserted] = by_date[fields[0]].emplace(j, value);
    if (!inserted)
      throw DataError("yield csv line " + std::to_string(line_no) + ": duplicate cell for date " +
                      fields[0]);
  }
  if (by_date.size() < 2) throw DataError("yield csv: need at least two dates");

  YieldPanel panel;
  panel.grid = make_grid(delta_n, static_cast<int>(by_date.size()) - 1, max_maturity);
  panel.values.resize(by_date.size(), m_cells + 1);
  panel.dates.reserve(by_date.size());
  Eigen::Index i = 0;
  for (const auto& [date, cells] : by_date) {
    if (static_cast<int>(cells.size()) != m_cells + 1)
      throw DataError("yield csv: date " + date + " covers " + std::to_string(cells.size()) +
                      " maturities, need " + std::to_string(m_cells + 1));
    for (const auto& [j, v] : cells) panel.values(i, j) = v;
    panel.dates.push_back(date);
    ++i;
  }
  return panel;
}

// ---------------------------------------------------------------------------
// Wide panel CSV: first column date, then one column per maturity grid point
// ---------------------------------------------------------------------------

inline void write_panel_csv(const std::string& path, const Eigen::MatrixXd& values,
                            const GridSpec& grid, const std::vector<std::string>& dates = {}) {
  auto out = detail::open_out(path);
  out << "date";
  for (Eigen::Index j = 0; j < values.cols(); ++j) out << "," << j * grid.delta_n;
  out << "\n";
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    if (static_cast<size_t>(i) < dates.size())
      out << dates[i];
    else
      out << i;
    for (Eigen::Index j = 0; j < values.cols(); ++j) out << "," << values(i, j);
    out << "\n";
  }
}

/// Reads a wide panel CSV back into (dates, matrix).
inline std::pair<std::vector<std::string>, Eigen::MatrixXd> read_panel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open panel csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty panel csv: " + path);
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "date")
    throw DataError("panel csv: expected 'date' then maturity columns");
  const auto cols = static_cast<Eigen::Index>(header.size()) - 1;
  std::vector<std::string> dates;
  std::vector<double> buffer;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (static_cast<Eigen::Index>(fields.size()) != cols + 1)
      throw DataError("panel csv line " + std::to_string(line_no) + ": wrong field count");
    dates.push_back(fields[0]);
    for (Eigen::Index j = 1; j <= cols; ++j) {
      try {
        buffer.push_back(std::stod(fields[j]));
      } catch (const std::exception&) {
        throw DataError("panel csv line " + std::to_string(line_no) + ": unparseable number");
      }
    }
  }
  Eigen::MatrixXd values(dates.size(), cols);
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      values(i, j) = buffer[static_cast<size_t>(i * cols + j)];
  return {std::move(dates), std::move(values)};
}

// ---------------------------------------------------------------------------
// Kernel exports
// ---------------------------------------------------------------------------

/// Matrix CSV (first row = cell-midpoint maturities), JSON sidecar with the
/// scaling declaration, and (x, y, value) triplets for surface plots.
inline void write_kernel_csv(const std::string& path, const StepKernel& k) {
  auto out = detail::open_out(path);
  for (int j = 0; j < k.m_cells; ++j) out << (j ? "," : "") << (j + 0.5) * k.delta_n;
  out << "\n";
  for (int i = 0; i < k.m_cells; ++i) {
    for (int j = 0; j < k.m_cells; ++j) out << (j ? "," : "") << k.values(i, j);
    out << "\n";
  }
}

inline void write_kernel_sidecar(const std::string& path, const StepKernel& k) {
  json j{{"delta_n", k.delta_n}, {"m_cells", k.m_cells}, {"scaling", "includes_delta_n^-2"}};
  auto out = detail::open_out(path);
  out << j.dump(2) << "\n";
}

inline void write_kernel_triplets(const std::string& path, const StepKernel& k) {
  auto out = detail::open_out(path);
  out << "x,y,value\n";
  for (int i = 0; i < k.m_cells; ++i)
    for (int j = 0; j < k.m_cells; ++j)
      out << (i + 0.5) * k.delta_n << "," << (j + 0.5) * k.delta_n << "," << k.values(i, j) << "\n";
}

inline void export_kernel(const std::string& dir, const std::string& name, const StepKernel& k) {
  std::filesystem::create_directories(dir);
  write_kernel_csv(dir + "/" + name + ".csv", k);
  write_kernel_sidecar(dir + "/" + name + ".json", k);
  write_kernel_triplets(dir + "/" + name + "_surface.csv", k);
}

// ---------------------------------------------------------------------------
// Rule and estimation-run audit dumps
// ---------------------------------------------------------------------------

inline json rule_to_json(const RuleBuildResult& rule) {
  json j;
  j["l"] = rule.spec.l;
  j["d"] = rule.d;
  j["u_n"] = rule.spec.u_n;
  j["g_kind"] = rule.spec.g_kind == GKind::Mahalanobis ? "mahalanobis" : "l2";
  const auto& ev = rule.preliminary.eigenvalues;
  const int count = std::min<int>(rule.d + 1, static_cast<int>(ev.size()));
  j["eigenvalues"] = std::vector<double>(ev.data(), ev.data() + count);
  j["tail_mass"] = rule.spec.g_kind == GKind::Mahalanobis ? rule.spec.mahalanobis.tail_mass : 0.0;
  j["rho_star"] = rule.preliminary.rho_star;
  j["kept_fraction"] = rule.preliminary.kept_fraction;
  if (rule.preliminary.degenerate_iqr) j["degenerate_iqr"] = true;
  if (rule.l2_fallback) j["l2_fallback"] = true;
  return j;
}

/// Per-estimation manifest: row counts, threshold, and norm diagnostics.
inline json estimation_manifest(const CovariationResult& r) {
  const double total = hs_norm(r.kernel);
  const double truncated = hs_norm(r.truncated_kernel);
  json j;
  j["rows_used"] = r.rows.size();
  j["rows_flagged"] = r.flagged_rows.size();
  j["flagged_rows"] = r.flagged_rows;
  j["u_n"] = r.spec.u_n;
  j["g_kind"] = r.spec.g_kind == GKind::Mahalanobis ? "mahalanobis" : "l2";
  j["hs_norm_total"] = total;
  j["hs_norm_truncated"] = truncated;
  j["ratio"] = total > 0.0 ? truncated / total : 1.0;
  return j;
}

inline void write_jump_log_csv(const std::string& path, const std::vector<JumpEvent>& jumps) {
  auto out = detail::open_out(path);
  out << "step,component,l2_norm_of_jump\n";
  for (const auto& ev : jumps) out << ev.step << "," << ev.component << "," << ev.l2_norm << "\n";
}

// ---------------------------------------------------------------------------
// SimConfig JSON
// ---------------------------------------------------------------------------

inline json sim_config_to_json(const SimConfig& cfg) {
  return json{{"a", cfg.a},
              {"lambda1", cfg.lambda1},
              {"lambda2", cfg.lambda2},
              {"rho1", cfg.rho1},
              {"rho2", cfg.rho2},
              {"cir", {{"kappa", cfg.cir.kappa}, {"theta", cfg.cir.theta}, {"xi", cfg.cir.xi}, {"x0", cfg.cir.x0}}},
              {"grid", {{"delta_n", cfg.grid.delta_n}, {"n_steps", cfg.grid.n_steps}, {"max_maturity", cfg.grid.max_maturity}}},
              {"m_obs", cfg.m_obs},
              {"sigma_eps", cfg.sigma_eps},
              {"subres", cfg.subres},
              {"seed", cfg.seed},
              {"semigroup_jump_adjust", cfg.semigroup_jump_adjust}};
}

inline SimConfig sim_config_from_json(const json& j) {
  SimConfig cfg;
  try {
    cfg.a = j.value("a", 50.0);
    cfg.lambda1 = j.value("lambda1", 0.0);
    cfg.lambda2 = j.value("lambda2", 0.0);
    cfg.rho1 = j.value("rho1", 0.0);
    cfg.rho2 = j.value("rho2", 0.0);
    if (j.contains("cir")) {
      const auto& c = j.at("cir");
      cfg.cir.kappa = c.value("kappa", 1.5);
      cfg.cir.theta = c.value("theta", 0.058);
      cfg.cir.xi = c.value("xi", 0.05);
      cfg.cir.x0 = c.value("x0", cfg.cir.theta);
    }
    const auto& g = j.at("grid");
    cfg.grid = make_grid(g.at("delta_n").get<double>(), g.at("n_steps").get<int>(),
                         g.at("max_maturity").get<double>());
    cfg.m_obs = j.value("m_obs", 0);
    cfg.sigma_eps = j.value("sigma_eps", 0.0);
    cfg.subres = j.value("subres", 100);
    cfg.seed = j.value("seed", uint64_t{0});
    cfg.semigroup_jump_adjust = j.value("semigroup_jump_adjust", false);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sim config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return j;
}

inline void write_json_file(const std::string& path, const json& j) {
  auto out = detail::open_out(path);
  out << j.dump(2) << "\n";
}

}  // namespace termcov
