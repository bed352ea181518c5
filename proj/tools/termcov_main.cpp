#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <limits>
#include <string>

#include "termcov/termcov.hpp"

namespace tc = termcov;
using tc::json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  uint64_t seed = 0;
  bool seed_set = false;
  unsigned threads = 0;
};

json section(const json& cfg, const std::string& name) {
  if (cfg.contains(name)) return cfg.at(name);
  return cfg;
}

tc::LogBondPanel load_panel(const json& cfg) {
  const double delta_n = cfg.at("delta_n").get<double>();
  const double max_maturity = cfg.at("max_maturity").get<double>();
  const std::string kind = cfg.value("input_kind", "yields");
  if (kind == "yields") {
    const auto yields = tc::load_yield_csv(cfg.at("yields_csv").get<std::string>(), delta_n, max_maturity);
    return tc::yields_to_log_prices(yields);
  }
  if (kind == "log_prices") {
    auto [dates, values] = tc::read_panel_csv(cfg.at("panel_csv").get<std::string>());
    const int m_cells = static_cast<int>(std::llround(max_maturity / delta_n));
    if (values.cols() != m_cells + 1)
      throw tc::DataError("panel csv: expected " + std::to_string(m_cells + 1) + " maturity columns");
    tc::LogBondPanel p;
    p.grid = tc::make_grid(delta_n, static_cast<int>(values.rows()) - 1, max_maturity);
    p.values = std::move(values);
    p.dates = std::move(dates);
    return p;
  }
  throw tc::ConfigError("input_kind must be 'yields' or 'log_prices'");
}

std::vector<int> boundaries_from_config(const json& cfg, const tc::LogBondPanel& panel,
                                        const tc::DifferenceReturnPanel& d) {
  if (cfg.contains("year_boundaries")) {
    auto b = cfg.at("year_boundaries").get<std::vector<int>>();
    if (b.empty() || b.front() != 0) b.insert(b.begin(), 0);
    if (b.back() != d.n_rows()) b.push_back(d.n_rows());
    return b;
  }
  if (!panel.dates.empty()) return tc::year_boundaries_from_dates(panel.dates);
  return {0, d.n_rows()};
}

int run_simulate(const CommonOpts& opts, const json& cfg) {
  tc::SimConfig sim = tc::sim_config_from_json(cfg);
  if (opts.seed_set) sim.seed = opts.seed;
  const auto res = tc::simulate_forward_panel(sim);
  std::filesystem::create_directories(opts.out_dir);

  const int m = sim.grid.maturity_cells();
  tc::write_panel_csv(opts.out_dir + "/forward_panel.csv", res.panel.values.leftCols(m),
                      sim.grid);
  const auto log_prices = tc::forwards_to_log_prices(res.panel);
  tc::write_panel_csv(opts.out_dir + "/log_prices.csv", log_prices.values, sim.grid);
  tc::write_jump_log_csv(opts.out_dir + "/jump_log.csv", res.jumps);
  {
    auto out = std::ofstream(opts.out_dir + "/cir.csv");
    out << std::setprecision(17) << "step,increment_integral\n";
    for (Eigen::Index i = 0; i < res.cir.increment_integrals.size(); ++i)
      out << i + 1 << "," << res.cir.increment_integrals(i) << "\n";
  }
  if (sim.m_obs > 0) {
    const auto obs = tc::observe(res.panel, sim.m_obs, sim.sigma_eps,
                                 tc::splitmix64(sim.seed ^ 0x0b5e7fULL));
    auto out = std::ofstream(opts.out_dir + "/observations.csv");
    out << std::setprecision(17) << "date,maturity_years,log_price\n";
    for (size_t i = 0; i < obs.per_date.size(); ++i)
      for (const auto& [j, v] : obs.per_date[i])
        out << i << "," << j * sim.grid.delta_n << "," << v << "\n";
    const auto smoothed = tc::presmooth(obs, sim.grid);
    tc::write_panel_csv(opts.out_dir + "/presmoothed_log_prices.csv", smoothed.values, sim.grid);
  }
  tc::write_json_file(opts.out_dir + "/config.json", tc::sim_config_to_json(sim));
  tc::write_run_manifest(opts.out_dir + "/manifest.json", tc::sim_config_to_json(sim), sim.seed,
                         "simulate");
  std::cout << "simulate: wrote " << opts.out_dir << " (jumps: " << res.jumps.size() << ")\n";
  return 0;
}

int run_estimate(const CommonOpts& opts, const json& cfg) {
  const auto panel = load_panel(cfg);
  const auto d = tc::difference_returns(panel);
  std::filesystem::create_directories(opts.out_dir);

  tc::CovariationResult result;
  json rule_json;
  if (cfg.contains("l")) {
    const auto built = tc::build_rule(d, cfg.at("l").get<double>(), cfg.value("explained", 0.90),
                                      cfg.value("w_exponent", 0.49));
    result = tc::truncated_covariation(d, built.spec);
    rule_json = tc::rule_to_json(built);
    tc::write_json_file(opts.out_dir + "/rule.json", rule_json);
  } else {
    tc::TruncationSpec spec;  // infinite threshold: untruncated
    result = tc::truncated_covariation(d, spec);
  }
  tc::export_kernel(opts.out_dir + "/kernels", "total", result.kernel);
  tc::export_kernel(opts.out_dir + "/kernels", "truncated", result.truncated_kernel);
  tc::export_kernel(opts.out_dir + "/kernels", "jump", result.jump_kernel);
  tc::write_json_file(opts.out_dir + "/run.json", tc::estimation_manifest(result));
  tc::write_run_manifest(opts.out_dir + "/manifest.json", cfg, opts.seed, "estimate");
  std::cout << "estimate: rows=" << result.rows.size() << " flagged=" << result.flagged_rows.size()
            << " ||q||=" << tc::hs_norm(result.kernel)
            << " ||q-||=" << tc::hs_norm(result.truncated_kernel) << "\n";
  return 0;
}

int run_rule(const CommonOpts& opts, const json& cfg) {
  const auto panel = load_panel(cfg);
  const auto d = tc::difference_returns(panel);
  const auto built = tc::build_rule(d, cfg.value("l", 3.0), cfg.value("explained", 0.90),
                                    cfg.value("w_exponent", 0.49));
  std::filesystem::create_directories(opts.out_dir);
  tc::write_json_file(opts.out_dir + "/rule.json", tc::rule_to_json(built));
  tc::write_run_manifest(opts.out_dir + "/manifest.json", cfg, opts.seed, "rule");
  std::cout << "rule: d=" << built.d << " u_n=" << built.spec.u_n
            << " rho*=" << built.preliminary.rho_star << "\n";
  return 0;
}

tc::McModel model_from_json(const json& j, const tc::GridSpec& grid) {
  if (j.is_string()) return tc::canonical_model(j.get<std::string>(), grid);
  tc::McModel m;
  m.name = j.value("name", "custom");
  json sim = j.at("sim");
  if (!sim.contains("grid"))
    sim["grid"] = {{"delta_n", grid.delta_n}, {"n_steps", grid.n_steps}, {"max_maturity", grid.max_maturity}};
  m.sim = tc::sim_config_from_json(sim);
  if (j.contains("l_values")) m.l_values = j.at("l_values").get<std::vector<double>>();
  m.observe_and_smooth = j.value("observe_and_smooth", m.sim.m_obs > 0);
  m.projection_dims = j.value("projection_dims", 3);
  return m;
}

int run_mc(const CommonOpts& opts, const json& cfg) {
  tc::GridSpec grid = tc::make_grid(cfg.value("grid", json::object()).value("delta_n", 0.01),
                                    cfg.value("grid", json::object()).value("n_steps", 100),
                                    cfg.value("grid", json::object()).value("max_maturity", 10.0));
  std::vector<tc::McModel> models;
  std::vector<std::string> scenarios = cfg.value("scenarios", std::vector<std::string>{"S1"});
  for (const auto& mj : cfg.at("models")) {
    for (const auto& sc : scenarios) {
      tc::McModel m = model_from_json(mj, grid);
      m.scenario = sc == "S2" ? tc::Scenario::S2 : tc::Scenario::S1;
      if (m.scenario == tc::Scenario::S2) m.name += "_S2";
      models.push_back(std::move(m));
    }
  }
  const int reps = cfg.value("replications", 100);
  const uint64_t seed = opts.seed_set ? opts.seed : cfg.value("master_seed", uint64_t{1});
  const auto result = tc::mc_run(models, reps, seed, opts.threads);

  std::filesystem::create_directories(opts.out_dir);
  const json results = tc::mc_result_to_json(result);
  tc::write_json_file(opts.out_dir + "/results.json", results);
  tc::write_mc_summary_csv(opts.out_dir + "/mc_summary.csv", results);
  tc::write_run_manifest(opts.out_dir + "/manifest.json", cfg, seed, "mc");
  for (const auto& c : result.cells)
    std::cout << c.model << "/" << c.scenario << " l=" << tc::l_label(c.l)
              << " rE median=" << c.re_median << " (" << c.re_q1 << "," << c.re_q3 << ")"
              << " D99=" << c.d_median[3] << "\n";
  return 0;
}

int run_empirical(const CommonOpts& opts, const json& cfg) {
  const auto panel = load_panel(cfg);
  const auto d = tc::difference_returns(panel);
  const auto boundaries = boundaries_from_config(cfg, panel, d);
  std::vector<std::string> labels;
  for (size_t k = 0; k + 1 < boundaries.size(); ++k)
    labels.push_back(!panel.dates.empty() ? panel.dates[boundaries[k]].substr(0, 4)
                                          : std::to_string(k));
  const auto l_values = cfg.value("l_values", std::vector<double>{3.0, 4.0, 5.0});
  const auto result = tc::empirical_run(d, boundaries, labels, l_values, cfg.value("l_ref", 3.0));

  std::filesystem::create_directories(opts.out_dir);
  const json results = tc::empirical_result_to_json(result);
  tc::write_json_file(opts.out_dir + "/results.json", results);
  tc::write_year_report_csv(opts.out_dir + "/year_report.csv", results);
  tc::export_kernel(opts.out_dir + "/kernels", "long_run", result.long_run.kernel);
  tc::write_run_manifest(opts.out_dir + "/manifest.json", cfg, opts.seed, "empirical");
  for (const auto& y : result.years)
    std::cout << y.label << " ||q||=" << y.hs_norm_total
              << " flags(l=" << y.levels.front().l << ")=" << y.levels.front().flags
              << " ratio=" << y.levels.front().ratio << " D99_own=" << y.d_own[3] << "\n";
  return 0;
}

int run_rmae(const CommonOpts& opts, const json& cfg) {
  const auto panel = load_panel(cfg);
  const auto d = tc::difference_returns(panel);
  const auto boundaries = boundaries_from_config(cfg, panel, d);
  const auto lags = cfg.value("lags", std::vector<int>{7, 30, 90, 180});
  std::vector<int> d_values;
  if (cfg.contains("d_values")) {
    d_values = cfg.at("d_values").get<std::vector<int>>();
  } else {
    for (int i = 1; i <= 16; ++i) d_values.push_back(i);
  }
  const int draws = cfg.value("draws_per_year", 25);
  const uint64_t seed = opts.seed_set ? opts.seed : cfg.value("seed", uint64_t{1});

  std::vector<std::string> sources = cfg.value("factor_sources", std::vector<std::string>{
                                                  "log_price_pcs", "long_run_eigen"});
  tc::RmaeResult combined;
  for (const auto& src : sources) {
    if (src == "log_price_pcs") {
      auto r = tc::rmae_study(panel, boundaries, tc::FactorSource::LogPricePcs, lags, d_values,
                              draws, seed);
      combined.validation_rows = r.validation_rows;
      combined.rows.insert(combined.rows.end(), r.rows.begin(), r.rows.end());
    } else if (src == "long_run_eigen") {
      const auto emp = tc::empirical_run(d, boundaries, {}, {cfg.value("l_ref", 3.0)},
                                         cfg.value("l_ref", 3.0));
      auto r = tc::rmae_study(panel, boundaries, tc::FactorSource::LongRunEigen, lags, d_values,
                              draws, seed, &emp.long_run);
      combined.validation_rows = r.validation_rows;
      combined.rows.insert(combined.rows.end(), r.rows.begin(), r.rows.end());
    } else {
      throw tc::ConfigError("rmae: unknown factor source '" + src + "'");
    }
  }
  std::filesystem::create_directories(opts.out_dir);
  const json results = tc::rmae_result_to_json(combined);
  tc::write_json_file(opts.out_dir + "/results.json", results);
  tc::write_rmae_csv(opts.out_dir + "/rmae.csv", results);
  tc::write_run_manifest(opts.out_dir + "/manifest.json", cfg, seed, "rmae");
  std::cout << "rmae: " << combined.rows.size() << " table rows, "
            << combined.validation_rows.size() << " validation dates\n";
  return 0;
}

int run_report(const CommonOpts& opts, const json& cfg) {
  const auto results = tc::load_json_file(cfg.at("results_json").get<std::string>());
  tc::emit_tables(opts.out_dir, results);
  tc::write_run_manifest(opts.out_dir + "/manifest.json", cfg, opts.seed, "report");
  std::cout << "report: tables written to " << opts.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"termcov: realized covariation estimation for forward-curve panels"};
  app.require_subcommand(1);

  CommonOpts opts;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "JSON configuration file")->required();
    sub->add_option("--out", opts.out_dir, "output directory");
    sub->add_option("--seed", opts.seed, "master seed override")
        ->each([&](const std::string&) { opts.seed_set = true; });
    sub->add_option("--threads", opts.threads, "worker threads (0 = hardware)");
  };

  const std::vector<std::string> names{"simulate", "estimate", "rule", "mc", "empirical", "rmae",
                                       "report"};
  for (const auto& n : names) add_common(app.add_subcommand(n));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const json cfg = tc::load_json_file(opts.config_path);
    for (const auto& n : names) {
      if (!app.got_subcommand(n)) continue;
      const json sec = section(cfg, n);
      if (n == "simulate") return run_simulate(opts, sec);
      if (n == "estimate") return run_estimate(opts, sec);
      if (n == "rule") return run_rule(opts, sec);
      if (n == "mc") return run_mc(opts, sec);
      if (n == "empirical") return run_empirical(opts, sec);
      if (n == "rmae") return run_rmae(opts, sec);
      if (n == "report") return run_report(opts, sec);
    }
    return 2;
  } catch (const tc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const tc::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const tc::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
