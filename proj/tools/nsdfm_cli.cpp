// nsdfm: fit | select | decompose | simulate | report
#include "nsdfm/pipeline.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

using namespace nsdfm;

namespace {

// --config is read before the other flags so that flags override the file.
std::string find_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--config") == 0 && i + 1 < argc) return argv[i + 1];
    if (std::strncmp(argv[i], "--config=", 9) == 0) return argv[i] + 9;
  }
  return {};
}

void add_input(CLI::App* app, RunConfig& cfg) {
  app->add_option("--input", cfg.input, "panel CSV (date column, one column per series)");
  app->add_option("--metadata", cfg.metadata, "per-series metadata CSV");
  app->add_option("--frequency", cfg.frequency, "quarterly | monthly | daily")
      ->transform(CLI::CheckedTransformer(std::map<std::string, Frequency>{{"quarterly", Frequency::quarterly},
                                                                            {"monthly", Frequency::monthly},
                                                                            {"daily", Frequency::daily}}));
  app->add_option("--detrend-max-lag", cfg.detrend.max_lag, "lags in the drift statistic (-1 = n^{1/3})");
  app->add_flag("--demean-residual,!--no-demean-residual", cfg.detrend.demean_residual);
  app->add_option("--detrend-threshold", cfg.detrend.threshold, "drift statistic threshold");
}

void add_model(CLI::App* app, RunConfig& cfg) {
  app->add_option("--q", cfg.q, "dynamic shocks (0 = select)");
  app->add_option("--r", cfg.r, "static factors (0 = select)");
  app->add_option("--d", cfg.d, "cointegration relations (0 = select)");
  app->add_option("--q-max", cfg.q_max);
  app->add_option("--r-max", cfg.r_max);
  app->add_option("--tol-share", cfg.tol_share, "share tolerance in percentage points when matching r");
  app->add_flag("--parallel,!--serial", cfg.parallel, "use the OpenMP kernels");
}

void add_em(CLI::App* app, RunConfig& cfg) {
  ModelSpec& s = cfg.settings;
  app->add_option("--diffuse-scale", s.diffuse_scale);
  app->add_option("--em-tol", s.em_tol);
  app->add_option("--em-max-iter", s.em_max_iter);
  app->add_option("--em-min-iter", s.em_min_iter);
  app->add_option("--loglik-slack", s.loglik_slack);
  app->add_option("--i1-floor-frac", s.i1_floor_frac);
  app->add_option("--tie", "GROUP=ID,ID,... (repeatable)")->each([&cfg](const std::string& v) {
    const auto eq = v.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--tie", "expected GROUP=ID,ID");
    std::vector<std::string> ids;
    std::string cur;
    for (char c : v.substr(eq + 1)) {
      if (c == ',') {
        if (!cur.empty()) ids.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) ids.push_back(cur);
    cfg.ties[v.substr(0, eq)] = ids;
  });
}

void add_emit(CLI::App* app, EmitFlags& e) {
  app->add_flag("--factors,!--no-factors", e.factors);
  app->add_flag("--trends,!--no-trends", e.trends);
  app->add_flag("--cycles,!--no-cycles", e.cycles);
  app->add_flag("--per-variable,!--no-per-variable", e.per_variable);
  app->add_flag("--mse-trace,!--no-mse-trace", e.mse_trace);
  app->add_flag("--spectra,!--no-spectra", e.spectra);
  app->add_flag("--selection-report,!--no-selection-report", e.selection_report);
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

// Best effort: a failure to write the diagnostics must not mask the stage error.
void write_error_report(const std::string& dir, const std::string& command, Stage stage, const std::string& what) {
  try {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json j;
    j["tool"] = "nsdfm";
    j["command"] = command;
    j["stage"] = stage_name(stage);
    j["exit_code"] = static_cast<int>(stage);
    j["message"] = what;
    std::ofstream(std::filesystem::path(dir) / "error.json") << j.dump(2) << '\n';
  } catch (const std::exception&) {
  }
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  std::string config_path;
  try {
    config_path = find_config(argc, argv);
    if (!config_path.empty()) cfg = load_config(config_path);
  } catch (const StageError& e) {
    std::cerr << "nsdfm: " << e.what() << '\n';
    return e.exit_code();
  }

  CLI::App app{"Non-stationary dynamic factor model: EM estimation and trend-cycle decomposition"};
  app.require_subcommand(1);
  app.add_option("--config", config_path, "INI config file; flags override it");

  CLI::App* fit = app.add_subcommand("fit", "preprocess, select, estimate and decompose");
  CLI::App* sel = app.add_subcommand("select", "model selection report only");
  CLI::App* dec = app.add_subcommand("decompose", "trend-cycle step on a fit directory");
  CLI::App* sim = app.add_subcommand("simulate", "write a synthetic panel with ground truth");
  CLI::App* rep = app.add_subcommand("report", "re-emit artifacts of a fit directory");

  for (CLI::App* sub : {fit, sel, dec, sim, rep}) sub->add_option("--config", config_path);
  for (CLI::App* sub : {fit, sel, dec, sim, rep}) sub->add_option("--output-dir", cfg.output_dir);

  add_input(fit, cfg);
  add_model(fit, cfg);
  add_em(fit, cfg);
  add_emit(fit, cfg.emit);

  add_input(sel, cfg);
  add_model(sel, cfg);

  std::string fit_dir;
  int trend_count = 0;
  for (CLI::App* sub : {dec, rep}) sub->add_option("--fit-dir", fit_dir, "directory written by fit")->required();
  dec->add_option("--trend-count", trend_count, "q - d (0 = keep the fitted value)");
  dec->add_option("--d", cfg.d, "cycles (0 = q - trend count)");
  add_emit(dec, cfg.emit);
  add_emit(rep, cfg.emit);

  DGPConfig& g = cfg.dgp;
  sim->add_option("--n", g.n);
  sim->add_option("--T", g.T);
  sim->add_option("--r", g.r);
  sim->add_option("--q", g.q);
  sim->add_option("--d", g.d);
  sim->add_option("--seed", g.seed);
  sim->add_option("--loading-scale", g.loading_scale);
  sim->add_option("--lag-loading-scale", g.lag_loading_scale);
  sim->add_option("--cycle-radius", g.cycle_radius);
  sim->add_option("--idio-ar", g.idio_ar);
  sim->add_option("--i1-share", g.i1_share);
  sim->add_option("--snr", g.snr);
  sim->add_option("--burn", g.burn);
  sim->add_flag("--random-k,!--no-random-k", g.random_k);

  apply_environment(cfg);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(Stage::usage);
  }
  const char* env_dir = std::getenv("NSDFM_OUTPUT_DIR");
  const bool env_set = env_dir != nullptr && *env_dir != '\0';
  for (CLI::App* sub : {dec, rep}) {
    if (*sub && sub->count("--output-dir") == 0 && !env_set) cfg.output_dir = fit_dir;
  }

  try {
    if (*fit) {
      FitResult res = run_fit(cfg);
      print_warnings(res.warnings);
      write_fit(res, cfg.output_dir, cfg.emit);
      std::cout << "q=" << res.spec.q << " r=" << res.spec.r << " d=" << res.spec.d
                << " iterations=" << res.em.state.k << " loglik=" << res.em.estimates.loglik << '\n';
    } else if (*sel) {
      const Preprocessed data = load_and_preprocess(cfg);
      const SelectionReport s = run_selection(data, cfg);
      print_warnings(s.warnings);
      write_selection(data.x.ids, s, cfg.output_dir);
      std::cout << "q_hat=" << s.q_hat << " trend_count_hat=" << s.trend_count_hat << " r_hat=" << s.r_hat
                << " d_hat=" << s.d_hat << '\n';
    } else if (*dec) {
      FitResult res = load_fit(fit_dir);
      const int k = trend_count > 0 ? trend_count : res.spec.q - res.spec.d;
      const int d = cfg.d > 0 ? cfg.d : res.spec.q - k;
      decompose_fit(res, k, d);
      EmitFlags e = cfg.emit;
      e.factors = e.mse_trace = e.selection_report = false;
      write_artifacts(res, cfg.output_dir, e);
      std::cout << "trend_count=" << k << " d=" << d << '\n';
    } else if (*rep) {
      const FitResult res = load_fit(fit_dir);
      write_artifacts(res, cfg.output_dir, cfg.emit);
    } else if (*sim) {
      run_simulate(cfg);
    }
  } catch (const StageError& e) {
    std::cerr << "nsdfm: " << e.what() << '\n';
    write_error_report(cfg.output_dir, app.get_subcommands().front()->get_name(), e.stage(), e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "nsdfm: " << e.what() << '\n';
    write_error_report(cfg.output_dir, app.get_subcommands().front()->get_name(), Stage::fit, e.what());
    return static_cast<int>(Stage::fit);
  }
  return 0;
}
