#include "nsdfm/pipeline.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace nsdfm {

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::ok: return "ok";
    case Stage::usage: return "usage";
    case Stage::io: return "io";
    case Stage::preprocess: return "preprocess";
    case Stage::select: return "select";
    case Stage::fit: return "fit";
    case Stage::decompose: return "decompose";
    case Stage::output: return "output";
  }
  return "unknown";
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == ';' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw StageError(Stage::io, "config: '" + key + "' expects a boolean, got '" + v + "'");
}

template <class T>
T parse_value(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw StageError(Stage::io, "config: bad value '" + v + "' for '" + key + "'");
  return out;
}

Exec exec_of(const RunConfig& cfg) { return cfg.parallel ? Exec::parallel : Exec::serial; }

std::vector<std::string> numbered(const std::string& prefix, Eigen::Index k) {
  std::vector<std::string> out;
  for (Eigen::Index j = 1; j <= k; ++j) out.push_back(prefix + std::to_string(j));
  return out;
}

// Writes a k x T block with a leading date column.
void write_series(const std::string& path, const std::vector<std::string>& dates, const Matrix& rows,
                  const std::vector<std::string>& names) {
  write_matrix_csv(path, rows.transpose(), names, dates, "date");
}

Matrix read_square(const std::string& path) { return read_table_csv(path, true).values; }

}  // namespace

RunConfig load_config(const std::string& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw StageError(Stage::io, std::string("config: ") + e.what());
  }
  RunConfig cfg;
  static const std::map<std::string, std::set<std::string>> allowed = {
      {"input", {"data", "metadata", "frequency"}},
      {"model", {"q", "r", "d", "q_max", "r_max", "tol_share"}},
      {"em", {"diffuse_scale", "tol", "max_iter", "min_iter", "loglik_slack", "i1_floor_frac"}},
      {"preprocess", {"detrend_max_lag", "demean_residual", "threshold"}},
      {"ties", {}},
      {"output", {"dir", "factors", "trends", "cycles", "per_variable", "mse_trace", "spectra", "selection_report"}},
      {"run", {"parallel"}},
      {"simulate",
       {"n", "T", "r", "q", "d", "seed", "loading_scale", "lag_loading_scale", "cycle_radius", "idio_ar", "i1_share",
        "snr", "random_k", "burn"}},
  };
  for (const auto& [section, body] : tree) {
    const auto it = allowed.find(section);
    if (it == allowed.end()) throw StageError(Stage::io, "config: unknown section [" + section + "]");
    for (const auto& [key, node] : body) {
      const std::string v = node.get_value<std::string>();
      const std::string full = section + "." + key;
      if (section == "ties") {
        cfg.ties[key] = split_list(v);
        continue;
      }
      if (!it->second.count(key)) throw StageError(Stage::io, "config: unknown key '" + full + "'");
      if (full == "input.data") cfg.input = v;
      else if (full == "input.metadata") cfg.metadata = v;
      else if (full == "input.frequency") cfg.frequency = parse_frequency(v);
      else if (full == "model.q") cfg.q = parse_value<int>(full, v);
      else if (full == "model.r") cfg.r = parse_value<int>(full, v);
      else if (full == "model.d") cfg.d = parse_value<int>(full, v);
      else if (full == "model.q_max") cfg.q_max = parse_value<int>(full, v);
      else if (full == "model.r_max") cfg.r_max = parse_value<int>(full, v);
      else if (full == "model.tol_share") cfg.tol_share = parse_value<double>(full, v);
      else if (full == "em.diffuse_scale") cfg.settings.diffuse_scale = parse_value<double>(full, v);
      else if (full == "em.tol") cfg.settings.em_tol = parse_value<double>(full, v);
      else if (full == "em.max_iter") cfg.settings.em_max_iter = parse_value<int>(full, v);
      else if (full == "em.min_iter") cfg.settings.em_min_iter = parse_value<int>(full, v);
      else if (full == "em.loglik_slack") cfg.settings.loglik_slack = parse_value<double>(full, v);
      else if (full == "em.i1_floor_frac") cfg.settings.i1_floor_frac = parse_value<double>(full, v);
      else if (full == "preprocess.detrend_max_lag") cfg.detrend.max_lag = parse_value<int>(full, v);
      else if (full == "preprocess.demean_residual") cfg.detrend.demean_residual = parse_bool(full, v);
      else if (full == "preprocess.threshold") cfg.detrend.threshold = parse_value<double>(full, v);
      else if (full == "output.dir") cfg.output_dir = v;
      else if (full == "output.factors") cfg.emit.factors = parse_bool(full, v);
      else if (full == "output.trends") cfg.emit.trends = parse_bool(full, v);
      else if (full == "output.cycles") cfg.emit.cycles = parse_bool(full, v);
      else if (full == "output.per_variable") cfg.emit.per_variable = parse_bool(full, v);
      else if (full == "output.mse_trace") cfg.emit.mse_trace = parse_bool(full, v);
      else if (full == "output.spectra") cfg.emit.spectra = parse_bool(full, v);
      else if (full == "output.selection_report") cfg.emit.selection_report = parse_bool(full, v);
      else if (full == "run.parallel") cfg.parallel = parse_bool(full, v);
      else if (full == "simulate.n") cfg.dgp.n = parse_value<int>(full, v);
      else if (full == "simulate.T") cfg.dgp.T = parse_value<int>(full, v);
      else if (full == "simulate.r") cfg.dgp.r = parse_value<int>(full, v);
      else if (full == "simulate.q") cfg.dgp.q = parse_value<int>(full, v);
      else if (full == "simulate.d") cfg.dgp.d = parse_value<int>(full, v);
      else if (full == "simulate.seed") cfg.dgp.seed = parse_value<std::uint64_t>(full, v);
      else if (full == "simulate.loading_scale") cfg.dgp.loading_scale = parse_value<double>(full, v);
      else if (full == "simulate.lag_loading_scale") cfg.dgp.lag_loading_scale = parse_value<double>(full, v);
      else if (full == "simulate.cycle_radius") cfg.dgp.cycle_radius = parse_value<double>(full, v);
      else if (full == "simulate.idio_ar") cfg.dgp.idio_ar = parse_value<double>(full, v);
      else if (full == "simulate.i1_share") cfg.dgp.i1_share = parse_value<double>(full, v);
      else if (full == "simulate.snr") cfg.dgp.snr = parse_value<double>(full, v);
      else if (full == "simulate.random_k") cfg.dgp.random_k = parse_bool(full, v);
      else if (full == "simulate.burn") cfg.dgp.burn = parse_value<int>(full, v);
    }
  }
  return cfg;
}

void apply_environment(RunConfig& cfg) {
  if (const char* dir = std::getenv("NSDFM_OUTPUT_DIR"); dir != nullptr && *dir != '\0') cfg.output_dir = dir;
}

Preprocessed preprocess_panel(const PanelData& input, std::vector<SeriesMeta> meta, const RunConfig& cfg) {
  const Eigen::Index n = input.n();
  // Metadata in panel order.
  if (meta.empty()) {
    for (const auto& id : input.ids) { SeriesMeta m; m.id = id; meta.push_back(m); }
  }
  std::map<std::string, SeriesMeta> by_id;
  for (auto& m : meta) {
    if (!by_id.emplace(m.id, m).second) throw StageError(Stage::io, "metadata lists '" + m.id + "' twice");
  }
  std::vector<SeriesMeta> ordered;
  for (const auto& id : input.ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw StageError(Stage::io, "no metadata for series '" + id + "'");
    ordered.push_back(it->second);
    by_id.erase(it);
  }
  if (!by_id.empty()) throw StageError(Stage::io, "metadata for unknown series '" + by_id.begin()->first + "'");

  Preprocessed out;
  out.meta = ordered;
  try {
    // Quarterly aggregation by calendar quarter.
    Matrix level = input.x;
    std::vector<std::string> dates = input.dates;
    if (cfg.frequency != Frequency::quarterly) {
      std::vector<int> keys;
      for (const auto& d : input.dates) keys.push_back(parse_date(d).quarter_index());
      std::map<int, int> counts;
      for (int k : keys) ++counts[k];
      std::vector<Eigen::Index> keep;
      for (std::size_t t = 0; t < keys.size(); ++t) {
        const bool partial = cfg.frequency == Frequency::monthly && counts[keys[t]] < 3;
        if (!partial) keep.push_back(static_cast<Eigen::Index>(t));
      }
      std::vector<int> kept_keys;
      Matrix kept(n, static_cast<Eigen::Index>(keep.size()));
      for (std::size_t j = 0; j < keep.size(); ++j) {
        kept.col(static_cast<Eigen::Index>(j)) = level.col(keep[j]);
        kept_keys.push_back(keys[static_cast<std::size_t>(keep[j])]);
      }
      Matrix agg;
      for (Eigen::Index i = 0; i < n; ++i) {
        const Vector q = aggregate_to_quarterly(kept.row(i).transpose(), Frequency::daily, kept_keys);
        if (agg.size() == 0) agg.resize(n, q.size());
        agg.row(i) = q.transpose();
      }
      level = agg;
      dates.clear();
      for (int k = kept_keys.front(); k <= kept_keys.back(); ++k) dates.push_back(quarter_label(k));
    } else {
      check_gapless_quarters(dates);
    }

    // Transforms; dlog shortens every series by one period.
    bool any_dlog = false;
    for (const auto& m : ordered) any_dlog = any_dlog || m.transform == Transform::dlog;
    const Eigen::Index T = level.cols() - (any_dlog ? 1 : 0);
    out.raw.ids = input.ids;
    out.raw.dates.assign(dates.begin() + (any_dlog ? 1 : 0), dates.end());
    out.raw.x.resize(n, T);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& m = ordered[static_cast<std::size_t>(i)];
      Vector y;
      try {
        y = apply_transform(level.row(i).transpose(), m.transform);
      } catch (const PreprocessError& e) {
        throw PreprocessError("series '" + m.id + "': " + e.what());
      }
      y = y.tail(T).eval();
      if (m.winsorize_mad > 0.0) y = winsorize(y, m.winsorize_mad);
      out.raw.x.row(i) = y.transpose();
    }

    out.x.ids = input.ids;
    out.x.dates = out.raw.dates;
    out.x.x.resize(n, T);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& m = ordered[static_cast<std::size_t>(i)];
      Detrended dt = detrend(out.raw.x.row(i).transpose(), m.detrend_mode, cfg.detrend);
      out.det.push_back(dt.result);
      out.x.x.row(i) = dt.residual.transpose();
    }
  } catch (const PreprocessError& e) {
    throw StageError(Stage::preprocess, e.what());
  } catch (const IoError& e) {
    throw StageError(Stage::io, e.what());
  }
  return out;
}

Preprocessed load_and_preprocess(const RunConfig& cfg) {
  if (cfg.input.empty()) throw StageError(Stage::usage, "no input panel given");
  PanelData panel;
  std::vector<SeriesMeta> meta;
  try {
    panel = read_panel_csv(cfg.input);
    if (!cfg.metadata.empty()) meta = read_metadata_csv(cfg.metadata);
  } catch (const IoError& e) {
    throw StageError(Stage::io, e.what());
  }
  return preprocess_panel(panel, std::move(meta), cfg);
}

SelectionReport run_selection(const Preprocessed& data, const RunConfig& cfg) {
  const Matrix& x = data.x.x;
  const Eigen::Index n = x.rows();
  const Matrix dx = diff_cols(x);
  const Exec exec = exec_of(cfg);
  SelectionReport rep;
  try {
    const int q_max = std::min<int>(cfg.q_max, static_cast<int>(n) - 1);
    if (cfg.q > 0) {
      rep.q_hat = cfg.q;
    } else {
      const QSelection qs = select_q(dx, q_max, {}, exec);
      rep.q_hat = qs.q_hat;
      rep.q_criterion = qs.criterion;
      rep.warnings.insert(rep.warnings.end(), qs.scan.warnings.begin(), qs.scan.warnings.end());
    }
    if (rep.q_hat < 2) {
      throw StageError(Stage::select, "q = " + std::to_string(rep.q_hat) +
                                          " leaves no room for 0 < d < q; set model.q and model.d explicitly");
    }

    const TrendSelection ts = select_trend_count(x, std::min<int>(q_max, static_cast<int>(n) - 1));
    rep.trend_eigenvalues = ts.eigenvalues;
    if (cfg.d > 0) {
      rep.trend_count_hat = rep.q_hat - cfg.d;
    } else {
      rep.trend_count_hat = ts.trend_count;
      rep.warnings.insert(rep.warnings.end(), ts.warnings.begin(), ts.warnings.end());
    }
    const int clamped = std::clamp(rep.trend_count_hat, 1, rep.q_hat - 1);
    if (clamped != rep.trend_count_hat) {
      rep.warnings.push_back("trend count " + std::to_string(rep.trend_count_hat) + " clamped to " +
                             std::to_string(clamped) + " so that 0 < d < q");
      rep.trend_count_hat = clamped;
    }
    rep.d_hat = rep.q_hat - rep.trend_count_hat;

    const int r_max = std::min<int>(cfg.r_max, static_cast<int>(n));
    const RSelection rs = select_r(dx, rep.q_hat, std::max(r_max, rep.q_hat), cfg.tol_share, exec);
    rep.table = rs.table;
    rep.r_hat = cfg.r > 0 ? cfg.r : rs.r_hat;
    if (cfg.r <= 0) rep.warnings.insert(rep.warnings.end(), rs.warnings.begin(), rs.warnings.end());
    if (rep.r_hat < rep.q_hat) throw StageError(Stage::select, "r must be at least q");

    // Principal-components common component from the differenced panel.
    const SortedEigen e = sorted_eigen(row_covariance(dx));
    const Matrix v = e.vectors.leftCols(rep.r_hat);
    const Matrix chi = v * (v.transpose() * x);
    std::vector<RhoMode> modes;
    for (const auto& m : data.meta) modes.push_back(m.rho_mode);
    const RhoClassification rc = classify_idiosyncratic(x, chi, modes, exec);
    rep.rho = rc.rho;
    rep.adf = rc.tests;
  } catch (const SelectionError& e) {
    throw StageError(Stage::select, e.what());
  }
  return rep;
}

TieGroups resolve_ties(const Preprocessed& data, const RunConfig& cfg) {
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < data.x.ids.size(); ++i) index[data.x.ids[i]] = static_cast<int>(i);
  std::map<std::string, std::set<int>> groups;
  for (const auto& [name, ids] : cfg.ties) {
    for (const auto& id : ids) {
      const auto it = index.find(id);
      if (it == index.end()) throw StageError(Stage::io, "tie group '" + name + "' names unknown series '" + id + "'");
      groups[name].insert(it->second);
    }
  }
  for (std::size_t i = 0; i < data.meta.size(); ++i) {
    if (data.meta[i].tie_group) groups[*data.meta[i].tie_group].insert(static_cast<int>(i));
  }
  std::vector<int> owner(data.meta.size(), -1);
  TieGroups out;
  for (const auto& [name, members] : groups) {
    for (int i : members) {
      if (owner[static_cast<std::size_t>(i)] >= 0) {
        throw StageError(Stage::io, "series '" + data.x.ids[static_cast<std::size_t>(i)] + "' is in two tie groups");
      }
      owner[static_cast<std::size_t>(i)] = static_cast<int>(out.groups.size());
    }
    out.groups.emplace_back(members.begin(), members.end());
  }
  return out;
}

namespace {

void finish_fit(FitResult& fit) {
  const StateSpace& ss = fit.em.state_space;
  fit.mse = mse_traces(fit.em.filter, fit.em.smoother, fit.spec.r);
  try {
    const RiccatiResult ric = riccati_steady_state(ss, 1e-12, 20000);
    fit.burn_in = burn_in_index(fit.em.filter, ric.pred_cov);
  } catch (const RiccatiError& e) {
    fit.burn_in = fit.spec.T;
    fit.warnings.push_back(std::string("steady state not reached: ") + e.what());
  }
}

}  // namespace

void decompose_fit(FitResult& fit, int trend_count, int d) {
  try {
    fit.tc = decompose_factors(fit.em.estimates.factors, trend_count, d);
  } catch (const std::exception& e) {
    throw StageError(Stage::decompose, e.what());
  }
  fit.spec.d = fit.spec.q - trend_count;
  fit.components.clear();
  const Matrix& lambda = fit.em.state.params.lambda;
  for (Eigen::Index i = 0; i < lambda.rows(); ++i) {
    fit.components.push_back(decompose_variable(lambda.row(i), fit.tc, fit.em.estimates.xi.row(i),
                                                fit.data.det[static_cast<std::size_t>(i)]));
  }
}

FitResult run_fit(const RunConfig& cfg) {
  FitResult fit;
  fit.data = load_and_preprocess(cfg);
  fit.selection = run_selection(fit.data, cfg);
  const SelectionReport& sel = fit.selection;

  ModelSpec spec = cfg.settings;
  spec.n = static_cast<int>(fit.data.x.n());
  spec.T = static_cast<int>(fit.data.x.T());
  spec.q = sel.q_hat;
  spec.r = sel.r_hat;
  spec.d = sel.d_hat;
  const auto bad = spec.violations();
  if (!bad.empty()) throw StageError(Stage::select, "resolved model is invalid: " + bad.front());
  for (const auto& w : spec.warnings()) fit.warnings.push_back(w);
  fit.spec = spec;

  EMOptions opt;
  opt.ties = resolve_ties(fit.data, cfg);
  opt.exec = exec_of(cfg);
  try {
    fit.em = run_em(fit.data.x.x, spec, sel.rho, opt);
  } catch (const std::exception& e) {
    throw StageError(Stage::fit, e.what());
  }
  fit.warnings.insert(fit.warnings.end(), fit.em.state.warnings.begin(), fit.em.state.warnings.end());
  finish_fit(fit);
  decompose_fit(fit, spec.q - spec.d, spec.d);

  fit.settings = {
      {"input", cfg.input},
      {"metadata", cfg.metadata},
      {"q_override", std::to_string(cfg.q)},
      {"r_override", std::to_string(cfg.r)},
      {"d_override", std::to_string(cfg.d)},
      {"q_max", std::to_string(cfg.q_max)},
      {"r_max", std::to_string(cfg.r_max)},
      {"tol_share", format_number(cfg.tol_share)},
      {"detrend_max_lag", std::to_string(cfg.detrend.max_lag)},
      {"demean_residual", cfg.detrend.demean_residual ? "true" : "false"},
      {"detrend_threshold", format_number(cfg.detrend.threshold)},
      {"parallel", cfg.parallel ? "true" : "false"},
  };
  return fit;
}

namespace {

json manifest_json(const FitResult& fit) {
  const ModelSpec& s = fit.spec;
  json j;
  j["tool"] = "nsdfm";
  j["format_version"] = 1;
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  j["created"] = stamp;
  j["dimensions"] = {{"n", s.n}, {"T", s.T}, {"r", s.r}, {"q", s.q}, {"d", s.d}, {"trend_count", s.q - s.d},
                     {"state_dim", fit.em.state_space.dim()}};
  j["em"] = {{"diffuse_scale", s.diffuse_scale}, {"tol", s.em_tol},       {"max_iter", s.em_max_iter},
             {"min_iter", s.em_min_iter},        {"loglik_slack", s.loglik_slack}, {"i1_floor_frac", s.i1_floor_frac},
             {"iterations", fit.em.state.k},     {"converged", fit.em.state.converged},
             {"delta_l", fit.em.state.delta_l},  {"loglik", fit.em.estimates.loglik},
             {"loglik_path", fit.em.state.loglik_path}, {"ridge_max", fit.em.state.ridge_max}};
  j["selection"] = {{"q_hat", fit.selection.q_hat}, {"trend_count_hat", fit.selection.trend_count_hat},
                    {"r_hat", fit.selection.r_hat}, {"d_hat", fit.selection.d_hat}};
  j["burn_in"] = fit.burn_in;
  j["settings"] = fit.settings;
  j["warnings"] = fit.warnings;
  json ties = json::array();
  for (const auto& m : fit.data.meta) {
    if (m.tie_group) ties.push_back({{"id", m.id}, {"group", *m.tie_group}});
  }
  j["tied_series_from_metadata"] = ties;
  return j;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw StageError(Stage::output, "cannot create '" + dir + "': " + ec.message());
}

}  // namespace

void write_selection(const std::vector<std::string>& ids, const SelectionReport& s, const std::string& dir) {
  try {
    ensure_dir(dir);
    const Eigen::Index K = s.table.q_row.size();
    Matrix table(K, 3);
    for (Eigen::Index k = 0; k < K; ++k) table(k, 0) = static_cast<double>(k + 1);
    table.col(1) = s.table.q_row;
    table.col(2) = s.table.r_row;
    write_matrix_csv(dir + "/variance_shares.csv", table, {"k", "spectral_share_pct", "covariance_share_pct"});
    Matrix tests(static_cast<Eigen::Index>(ids.size()), 4);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const AdfResult a = i < s.adf.size() ? s.adf[i] : AdfResult{};
      tests(row, 0) = a.statistic;
      tests(row, 1) = a.critical_value;
      tests(row, 2) = a.lags;
      tests(row, 3) = i < s.rho.size() ? s.rho[i] : 0;
    }
    write_matrix_csv(dir + "/rho_tests.csv", tests, {"adf_stat", "critical_5pct", "lags", "rho"}, ids, "id");
    json j = {{"q_hat", s.q_hat},
              {"trend_count_hat", s.trend_count_hat},
              {"r_hat", s.r_hat},
              {"d_hat", s.d_hat},
              {"q_criterion", s.q_criterion},
              {"warnings", s.warnings}};
    std::vector<double> ev(s.trend_eigenvalues.data(),
                           s.trend_eigenvalues.data() + std::min<Eigen::Index>(s.trend_eigenvalues.size(), 20));
    j["levels_eigenvalues"] = ev;
    std::ofstream(dir + "/selection.json") << j.dump(2) << '\n';
  } catch (const IoError& e) {
    throw StageError(Stage::output, e.what());
  }
}

void write_artifacts(const FitResult& fit, const std::string& dir, const EmitFlags& emit) {
  try {
    ensure_dir(dir);
    const auto& dates = fit.data.x.dates;
    const auto& ids = fit.data.x.ids;
    const Eigen::Index r = fit.spec.r;
    const FactorEstimates& est = fit.em.estimates;
    if (emit.factors) {
      write_series(dir + "/factors.csv", dates, est.factors, numbered("F", r));
      write_series(dir + "/chi.csv", dates, est.chi, ids);
      write_series(dir + "/xi.csv", dates, est.xi, ids);
    }
    if (emit.trends) {
      write_series(dir + "/trends.csv", dates, fit.tc.trends, numbered("T", fit.tc.trends.rows()));
      write_matrix_csv(dir + "/phi1.csv", fit.tc.phi1, numbered("T", fit.tc.phi1.cols()), numbered("F", r), "factor");
    }
    if (emit.cycles) {
      write_series(dir + "/cycles.csv", dates, fit.tc.cycles, numbered("C", fit.tc.cycles.rows()));
      write_series(dir + "/residual_cycles.csv", dates, fit.tc.residual_cycles,
                   numbered("E", fit.tc.residual_cycles.rows()));
      write_matrix_csv(dir + "/phi0.csv", fit.tc.phi0, numbered("G", fit.tc.phi0.cols()), numbered("F", r), "factor");
      write_matrix_csv(dir + "/hmat.csv", fit.tc.hmat, numbered("C", fit.tc.hmat.cols()),
                       numbered("G", fit.tc.hmat.rows()), "component");
    }
    if (emit.per_variable) {
      ensure_dir(dir + "/per_variable");
      ensure_dir(dir + "/common");
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const VariableComponents& c = fit.components[i];
        Matrix block(c.trend.size(), 7);
        block << fit.data.raw.x.row(static_cast<Eigen::Index>(i)).transpose(), c.deterministic, c.trend, c.cycle,
            c.residual_cycle, c.idiosyncratic, c.trend + c.cycle + c.residual_cycle;
        write_matrix_csv(dir + "/per_variable/" + ids[i] + ".csv", block,
                         {"y", "deterministic", "trend", "cycle", "residual_cycle", "idiosyncratic", "common"}, dates,
                         "date");
        write_matrix_csv(dir + "/common/" + ids[i] + ".csv", est.chi.row(static_cast<Eigen::Index>(i)).transpose(),
                         {"chi"}, dates, "date");
      }
    }
    if (emit.mse_trace) {
      Matrix block(fit.mse.predicted.size(), 4);
      for (Eigen::Index t = 0; t < block.rows(); ++t) block(t, 0) = static_cast<double>(t + 1);
      block.col(1) = fit.mse.predicted;
      block.col(2) = fit.mse.filtered;
      block.col(3) = fit.mse.smoothed;
      write_matrix_csv(dir + "/mse_trace.csv", block, {"t", "predicted", "filtered", "smoothed"}, dates, "date");
    }
    if (emit.spectra) {
      const Eigen::Index T = fit.tc.trends.cols();
      const Eigen::Index H = T / 2;
      Vector freqs(H + 1);
      for (Eigen::Index h = 0; h <= H; ++h) freqs(h) = 2.0 * std::numbers::pi * static_cast<double>(h) / T;
      const Matrix dt = diff_cols(fit.tc.trends), dc = diff_cols(fit.tc.cycles), de = diff_cols(fit.tc.residual_cycles);
      Matrix block(H + 1, 1 + dt.rows() + dc.rows() + de.rows());
      block.col(0) = freqs;
      std::vector<std::string> names{"omega"};
      Eigen::Index col = 1;
      auto add = [&](const Matrix& rows, const std::string& prefix) {
        for (Eigen::Index k = 0; k < rows.rows(); ++k) {
          block.col(col++) = smoothed_spectrum(rows.row(k), freqs);
          names.push_back(prefix + std::to_string(k + 1));
        }
      };
      add(dt, "dT");
      add(dc, "dC");
      add(de, "dE");
      write_matrix_csv(dir + "/spectra.csv", block, names);
    }
    if (emit.selection_report) write_selection(ids, fit.selection, dir);
  } catch (const IoError& e) {
    throw StageError(Stage::output, e.what());
  }
}

void write_fit(const FitResult& fit, const std::string& dir, const EmitFlags& emit) {
  try {
    ensure_dir(dir);
    const auto& ids = fit.data.x.ids;
    const Params& p = fit.em.state.params;
    const Eigen::Index r = fit.spec.r;
    write_matrix_csv(dir + "/lambda.csv", p.lambda, numbered("F", r), ids);
    write_matrix_csv(dir + "/A1.csv", p.a1, numbered("F", r), numbered("F", r), "factor");
    write_matrix_csv(dir + "/A2.csv", p.a2, numbered("F", r), numbered("F", r), "factor");
    write_matrix_csv(dir + "/H.csv", p.h, numbered("u", p.h.cols()), numbered("F", r), "factor");
    Matrix rv(p.r_diag.size(), 2);
    rv.col(0) = p.r_diag;
    rv.col(1) = p.i1_noise;
    write_matrix_csv(dir + "/R.csv", rv, {"R", "i1_noise"}, ids);
    Matrix rho(p.r_diag.size(), 1);
    for (Eigen::Index i = 0; i < rho.rows(); ++i) rho(i, 0) = p.rho[static_cast<std::size_t>(i)];
    write_matrix_csv(dir + "/rho.csv", rho, {"rho"}, ids);
    write_panel_csv(dir + "/x.csv", fit.data.x);
    write_panel_csv(dir + "/y.csv", fit.data.raw);
    Matrix det(static_cast<Eigen::Index>(fit.data.det.size()), 6);
    for (std::size_t i = 0; i < fit.data.det.size(); ++i) {
      const DetrendResult& d = fit.data.det[i];
      det.row(static_cast<Eigen::Index>(i)) << d.a_hat, d.b_hat, d.level, d.mode_used == TrendKind::trend ? 1.0 : 0.0,
          d.statistic, d.fallback ? 1.0 : 0.0;
    }
    write_matrix_csv(dir + "/deterministic.csv", det, {"a_hat", "b_hat", "level", "trend_mode", "statistic", "fallback"},
                     ids);
    write_metadata_csv(dir + "/metadata.csv", fit.data.meta);
    std::ofstream(dir + "/manifest.json") << manifest_json(fit).dump(2) << '\n';
  } catch (const IoError& e) {
    throw StageError(Stage::output, e.what());
  }
  write_artifacts(fit, dir, emit);
}

FitResult load_fit(const std::string& dir) {
  FitResult fit;
  json manifest;
  try {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw IoError("cannot open '" + dir + "/manifest.json'");
    manifest = json::parse(in);
    const auto& dims = manifest.at("dimensions");
    const auto& em = manifest.at("em");
    ModelSpec& s = fit.spec;
    s.n = dims.at("n");
    s.T = dims.at("T");
    s.r = dims.at("r");
    s.q = dims.at("q");
    s.d = dims.at("d");
    s.diffuse_scale = em.at("diffuse_scale");
    s.em_tol = em.at("tol");
    s.em_max_iter = em.at("max_iter");
    s.em_min_iter = em.at("min_iter");
    s.loglik_slack = em.at("loglik_slack");
    s.i1_floor_frac = em.at("i1_floor_frac");
    fit.settings = manifest.at("settings").get<std::map<std::string, std::string>>();
    fit.burn_in = manifest.at("burn_in");

    fit.data.x = read_panel_csv(dir + "/x.csv");
    fit.data.raw = read_panel_csv(dir + "/y.csv");
    fit.data.meta = read_metadata_csv(dir + "/metadata.csv");
    const Table det = read_table_csv(dir + "/deterministic.csv", true);
    for (Eigen::Index i = 0; i < det.values.rows(); ++i) {
      DetrendResult d;
      d.a_hat = det.values(i, 0);
      d.b_hat = det.values(i, 1);
      d.level = det.values(i, 2);
      d.mode_used = det.values(i, 3) != 0.0 ? TrendKind::trend : TrendKind::mean;
      d.statistic = det.values(i, 4);
      d.fallback = det.values(i, 5) != 0.0;
      fit.data.det.push_back(d);
    }

    Params& p = fit.em.state.params;
    p.lambda = read_table_csv(dir + "/lambda.csv", true).values;
    p.a1 = read_square(dir + "/A1.csv");
    p.a2 = read_square(dir + "/A2.csv");
    p.h = read_square(dir + "/H.csv");
    const Table rv = read_table_csv(dir + "/R.csv", true);
    p.r_diag = rv.values.col(0);
    p.i1_noise = rv.values.col(1);
    const Table rho = read_table_csv(dir + "/rho.csv", true);
    for (Eigen::Index i = 0; i < rho.values.rows(); ++i) p.rho.push_back(static_cast<int>(rho.values(i, 0)));
    fit.em.state.k = em.at("iterations");
    fit.em.state.converged = em.at("converged");
    fit.em.state.delta_l = em.at("delta_l");
    fit.em.state.loglik_path = em.at("loglik_path").get<std::vector<double>>();
  } catch (const IoError& e) {
    throw StageError(Stage::io, e.what());
  } catch (const json::exception& e) {
    throw StageError(Stage::io, std::string("manifest: ") + e.what());
  }

  try {
    const Params& p = fit.em.state.params;
    fit.em.state_space = build_state_space(p, fit.spec);
    fit.em.filter = kf_forward(fit.em.state_space, fit.data.x.x, em_initial_state(fit.em.state_space, fit.spec.diffuse_scale));
    fit.em.smoother = ks_backward(fit.em.filter, fit.em.state_space);
    fit.em.estimates = make_estimates(p, fit.em.state_space, fit.data.x.x, fit.em.filter, fit.em.smoother);
  } catch (const std::exception& e) {
    throw StageError(Stage::fit, e.what());
  }
  finish_fit(fit);

  // Selection diagnostics are recomputed with the stored dimensions.
  RunConfig cfg;
  cfg.q = fit.spec.q;
  cfg.r = fit.spec.r;
  cfg.d = fit.spec.d;
  fit.selection = run_selection(fit.data, cfg);
  fit.selection.rho = fit.em.state.params.rho;
  decompose_fit(fit, fit.spec.q - fit.spec.d, fit.spec.d);
  return fit;
}

void run_simulate(const RunConfig& cfg) {
  SimulatedPanel sim;
  try {
    sim = gen_dfm(cfg.dgp);
  } catch (const std::invalid_argument& e) {
    throw StageError(Stage::usage, e.what());
  }
  const std::string& dir = cfg.output_dir;
  try {
    ensure_dir(dir);
    ensure_dir(dir + "/truth");
    PanelData panel;
    panel.x = sim.x;
    char buf[16];
    for (int i = 0; i < cfg.dgp.n; ++i) {
      std::snprintf(buf, sizeof buf, "s%03d", i + 1);
      panel.ids.emplace_back(buf);
    }
    for (int t = 0; t < cfg.dgp.T; ++t) panel.dates.push_back(quarter_label(4 * 1960 + t));
    write_panel_csv(dir + "/panel.csv", panel);
    std::vector<SeriesMeta> meta;
    for (const auto& id : panel.ids) { SeriesMeta m; m.id = id; meta.push_back(m); }
    write_metadata_csv(dir + "/metadata.csv", meta);

    const GroundTruth& g = sim.truth;
    write_series(dir + "/truth/factors.csv", panel.dates, g.factors, numbered("F", g.factors.rows()));
    write_series(dir + "/truth/trends.csv", panel.dates, g.trends, numbered("tau", g.trends.rows()));
    write_series(dir + "/truth/chi.csv", panel.dates, g.chi, panel.ids);
    write_series(dir + "/truth/xi.csv", panel.dates, g.xi, panel.ids);
    write_series(dir + "/truth/cycles.csv", panel.dates, g.cycles, panel.ids);
    write_matrix_csv(dir + "/truth/lambda.csv", g.lambda, numbered("F", g.lambda.cols()), panel.ids);
    Matrix rho(cfg.dgp.n, 1);
    for (int i = 0; i < cfg.dgp.n; ++i) rho(i, 0) = g.rho[static_cast<std::size_t>(i)];
    write_matrix_csv(dir + "/truth/rho.csv", rho, {"rho"}, panel.ids);

    const DGPConfig& c = cfg.dgp;
    json j = {{"tool", "nsdfm"},
              {"command", "simulate"},
              {"seed", c.seed},
              {"dgp",
               {{"n", c.n}, {"T", c.T}, {"r", c.r}, {"q", c.q}, {"d", c.d}, {"loading_scale", c.loading_scale},
                {"lag_loading_scale", c.lag_loading_scale}, {"cycle_radius", c.cycle_radius}, {"idio_ar", c.idio_ar},
                {"i1_share", c.i1_share}, {"snr", c.snr}, {"random_k", c.random_k}, {"burn", c.burn}}}};
    std::ofstream(dir + "/manifest.json") << j.dump(2) << '\n';
  } catch (const IoError& e) {
    throw StageError(Stage::output, e.what());
  }
}

}  // namespace nsdfm
