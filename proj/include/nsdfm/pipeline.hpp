#pragma once

#include "nsdfm/em.hpp"
#include "nsdfm/modelselect.hpp"
#include "nsdfm/panel_io.hpp"
#include "nsdfm/simulate.hpp"
#include "nsdfm/trendcycle.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nsdfm {

/// Exit code of each failing stage.
enum class Stage { ok = 0, usage = 2, io = 3, preprocess = 4, select = 5, fit = 6, decompose = 7, output = 8 };

std::string stage_name(Stage s);

class StageError : public std::runtime_error {
 public:
  StageError(Stage stage, const std::string& what)
      : std::runtime_error(stage_name(stage) + ": " + what), stage_(stage) {}
  Stage stage() const noexcept { return stage_; }
  int exit_code() const noexcept { return static_cast<int>(stage_); }

 private:
  Stage stage_;
};

struct EmitFlags {
  bool factors = true;
  bool trends = true;
  bool cycles = true;
  bool per_variable = true;
  bool mse_trace = true;
  bool spectra = true;
  bool selection_report = true;
};

struct RunConfig {
  std::string input;
  std::string metadata;
  std::string output_dir = "nsdfm_out";
  Frequency frequency = Frequency::quarterly;

  int q = 0;  // 0 selects from the data
  int r = 0;
  int d = 0;
  int q_max = 8;
  int r_max = 12;
  double tol_share = 1.0;

  ModelSpec settings;  // algorithm settings; dimensions are filled in by the pipeline
  DetrendOptions detrend;
  std::map<std::string, std::vector<std::string>> ties;  // group -> series ids
  EmitFlags emit;
  bool parallel = true;

  DGPConfig dgp;  // simulate subcommand
};

/// Flat INI with sections [input], [model], [em], [preprocess], [ties],
/// [output], [simulate]. NSDFM_OUTPUT_DIR overrides output.dir.
RunConfig load_config(const std::string& path);
void apply_environment(RunConfig& cfg);

struct Preprocessed {
  PanelData raw;                    // transformed, aligned quarterly series y
  PanelData x;                      // detrended panel
  std::vector<DetrendResult> det;
  std::vector<SeriesMeta> meta;
};

Preprocessed preprocess_panel(const PanelData& input, std::vector<SeriesMeta> meta, const RunConfig& cfg);
Preprocessed load_and_preprocess(const RunConfig& cfg);

/// Resolves q, q-d, r, d and rho, honoring overrides in cfg.
SelectionReport run_selection(const Preprocessed& data, const RunConfig& cfg);

TieGroups resolve_ties(const Preprocessed& data, const RunConfig& cfg);

struct FitResult {
  Preprocessed data;
  SelectionReport selection;
  ModelSpec spec;
  EMResult em;
  TCDecomposition tc;
  std::vector<VariableComponents> components;
  MseTrace mse;
  Eigen::Index burn_in = 0;
  std::vector<std::string> warnings;
  std::map<std::string, std::string> settings;  // resolved settings echoed in the manifest
};

FitResult run_fit(const RunConfig& cfg);

/// Trend-cycle step and per-variable components of an existing fit.
void decompose_fit(FitResult& fit, int trend_count, int d);

/// Writes the model (parameters, panel, deterministic parts, metadata,
/// manifest) and every artifact enabled in `emit`.
void write_fit(const FitResult& fit, const std::string& dir, const EmitFlags& emit);

/// Table-1 analogue, ADF results and the selected dimensions.
void write_selection(const std::vector<std::string>& ids, const SelectionReport& report, const std::string& dir);

/// Writes only the artifacts enabled in `emit`.
void write_artifacts(const FitResult& fit, const std::string& dir, const EmitFlags& emit);

/// Reloads a fit directory and reruns the smoother with the stored parameters.
FitResult load_fit(const std::string& dir);

/// Writes the simulated panel, metadata and ground truth under cfg.output_dir.
void run_simulate(const RunConfig& cfg);

}  // namespace nsdfm
