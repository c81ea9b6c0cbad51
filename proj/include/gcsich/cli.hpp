#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gcsich/cohort.hpp"
#include "gcsich/evaluator.hpp"
#include "gcsich/run_config.hpp"

namespace gcsich::cli {

struct NamedPlan {
  std::string name;  // empty for a single split, else rep<r> or rep<r>-fold<j>
  cohort::SplitPlan plan;
};

/// cv repeats with seeds seed, seed + 1, ...; each repeat is one random split
/// or, with split.folds >= 2, a stratified k-fold.
std::vector<NamedPlan> make_plans(const cohort::Cohort& cohort, const RunConfig& config);

struct PrepSummary {
  std::size_t slices_in = 0, slices_kept = 0, patients_kept = 0;
  std::vector<std::string> excluded;  // slices without brain tissue
};

void run_synth(const RunConfig& config);
PrepSummary run_prep(const RunConfig& config);
std::vector<NamedPlan> run_split(const RunConfig& config);
/// Trains one model per plan; returns the run directories.
std::vector<std::filesystem::path> run_train(const RunConfig& config);

/// Test-fold evaluation of one trained run directory.
eval::EvalReport evaluate_run_dir(const std::filesystem::path& run_dir, const RunConfig& config);

struct EvalSummary {
  std::vector<std::string> names;
  std::vector<eval::EvalReport> reports;
  double mean_patient_accuracy = 0.0;
};

/// Evaluates `config.run` (a run directory or a directory of runs) or the
/// predictions CSV in `config.predictions`, writing metrics.json,
/// predictions.csv and roc.csv (plus summary.json for several runs).
EvalSummary run_eval(const RunConfig& config, bool mode_from_run);
/// Saliency for the test slices of `config.run`; returns the written overlays.
std::vector<std::filesystem::path> run_explain(const RunConfig& config, bool mode_from_run);
/// roc.csv from a predictions CSV; returns the slice-level AUC.
double run_roc(const RunConfig& config);

/// Full command line (argv[0] included). Returns the exit status.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gcsich::cli
