#include "gcsich/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "gcsich/checkpoint.hpp"
#include "gcsich/dataset.hpp"
#include "gcsich/explain.hpp"
#include "gcsich/synth.hpp"
#include "gcsich/trainer.hpp"

namespace gcsich::cli {

namespace fs = std::filesystem;

namespace {

void require_path(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("missing ") + what);
}

void require_file(const fs::path& p, const char* what) {
  require_path(p, what);
  if (!fs::exists(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
}

bool same_directory(const fs::path& a, const fs::path& b) {
  std::error_code ec;
  return fs::exists(a) && fs::exists(b) && fs::equivalent(a, b, ec);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string plan_name(std::size_t repeat, std::size_t fold, bool folds) {
  auto name = "rep" + std::to_string(repeat);
  if (folds) name += "-fold" + std::to_string(fold);
  return name;
}

bool is_run_dir(const fs::path& dir) {
  return fs::exists(dir / "final.gich") && fs::exists(dir / "run_config.toml") && fs::exists(dir / "split.json");
}

std::vector<std::pair<std::string, fs::path>> run_dirs(const fs::path& root) {
  if (is_run_dir(root)) return {{"", root}};
  std::vector<std::pair<std::string, fs::path>> out;
  if (fs::is_directory(root)) {
    for (const auto& e : fs::directory_iterator(root)) {
      if (e.is_directory() && is_run_dir(e.path())) out.emplace_back(e.path().filename().string(), e.path());
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ConfigError("no trained run under " + root.string());
  return out;
}

struct LoadedRun {
  RunConfig trained;  // the run's own config
  net::FusionModel model;
  cohort::SplitPlan plan;
  prep::IntensityStats stats;
  cohort::Cohort cohort;
};

LoadedRun load_run(const fs::path& dir, const RunConfig& config) {
  LoadedRun r;
  r.trained = load_run_config(dir / "run_config.toml");
  r.model = net::load_model(dir / (config.checkpoint + ".gich"), r.trained.model);
  r.plan = config.split.empty() ? cohort::load_split(dir / "split.json") : cohort::load_split(config.split);
  r.stats = prep::read_stats(dir / "stats.txt");
  const auto manifest = config.manifest.empty() ? r.trained.manifest : config.manifest;
  require_file(manifest, "manifest");
  r.cohort = cohort::load_manifest(manifest);
  return r;
}

void write_eval_outputs(const fs::path& dir, const eval::EvalReport& report) {
  fs::create_directories(dir);
  eval::write_report(dir / "metrics.json", report);
  eval::write_predictions_csv(dir / "predictions.csv", report.slices);
  eval::write_roc_csv(dir / "roc.csv", report.roc);
}

}  // namespace

std::vector<NamedPlan> make_plans(const cohort::Cohort& cohort, const RunConfig& config) {
  std::vector<NamedPlan> plans;
  const bool single = config.cv == 1 && config.folds == 0;
  const auto seeds = cohort::repeat_seeds(config.seed, static_cast<int>(config.cv));
  for (std::size_t r = 0; r < seeds.size(); ++r) {
    if (config.folds >= 2) {
      auto folds = cohort::kfold_patients(cohort, config.folds, seeds[r], config.label_rule);
      for (std::size_t j = 0; j < folds.size(); ++j) plans.push_back({plan_name(r, j, true), std::move(folds[j])});
    } else {
      plans.push_back({single ? "" : plan_name(r, 0, false),
                       cohort::split_patients(cohort, config.train_fraction, seeds[r], config.label_rule)});
    }
  }
  return plans;
}

void run_synth(const RunConfig& config) {
  require_path(config.out, "--out");
  auto spec = config.synth;
  spec.seed = config.seed;
  synth::generate(spec, config.out);
  write_run_config(config.out, config);
}

PrepSummary run_prep(const RunConfig& config) {
  require_file(config.manifest, "manifest");
  require_path(config.out, "--out");
  if (same_directory(config.out, config.manifest.parent_path().empty() ? "." : config.manifest.parent_path())) {
    throw ConfigError("--out must differ from the manifest directory so inputs stay untouched");
  }
  const auto cohort = cohort::load_manifest(config.manifest);
  const auto image_dir = config.out / "images";
  fs::create_directories(image_dir);
  PrepSummary summary;
  cohort::Cohort kept;
  for (const auto& p : cohort) {
    cohort::PatientRecord rec{p.patient_id, p.gcs, p.gos, {}};
    for (std::size_t k = 0; k < p.slice_paths.size(); ++k) {
      ++summary.slices_in;
      try {
        const auto stripped = prep::strip_nonbrain(read_png(p.slice_paths[k]), config.prep);
        const auto path = image_dir / (p.patient_id + "_s" + std::to_string(k) + ".png");
        write_png(path, stripped);
        rec.slice_paths.push_back(path);
        ++summary.slices_kept;
      } catch (const prep::EmptyBrainError&) {
        summary.excluded.push_back(p.slice_paths[k].string());
      }
    }
    if (!rec.slice_paths.empty()) kept.push_back(std::move(rec));
  }
  summary.patients_kept = kept.size();
  cohort::write_manifest(config.out / "manifest.jsonl", kept);
  write_json(config.out / "prep_report.json", {{"slices_in", summary.slices_in},
                                               {"slices_kept", summary.slices_kept},
                                               {"patients_kept", summary.patients_kept},
                                               {"excluded", summary.excluded}});
  write_run_config(config.out, config);
  return summary;
}

std::vector<NamedPlan> run_split(const RunConfig& config) {
  require_file(config.manifest, "manifest");
  require_path(config.out, "--out");
  const auto plans = make_plans(cohort::load_manifest(config.manifest), config);
  fs::create_directories(config.out);
  for (const auto& p : plans) cohort::save_split(config.out / ((p.name.empty() ? "split" : p.name) + ".json"), p.plan);
  write_run_config(config.out, config);
  return plans;
}

std::vector<fs::path> run_train(const RunConfig& config) {
  require_file(config.manifest, "manifest");
  require_path(config.out, "--out");
  const auto cohort = cohort::load_manifest(config.manifest);
  std::vector<NamedPlan> plans;
  if (!config.split.empty()) {
    plans.push_back({"", cohort::load_split(config.split)});
  } else {
    plans = make_plans(cohort, config);
  }
  const auto size = config.model.input_size;
  std::vector<fs::path> dirs;
  write_run_config(config.out, config);
  for (const auto& np : plans) {
    const auto dir = np.name.empty() ? config.out : config.out / np.name;
    fs::create_directories(dir);
    const auto folds = cohort::expand_slices(np.plan, cohort, config.label_rule);
    const auto stats = data::fold_statistics(folds.train, size);
    prep::write_stats(dir / "stats.txt", stats);
    cohort::save_split(dir / "split.json", np.plan);
    const auto train_set = data::load_dataset(folds.train, stats, size, config.model.dtype);
    const auto val_set = data::load_dataset(folds.test, stats, size, config.model.dtype);
    auto tc = config.train;
    tc.seed = config.seed;
    tc.input = config.mode;
    train::fit(train_set, val_set, config.model, tc, dir);
    write_run_config(dir, config);
    dirs.push_back(dir);
  }
  return dirs;
}

eval::EvalReport evaluate_run_dir(const fs::path& run_dir, const RunConfig& config) {
  const auto run = load_run(run_dir, config);
  const auto folds = cohort::expand_slices(run.plan, run.cohort, run.trained.label_rule);
  const auto test = data::load_dataset(folds.test, run.stats, run.trained.model.input_size, run.trained.model.dtype);
  return eval::evaluate_run(run.model, test, config.mode);
}

EvalSummary run_eval(const RunConfig& config, bool mode_from_run) {
  require_path(config.out, "--out");
  EvalSummary summary;
  auto resolved = config;
  if (!config.predictions.empty()) {
    require_file(config.predictions, "predictions CSV");
    summary.names.push_back("");
    summary.reports.push_back(eval::evaluate_predictions(eval::read_predictions_csv(config.predictions)));
    write_eval_outputs(config.out, summary.reports.back());
  } else {
    require_path(config.run, "--run");
    const auto dirs = run_dirs(config.run);
    if (mode_from_run) resolved.mode = load_run_config(dirs.front().second / "run_config.toml").mode;
    for (const auto& [name, dir] : dirs) {
      summary.names.push_back(name);
      summary.reports.push_back(evaluate_run_dir(dir, resolved));
      write_eval_outputs(name.empty() ? config.out : config.out / name, summary.reports.back());
      if (!name.empty()) write_run_config(config.out / name, resolved);
    }
  }
  double acc = 0.0;
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t i = 0; i < summary.reports.size(); ++i) {
    const auto& r = summary.reports[i];
    acc += r.patient.accuracy.value_or(0.0);
    runs.push_back({{"name", summary.names[i]},
                    {"patient_accuracy", eval::to_json(r.patient).at("accuracy")},
                    {"slice_accuracy", eval::to_json(r.slice).at("accuracy")},
                    {"slice_auc", r.slice_auc ? nlohmann::json(*r.slice_auc) : nlohmann::json(nullptr)}});
  }
  summary.mean_patient_accuracy = acc / static_cast<double>(summary.reports.size());
  if (summary.reports.size() > 1) {
    write_json(config.out / "summary.json",
               {{"mode", net::to_string(resolved.mode)},
                {"runs", runs},
                {"mean_patient_accuracy", summary.mean_patient_accuracy}});
  }
  write_run_config(config.out, resolved);
  return summary;
}

std::vector<fs::path> run_explain(const RunConfig& config, bool mode_from_run) {
  require_path(config.run, "--run");
  require_path(config.out, "--out");
  if (!is_run_dir(config.run)) throw ConfigError("not a trained run directory: " + config.run.string());
  auto resolved = config;
  const auto run = load_run(config.run, config);
  if (mode_from_run) resolved.mode = run.trained.mode;
  const auto folds = cohort::expand_slices(run.plan, run.cohort, run.trained.label_rule);
  const auto size = run.trained.model.input_size;
  auto smooth = resolved.smooth;
  smooth.seed = resolved.seed;
  std::vector<fs::path> written;
  for (const auto& rec : folds.test) {
    if (resolved.explain_limit && written.size() >= resolved.explain_limit) break;
    const auto base = data::load_slice(rec.slice_path, size);
    const auto image = prep::standardize(base, run.stats.mean, run.stats.std, run.trained.model.dtype);
    const auto cam = explain::fusion_cam_model(run.model, rec.gcs, resolved.mode);
    const auto map = explain::smooth_grad_cam(cam, image, resolved.target_class, smooth);
    const auto stem = rec.patient_id + "_" + rec.slice_path.stem().string();
    written.push_back(explain::write_explanation(resolved.out, stem, base, map, resolved.target_class, smooth,
                                                 resolved.overlay_alpha)
                          .overlay);
  }
  write_run_config(resolved.out, resolved);
  return written;
}

double run_roc(const RunConfig& config) {
  require_file(config.predictions, "predictions CSV");
  require_path(config.out, "--out");
  const auto rows = eval::read_predictions_csv(config.predictions);
  std::vector<double> scores;
  std::vector<int> truths;
  for (const auto& r : rows) {
    scores.push_back(r.score);
    truths.push_back(r.truth);
  }
  const auto roc = eval::roc_auc(scores, truths);
  fs::create_directories(config.out);
  eval::write_roc_csv(config.out / "roc.csv", roc);
  write_run_config(config.out, config);
  return roc.auc;
}

namespace {

struct Flags {
  std::string config_path;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  std::string mode;
  std::size_t cv = 1;
  std::string out, manifest, split, run, predictions;
};

enum : unsigned {
  kSeed = 1u << 0,
  kMode = 1u << 1,
  kCv = 1u << 2,
  kManifest = 1u << 3,
  kSplit = 1u << 4,
  kRun = 1u << 5,
  kPredictions = 1u << 6,
};

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& help, unsigned which,
                      Flags& f) {
  auto* cmd = app.add_subcommand(name, help);
  cmd->add_option("--config", f.config_path, "TOML-style key = value settings file");
  cmd->add_option("--set", f.sets, "Override one setting, e.g. --set train.epochs=50");
  cmd->add_option("--out", f.out, "Output directory");
  if (which & kSeed) cmd->add_option("--seed", f.seed, "Seed for phantom, splits, training and noise");
  if (which & kMode) {
    cmd->add_option("--mode", f.mode, "Input pathways")
        ->check(CLI::IsMember({"fusion", "image-only", "gcs-only"}));
  }
  if (which & kCv) cmd->add_option("--cv", f.cv, "Split repeats")->check(CLI::PositiveNumber);
  if (which & kManifest) cmd->add_option("--manifest", f.manifest, "Cohort manifest (JSON Lines)");
  if (which & kSplit) cmd->add_option("--split", f.split, "Split plan JSON");
  if (which & kRun) cmd->add_option("--run", f.run, "Training output directory");
  if (which & kPredictions) cmd->add_option("--predictions", f.predictions, "Slice predictions CSV");
  return cmd;
}

// Defaults, then the config file, then --set, then dedicated flags.
RunConfig resolve(const CLI::App& cmd, const Flags& f, bool& mode_from_run) {
  RunConfig c;
  bool file_mode = false;
  if (!f.config_path.empty()) {
    const auto kv = read_key_values(f.config_path);
    file_mode = kv.count("run.mode") != 0;
    cli::apply(c, kv);
  }
  for (const auto& s : f.sets) {
    apply_assignment(c, s);
    file_mode = file_mode || s.rfind("run.mode", 0) == 0;
  }
  auto given = [&](const char* flag) { return cmd.get_option_no_throw(flag) && cmd.count(flag) > 0; };
  if (given("--seed")) c.seed = f.seed;
  if (given("--mode")) c.mode = net::parse_input_mode(f.mode);
  if (given("--cv")) c.cv = f.cv;
  if (given("--out")) c.out = f.out;
  if (given("--manifest")) c.manifest = f.manifest;
  if (given("--split")) c.split = f.split;
  if (given("--run")) c.run = f.run;
  if (given("--predictions")) c.predictions = f.predictions;
  mode_from_run = !given("--mode") && !file_mode;
  validate(c);
  return c;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal CT + GCS prognosis pipeline", "gcsich"};
  app.require_subcommand(1);
  Flags f;
  add_command(app, "synth", "Generate a phantom cohort", kSeed, f);
  add_command(app, "prep", "Skull-strip every slice of a manifest", kManifest, f);
  add_command(app, "split", "Write patient-level split plans", kSeed | kCv | kManifest, f);
  add_command(app, "train", "Train one model per split plan", kSeed | kMode | kCv | kManifest | kSplit, f);
  add_command(app, "eval", "Evaluate trained runs or a predictions CSV",
              kMode | kManifest | kSplit | kRun | kPredictions, f);
  add_command(app, "explain", "Smooth Grad-CAM overlays for test slices", kSeed | kMode | kManifest | kSplit | kRun,
              f);
  add_command(app, "roc", "ROC curve CSV from a predictions CSV", kPredictions, f);

  if (argc > 1 && argv[1][0] != '-' && !app.get_subcommand_no_throw(argv[1])) {
    err << "gcsich: unknown command '" << argv[1] << "'\n\n" << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "gcsich: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  const auto* cmd = app.get_subcommands().front();
  const auto& name = cmd->get_name();
  try {
    bool mode_from_run = false;
    const auto config = resolve(*cmd, f, mode_from_run);
    if (name == "synth") {
      run_synth(config);
      out << "wrote " << config.synth.patients << " patients to " << config.out.string() << '\n';
    } else if (name == "prep") {
      const auto s = run_prep(config);
      out << "kept " << s.slices_kept << " of " << s.slices_in << " slices (" << s.patients_kept << " patients)\n";
    } else if (name == "split") {
      out << "wrote " << run_split(config).size() << " split plan(s)\n";
    } else if (name == "train") {
      out << "trained " << run_train(config).size() << " run(s)\n";
    } else if (name == "eval") {
      const auto s = run_eval(config, mode_from_run);
      out << "patient accuracy " << s.mean_patient_accuracy << '\n';
    } else if (name == "explain") {
      out << "wrote " << run_explain(config, mode_from_run).size() << " overlay(s)\n";
    } else if (name == "roc") {
      out << "auc " << run_roc(config) << '\n';
    }
  } catch (const std::exception& e) {
    err << "gcsich " << name << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace gcsich::cli
