#include "gcsich/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "gcsich/rng.hpp"

namespace gcsich::cohort {

namespace fs = std::filesystem;

int binarize_gos(int gos, const LabelRule& rule) {
  if (gos < 1 || gos > 5) throw std::out_of_range("GOS " + std::to_string(gos) + " outside [1, 5]");
  return gos >= rule.favorable_min_gos ? kFavorable : kUnfavorable;
}

Cohort parse_manifest(std::istream& in, const fs::path& base_dir) {
  Cohort cohort;
  std::unordered_set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ManifestError(where + ": " + e.what());
    }
    for (const char* key : {"patient_id", "gcs", "gos", "slices"}) {
      if (!j.contains(key)) throw ManifestError(where + ": missing field '" + key + "'");
    }
    PatientRecord p;
    try {
      p.patient_id = j.at("patient_id").get<std::string>();
      p.gcs = j.at("gcs").get<int>();
      p.gos = j.at("gos").get<int>();
      for (const auto& s : j.at("slices")) {
        fs::path sp = s.get<std::string>();
        p.slice_paths.push_back(sp.is_relative() ? base_dir / sp : sp);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ManifestError(where + ": " + e.what());
    }
    const std::string who = where + " (patient " + p.patient_id + ")";
    if (p.gcs < 3 || p.gcs > 15) {
      throw ManifestError(who + ": gcs " + std::to_string(p.gcs) + " outside [3, 15]");
    }
    if (p.gos < 1 || p.gos > 5) {
      throw ManifestError(who + ": gos " + std::to_string(p.gos) + " outside [1, 5]");
    }
    if (p.slice_paths.empty()) throw ManifestError(who + ": empty slice list");
    if (!ids.insert(p.patient_id).second) throw ManifestError(who + ": duplicate patient_id");
    cohort.push_back(std::move(p));
  }
  return cohort;
}

Cohort load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path());
}

void write_manifest(const fs::path& path, const Cohort& cohort) {
  std::ofstream out(path);
  if (!out) throw ManifestError("cannot write manifest " + path.string());
  const auto base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  for (const auto& p : cohort) {
    nlohmann::json slices = nlohmann::json::array();
    for (const auto& s : p.slice_paths) {
      const auto rel = s.lexically_relative(base);
      slices.push_back((rel.empty() || *rel.begin() == "..") ? s.generic_string() : rel.generic_string());
    }
    nlohmann::json j{{"patient_id", p.patient_id}, {"gcs", p.gcs}, {"gos", p.gos}, {"slices", slices}};
    out << j.dump() << '\n';
  }
}

SplitPlan split_patients(const Cohort& cohort, double train_fraction, std::uint64_t seed,
                         const LabelRule& rule) {
  const auto n = cohort.size();
  if (n < 2) throw SplitError("split_patients: need at least 2 patients");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw SplitError("split_patients: train fraction must lie in (0, 1)");
  }
  std::set<int> labels;
  for (const auto& p : cohort) labels.insert(p.label(rule));
  if (labels.size() < 2) throw SplitError("split_patients: cohort has a single label");
  const auto n_train = static_cast<std::size_t>(std::lround(static_cast<double>(n) * train_fraction));
  if (n_train < 2 || n - n_train < 2) {
    throw SplitError("split_patients: " + std::to_string(n) +
                     " patients cannot give both folds both labels");
  }

  for (int attempt = 0; attempt < 100; ++attempt) {
    num::RngStream rng(seed, "split/attempt-" + std::to_string(attempt));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::set<int> train_labels, test_labels;
    SplitPlan plan{seed, train_fraction, attempt, {}, {}};
    for (std::size_t k = 0; k < n; ++k) {
      const auto& p = cohort[order[k]];
      if (k < n_train) {
        plan.train_ids.push_back(p.patient_id);
        train_labels.insert(p.label(rule));
      } else {
        plan.test_ids.push_back(p.patient_id);
        test_labels.insert(p.label(rule));
      }
    }
    if (train_labels.size() == 2 && test_labels.size() == 2) return plan;
  }
  throw SplitError("split_patients: no split with both labels in both folds after 100 draws");
}

std::vector<SplitPlan> kfold_patients(const Cohort& cohort, std::size_t k, std::uint64_t seed,
                                      const LabelRule& rule) {
  if (k < 2) throw SplitError("kfold_patients: need at least 2 folds");
  std::vector<std::size_t> groups[2];
  for (std::size_t i = 0; i < cohort.size(); ++i) groups[cohort[i].label(rule)].push_back(i);
  for (int l = 0; l < 2; ++l) {
    if (groups[l].size() < k) {
      throw SplitError("kfold_patients: label " + std::to_string(l) + " has " + std::to_string(groups[l].size()) +
                       " patients, fewer than " + std::to_string(k) + " folds");
    }
  }
  std::vector<std::size_t> fold_of(cohort.size());
  std::size_t next = 0;
  for (int l = 0; l < 2; ++l) {
    num::RngStream rng(seed, "kfold/label-" + std::to_string(l));
    rng.shuffle(groups[l]);
    for (auto i : groups[l]) fold_of[i] = next++ % k;
  }
  std::vector<SplitPlan> plans(k);
  for (std::size_t j = 0; j < k; ++j) {
    plans[j].seed = seed;
    plans[j].train_fraction = 1.0 - 1.0 / static_cast<double>(k);
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      (fold_of[i] == j ? plans[j].test_ids : plans[j].train_ids).push_back(cohort[i].patient_id);
    }
  }
  return plans;
}

nlohmann::json to_json(const SplitPlan& plan) {
  return {{"seed", plan.seed},
          {"train_fraction", plan.train_fraction},
          {"attempt", plan.attempt},
          {"train", plan.train_ids},
          {"test", plan.test_ids}};
}

SplitPlan split_from_json(const nlohmann::json& j) {
  SplitPlan p;
  p.seed = j.at("seed").get<std::uint64_t>();
  p.train_fraction = j.value("train_fraction", 0.8);
  p.attempt = j.value("attempt", 0);
  p.train_ids = j.at("train").get<std::vector<std::string>>();
  p.test_ids = j.at("test").get<std::vector<std::string>>();
  return p;
}

void save_split(const fs::path& path, const SplitPlan& plan) {
  std::ofstream out(path);
  if (!out) throw SplitError("cannot write " + path.string());
  out << to_json(plan).dump(2) << '\n';
}

SplitPlan load_split(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SplitError("cannot open split plan " + path.string());
  try {
    return split_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw SplitError(path.string() + ": " + e.what());
  }
}

SliceFolds expand_slices(const SplitPlan& plan, const Cohort& cohort, const LabelRule& rule,
                         bool check_files) {
  std::unordered_map<std::string, int> fold;  // 0 train, 1 test
  for (const auto& id : plan.train_ids) fold[id] = 0;
  for (const auto& id : plan.test_ids) {
    if (fold.count(id)) throw SplitError("expand_slices: patient " + id + " is in both folds");
    fold[id] = 1;
  }
  if (fold.size() != cohort.size()) {
    throw SplitError("expand_slices: plan covers " + std::to_string(fold.size()) +
                     " patients, cohort has " + std::to_string(cohort.size()));
  }
  SliceFolds out;
  for (const auto& p : cohort) {
    const auto it = fold.find(p.patient_id);
    if (it == fold.end()) throw SplitError("expand_slices: patient " + p.patient_id + " not in plan");
    auto& dest = it->second == 0 ? out.train : out.test;
    for (const auto& s : p.slice_paths) {
      if (check_files && !fs::exists(s)) {
        throw SplitError("expand_slices: slice " + s.string() + " of patient " + p.patient_id +
                         " is missing");
      }
      dest.push_back({p.patient_id, s, p.gcs, p.label(rule)});
    }
  }
  return out;
}

std::vector<std::uint64_t> repeat_seeds(std::uint64_t base, int repeats) {
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < std::max(repeats, 1); ++k) seeds.push_back(base + static_cast<std::uint64_t>(k));
  return seeds;
}

}  // namespace gcsich::cohort
