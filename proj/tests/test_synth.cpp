#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "doctest.h"
#include "gcsich/cohort.hpp"
#include "gcsich/ctprep.hpp"
#include "gcsich/synth.hpp"

using namespace gcsich;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("rule strings and spec validation") {
  CHECK(synth::parse_label_rule("mixed") == synth::LabelRule::mixed);
  CHECK(synth::to_string(synth::LabelRule::blob_only) == "blob-only");
  CHECK_THROWS_AS(synth::parse_label_rule("random"), std::invalid_argument);
  synth::PhantomSpec s;
  s.min_slices = 6;
  CHECK_THROWS_AS(synth::validate(s), std::invalid_argument);
  s = {};
  s.blob_intensity = 0.99;
  CHECK_THROWS_AS(synth::validate(s), std::invalid_argument);
  s = {};
  s.patients = 1;
  CHECK_THROWS_AS(synth::validate(s), std::invalid_argument);
}

TEST_CASE("label rules") {
  synth::PhantomSpec s;
  CHECK(synth::phantom_gos(s, 12, false, false) == 5);
  CHECK(cohort::binarize_gos(synth::phantom_gos(s, 12, true, true)) == cohort::kFavorable);
  CHECK(synth::phantom_gos(s, 8, false, false) == 2);
  CHECK(synth::phantom_gos(s, 9, false, false) == 5);
  s.rule = synth::LabelRule::mixed;
  CHECK(synth::phantom_gos(s, 6, false, false) == 5);
  CHECK(synth::phantom_gos(s, 11, true, false) == 2);
  CHECK(synth::phantom_gos(s, 12, true, false) == 5);
  s.rule = synth::LabelRule::blob_only;
  CHECK(synth::phantom_gos(s, 15, false, true) == 2);
  CHECK(synth::phantom_gos(s, 3, true, false) == 5);

  s.rule = synth::LabelRule::gcs_only;
  for (const auto& p : synth::simulate(s)) {
    CHECK(p.gcs >= 3);
    CHECK(p.gcs <= 15);
    CHECK(p.gos == (p.gcs >= 9 ? 5 : 2));
  }
}

TEST_CASE("skull ring is exactly recoverable and stripped") {
  for (auto rule : {synth::LabelRule::gcs_only, synth::LabelRule::blob_only, synth::LabelRule::mixed}) {
    synth::PhantomSpec s;
    s.rule = rule;
    s.patients = 12;
    s.min_slices = 2;
    s.max_slices = 6;
    s.seed = 5;
    for (const auto& p : synth::simulate(s)) {
      CHECK(p.slices.size() >= 2);
      CHECK(p.slices.size() <= 6);
      for (const auto& sl : p.slices) {
        CHECK(sl.image.width == 32);
        const auto masks = prep::threshold_segment(sl.image, {});
        CHECK(masks.bone == sl.ring);
        CHECK(masks.tissue == sl.brain);
        if (!p.has_blob) CHECK(sl.blob.count() == 0);
        const auto stripped = prep::strip_nonbrain(sl.image, {});
        std::size_t kept = 0;
        for (std::size_t i = 0; i < sl.image.size(); ++i) {
          if (sl.ring.bits[i]) CHECK(stripped.pixels[i] == 0.0);
          if (sl.brain.bits[i] && stripped.pixels[i] == sl.image.pixels[i]) ++kept;
        }
        CHECK(kept == sl.brain.count());
      }
    }
  }
}

TEST_CASE("blobs follow the rule") {
  synth::PhantomSpec s;
  s.rule = synth::LabelRule::blob_only;
  s.patients = 60;
  for (const auto& p : synth::simulate(s)) {
    CHECK(p.has_blob == (p.gos == 2));
    for (const auto& sl : p.slices) CHECK((sl.blob.count() > 0) == p.has_blob);
  }
}

TEST_CASE("label balance over 20 seeds") {
  for (auto rule : {synth::LabelRule::gcs_only, synth::LabelRule::blob_only, synth::LabelRule::mixed}) {
    std::size_t favorable = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      synth::PhantomSpec s;
      s.rule = rule;
      s.seed = seed;
      s.min_slices = s.max_slices = 1;
      for (const auto& p : synth::simulate(s)) {
        favorable += p.gos >= 4 ? 1 : 0;
        ++total;
      }
    }
    const double rate = static_cast<double>(favorable) / static_cast<double>(total);
    CAPTURE(synth::to_string(rule));
    CHECK(std::abs(rate - 0.5) <= 0.10);
  }
}

TEST_CASE("generate writes a deterministic cohort") {
  const auto base = fs::temp_directory_path() / "gcsich_synth_test";
  fs::remove_all(base);
  synth::PhantomSpec s;
  s.seed = 11;
  const auto a = synth::generate(s, base / "a");
  const auto b = synth::generate(s, base / "b");
  CHECK(a.size() == 40);
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(base / "a" / "images")) pngs += e.path().extension() == ".png";
  CHECK(pngs == 200);

  std::ifstream m(base / "a" / "manifest.jsonl");
  std::size_t lines = 0;
  for (std::string l; std::getline(m, l);) lines += !l.empty();
  CHECK(lines == 40);

  CHECK(slurp(base / "a" / "manifest.jsonl") == slurp(base / "b" / "manifest.jsonl"));
  for (const auto& e : fs::directory_iterator(base / "a" / "images")) {
    CHECK(slurp(e.path()) == slurp(base / "b" / "images" / e.path().filename()));
  }

  const auto loaded = cohort::load_manifest(base / "a" / "manifest.jsonl");
  REQUIRE(loaded.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(loaded[i].patient_id == a[i].patient_id);
    CHECK(loaded[i].gcs == a[i].gcs);
    CHECK(loaded[i].gos == a[i].gos);
    CHECK(loaded[i].slice_paths.size() == 5);
  }
  const auto sims = synth::simulate(s);
  CHECK(read_png(a[3].slice_paths[2]) == sims[3].slices[2].image);

  s.seed = 12;
  synth::generate(s, base / "c");
  CHECK(slurp(base / "a" / "manifest.jsonl") != slurp(base / "c" / "manifest.jsonl"));
  fs::remove_all(base);
}
