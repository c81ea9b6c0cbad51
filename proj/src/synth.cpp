#include "gcsich/synth.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <stdexcept>

#include "gcsich/rng.hpp"

namespace gcsich::synth {

std::string to_string(LabelRule r) {
  switch (r) {
    case LabelRule::gcs_only: return "gcs-only";
    case LabelRule::blob_only: return "blob-only";
    case LabelRule::mixed: return "mixed";
  }
  return "gcs-only";
}

LabelRule parse_label_rule(const std::string& s) {
  if (s == "gcs-only") return LabelRule::gcs_only;
  if (s == "blob-only") return LabelRule::blob_only;
  if (s == "mixed") return LabelRule::mixed;
  throw std::invalid_argument("unknown label rule '" + s + "' (gcs-only|blob-only|mixed)");
}

void validate(const PhantomSpec& s) {
  auto fail = [](const std::string& m) { throw std::invalid_argument("phantom spec: " + m); };
  if (s.patients < 2) fail("at least 2 patients are needed");
  if (s.min_slices == 0 || s.max_slices < s.min_slices) fail("slice range must satisfy 1 <= min <= max");
  if (s.image_size < 16) fail("image size must be at least 16");
  if (s.skull_thickness == 0 || s.skull_thickness * 4 > s.image_size) fail("skull thickness out of range");
  auto unit = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) fail(std::string(name) + " must lie in [0, 1]");
  };
  unit(s.background_noise, "background_noise");
  unit(s.skull_intensity, "skull_intensity");
  unit(s.brain_intensity, "brain_intensity");
  unit(s.brain_jitter, "brain_jitter");
  unit(s.blob_intensity, "blob_intensity");
  unit(s.blob_rate, "blob_rate");
  unit(s.blob_correlation, "blob_correlation");
  if (!(s.blob_radius_min > 0.0 && s.blob_radius_max >= s.blob_radius_min && s.blob_radius_max < 0.3)) {
    fail("blob radii must satisfy 0 < min <= max < 0.3");
  }
  if (s.brain_intensity + 1.5 * s.brain_jitter >= s.skull_intensity ||
      s.blob_intensity + 0.5 * s.brain_jitter >= s.skull_intensity) {
    fail("brain and blob intensities must stay below the skull intensity");
  }
  if (s.gcs_threshold < 4 || s.gcs_threshold > 15) fail("gcs_threshold must lie in [4, 15]");
}

int phantom_gos(const PhantomSpec& spec, int gcs, bool has_blob, bool hidden_unfavorable) {
  bool favorable = false;
  switch (spec.rule) {
    case LabelRule::gcs_only: favorable = gcs >= spec.gcs_threshold; break;
    case LabelRule::blob_only: favorable = !hidden_unfavorable; break;
    case LabelRule::mixed:
      favorable = gcs + (has_blob ? -spec.mixed_shift : spec.mixed_shift) >= spec.gcs_threshold;
      break;
  }
  return favorable ? 5 : 2;
}

namespace {

PhantomSlice render(const PhantomSpec& spec, num::RngStream& rng, double cx, double cy, double ax, double ay,
                    bool blob) {
  const std::size_t n = spec.image_size;
  const double size = static_cast<double>(n);
  const double scale = 0.9 + 0.1 * rng.uniform();
  const double ox = ax * scale, oy = ay * scale;
  const double t = static_cast<double>(spec.skull_thickness);
  const double ix = ox - t, iy = oy - t;
  const double offset = spec.brain_jitter * (2.0 * rng.uniform() - 1.0);

  double bx = 0.0, by = 0.0, br = 0.0;
  if (blob) {
    const double angle = 2.0 * std::numbers::pi * rng.uniform();
    const double rad = 0.6 * std::sqrt(rng.uniform());
    bx = cx + rad * ix * std::cos(angle);
    by = cy + rad * iy * std::sin(angle);
    br = size * (spec.blob_radius_min + (spec.blob_radius_max - spec.blob_radius_min) * rng.uniform());
  }

  PhantomSlice s{GrayImage(n, n), prep::BinaryMask(n, n), prep::BinaryMask(n, n), prep::BinaryMask(n, n)};
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double dx = static_cast<double>(x) + 0.5 - cx;
      const double dy = static_cast<double>(y) + 0.5 - cy;
      const double outer = std::hypot(dx / ox, dy / oy);
      const double inner = std::hypot(dx / ix, dy / iy);
      const std::size_t i = y * n + x;
      const double pixel_noise = rng.uniform();
      double v = spec.background_noise * pixel_noise;
      if (outer <= 1.0 && inner > 1.0) {
        s.ring.bits[i] = 1;
        v = spec.skull_intensity;
      } else if (inner <= 1.0) {
        s.brain.bits[i] = 1;
        const double jitter = spec.brain_jitter * (pixel_noise - 0.5);
        v = spec.brain_intensity + offset + jitter;
        if (blob && std::hypot(static_cast<double>(x) + 0.5 - bx, static_cast<double>(y) + 0.5 - by) <= br) {
          s.blob.bits[i] = 1;
          v = spec.blob_intensity + jitter;
        }
      }
      s.image.pixels[i] = quantize8(v);
    }
  }
  return s;
}

std::string patient_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%04zu", i + 1);
  return buf;
}

}  // namespace

std::vector<PhantomPatient> simulate(const PhantomSpec& spec) {
  validate(spec);
  const double size = static_cast<double>(spec.image_size);
  std::vector<PhantomPatient> out;
  out.reserve(spec.patients);
  for (std::size_t p = 0; p < spec.patients; ++p) {
    auto rng = num::RngStream(spec.seed, "phantom").child("patient-" + std::to_string(p));
    PhantomPatient pt;
    pt.patient_id = patient_name(p);
    pt.gcs = static_cast<int>(rng.between(3, 15));
    bool hidden_unfavorable = false;
    if (spec.rule == LabelRule::blob_only) {
      hidden_unfavorable = rng.uniform() < 0.5;
      const double u = rng.uniform();
      pt.has_blob = hidden_unfavorable ? u < spec.blob_correlation : u >= spec.blob_correlation;
    } else {
      pt.has_blob = rng.uniform() < spec.blob_rate;
    }
    pt.gos = phantom_gos(spec, pt.gcs, pt.has_blob, hidden_unfavorable);

    const double cx = size * (0.5 + 0.03 * (2.0 * rng.uniform() - 1.0));
    const double cy = size * (0.5 + 0.03 * (2.0 * rng.uniform() - 1.0));
    const double ax = size * (0.40 + 0.06 * rng.uniform());
    const double ay = size * (0.42 + 0.05 * rng.uniform());
    const auto count = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(spec.min_slices),
                                                            static_cast<std::int64_t>(spec.max_slices)));
    for (std::size_t k = 0; k < count; ++k) {
      auto srng = rng.child("slice-" + std::to_string(k));
      pt.slices.push_back(render(spec, srng, cx, cy, ax, ay, pt.has_blob));
    }
    out.push_back(std::move(pt));
  }
  return out;
}

cohort::Cohort generate(const PhantomSpec& spec, const std::filesystem::path& out_dir) {
  const auto patients = simulate(spec);
  const auto image_dir = out_dir / "images";
  std::error_code ec;
  std::filesystem::create_directories(image_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + image_dir.string() + ": " + ec.message());
  cohort::Cohort cohort;
  for (const auto& p : patients) {
    cohort::PatientRecord rec;
    rec.patient_id = p.patient_id;
    rec.gcs = p.gcs;
    rec.gos = p.gos;
    for (std::size_t k = 0; k < p.slices.size(); ++k) {
      const auto path = image_dir / (p.patient_id + "_s" + std::to_string(k) + ".png");
      write_png(path, p.slices[k].image);
      rec.slice_paths.push_back(path);
    }
    cohort.push_back(std::move(rec));
  }
  cohort::write_manifest(out_dir / "manifest.jsonl", cohort);
  return cohort;
}

cohort::Cohort phantom_records(const std::vector<PhantomPatient>& patients) {
  cohort::Cohort records;
  for (const auto& p : patients) {
    cohort::PatientRecord r;
    r.patient_id = p.patient_id;
    r.gcs = p.gcs;
    r.gos = p.gos;
    for (std::size_t k = 0; k < p.slices.size(); ++k) {
      r.slice_paths.emplace_back(p.patient_id + "_s" + std::to_string(k) + ".png");
    }
    records.push_back(std::move(r));
  }
  return records;
}

PhantomFolds phantom_folds(const std::vector<PhantomPatient>& patients, double train_fraction,
                           std::uint64_t split_seed, num::DType dtype, const prep::StripConfig& strip) {
  return phantom_folds(patients, cohort::split_patients(phantom_records(patients), train_fraction, split_seed),
                       dtype, strip);
}

PhantomFolds phantom_folds(const std::vector<PhantomPatient>& patients, const cohort::SplitPlan& plan,
                           num::DType dtype, const prep::StripConfig& strip) {
  std::map<std::string, const PhantomPatient*> by_id;
  for (const auto& p : patients) by_id[p.patient_id] = &p;
  std::map<std::string, std::vector<GrayImage>> stripped;
  auto strip_patient = [&](const std::string& id) -> const std::vector<GrayImage>& {
    auto& imgs = stripped[id];
    if (imgs.empty()) {
      for (const auto& sl : by_id.at(id)->slices) imgs.push_back(prep::strip_nonbrain(sl.image, strip));
    }
    return imgs;
  };
  PhantomFolds f;
  f.plan = plan;
  std::vector<GrayImage> train_images;
  for (const auto& id : f.plan.train_ids) {
    for (const auto& img : strip_patient(id)) train_images.push_back(img);
  }
  f.stats = prep::tissue_statistics(train_images);
  auto fill = [&](const std::vector<std::string>& ids, data::Dataset& out) {
    for (const auto& id : ids) {
      const auto& p = *by_id.at(id);
      const auto& imgs = strip_patient(id);
      for (std::size_t k = 0; k < imgs.size(); ++k) {
        auto s = data::make_sample(imgs[k], p.gcs, cohort::binarize_gos(p.gos), f.stats, dtype, id);
        s.path = id + "_s" + std::to_string(k) + ".png";
        out.push_back(std::move(s));
      }
    }
  };
  fill(f.plan.train_ids, f.train);
  fill(f.plan.test_ids, f.test);
  return f;
}

}  // namespace gcsich::synth
