#include "gcsich/run_config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace gcsich::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno == ERANGE) throw ConfigError(key + ": not a number: '" + v + "'");
  return d;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": not a non-negative integer: '" + v + "'");
  }
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": not an integer: '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

num::DType to_dtype(const std::string& key, const std::string& v) {
  if (v == "f32") return num::DType::f32;
  if (v == "f64") return num::DType::f64;
  throw ConfigError(key + ": expected f32 or f64, got '" + v + "'");
}

template <class F>
auto wrap(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

struct Field {
  std::string key;
  bool quoted;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

#define GCSICH_SIZE_FIELD(KEY, MEMBER)                                                              \
  Field {                                                                                          \
    KEY, false, [](const RunConfig& c) { return std::to_string(c.MEMBER); },                       \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.MEMBER = to_u64(k, v); } \
  }
#define GCSICH_DOUBLE_FIELD(KEY, MEMBER)                                                               \
  Field {                                                                                             \
    KEY, false, [](const RunConfig& c) { return fmt_double(c.MEMBER); },                              \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.MEMBER = to_double(k, v); } \
  }
#define GCSICH_PATH_FIELD(KEY, MEMBER)                                                          \
  Field {                                                                                      \
    KEY, true, [](const RunConfig& c) { return c.MEMBER.string(); },                           \
        [](RunConfig& c, const std::string&, const std::string& v) { c.MEMBER = fs::path(v); } \
  }
#define GCSICH_BOOL_FIELD(KEY, MEMBER)                                                             \
  Field {                                                                                         \
    KEY, false, [](const RunConfig& c) { return std::string(c.MEMBER ? "true" : "false"); },      \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.MEMBER = to_bool(k, v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      GCSICH_SIZE_FIELD("run.seed", seed),
      {"run.mode", true, [](const RunConfig& c) { return net::to_string(c.mode); },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.mode = wrap(k, [&] { return net::parse_input_mode(v); });
       }},
      GCSICH_SIZE_FIELD("run.cv", cv),

      GCSICH_PATH_FIELD("paths.manifest", manifest),
      GCSICH_PATH_FIELD("paths.split", split),
      GCSICH_PATH_FIELD("paths.run", run),
      GCSICH_PATH_FIELD("paths.predictions", predictions),
      GCSICH_PATH_FIELD("paths.out", out),

      GCSICH_SIZE_FIELD("synth.patients", synth.patients),
      GCSICH_SIZE_FIELD("synth.min_slices", synth.min_slices),
      GCSICH_SIZE_FIELD("synth.max_slices", synth.max_slices),
      GCSICH_SIZE_FIELD("synth.image_size", synth.image_size),
      GCSICH_DOUBLE_FIELD("synth.background_noise", synth.background_noise),
      GCSICH_DOUBLE_FIELD("synth.skull_intensity", synth.skull_intensity),
      GCSICH_SIZE_FIELD("synth.skull_thickness", synth.skull_thickness),
      GCSICH_DOUBLE_FIELD("synth.brain_intensity", synth.brain_intensity),
      GCSICH_DOUBLE_FIELD("synth.brain_jitter", synth.brain_jitter),
      GCSICH_DOUBLE_FIELD("synth.blob_intensity", synth.blob_intensity),
      GCSICH_DOUBLE_FIELD("synth.blob_radius_min", synth.blob_radius_min),
      GCSICH_DOUBLE_FIELD("synth.blob_radius_max", synth.blob_radius_max),
      {"synth.rule", true, [](const RunConfig& c) { return synth::to_string(c.synth.rule); },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.synth.rule = wrap(k, [&] { return synth::parse_label_rule(v); });
       }},
      GCSICH_DOUBLE_FIELD("synth.blob_rate", synth.blob_rate),
      GCSICH_DOUBLE_FIELD("synth.blob_correlation", synth.blob_correlation),
      {"synth.gcs_threshold", false, [](const RunConfig& c) { return std::to_string(c.synth.gcs_threshold); },
       [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.gcs_threshold = to_int(k, v); }},
      {"synth.mixed_shift", false, [](const RunConfig& c) { return std::to_string(c.synth.mixed_shift); },
       [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.mixed_shift = to_int(k, v); }},

      GCSICH_DOUBLE_FIELD("prep.bone_threshold", prep.thresholds.bone),
      GCSICH_DOUBLE_FIELD("prep.tissue_low", prep.thresholds.tissue_low),
      GCSICH_DOUBLE_FIELD("prep.min_area_fraction", prep.min_area_fraction),

      GCSICH_DOUBLE_FIELD("split.train_fraction", train_fraction),
      GCSICH_SIZE_FIELD("split.folds", folds),
      {"split.favorable_min_gos", false,
       [](const RunConfig& c) { return std::to_string(c.label_rule.favorable_min_gos); },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.label_rule.favorable_min_gos = to_int(k, v);
       }},

      GCSICH_SIZE_FIELD("model.input_size", model.input_size),
      {"model.backbone", true, [](const RunConfig& c) { return net::to_string(c.model.backbone); },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.backbone = wrap(k, [&] { return net::parse_backbone(v); });
       }},
      {"model.head", true, [](const RunConfig& c) { return net::to_string(c.model.head); },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.head = wrap(k, [&] { return net::parse_head(v); });
       }},
      {"model.fusion", true, [](const RunConfig& c) { return net::to_string(c.model.fusion); },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.fusion = wrap(k, [&] { return net::parse_fusion(v); });
       }},
      GCSICH_BOOL_FIELD("model.encoder_block", model.encoder_block),
      GCSICH_SIZE_FIELD("model.heads", model.heads),
      GCSICH_SIZE_FIELD("model.ff_width", model.ff_width),
      {"model.dtype", true, [](const RunConfig& c) { return num::to_string(c.model.dtype); },
       [](RunConfig& c, const std::string& k, const std::string& v) { c.model.dtype = to_dtype(k, v); }},

      GCSICH_SIZE_FIELD("train.epochs", train.epochs),
      GCSICH_DOUBLE_FIELD("train.lr", train.lr),
      GCSICH_SIZE_FIELD("train.batch_size", train.batch_size),
      GCSICH_DOUBLE_FIELD("train.dropout", train.dropout),
      GCSICH_SIZE_FIELD("train.eval_every", train.eval_every),
      GCSICH_BOOL_FIELD("train.class_weighting", train.class_weighting),
      {"train.checkpoint", true, [](const RunConfig& c) { return c.checkpoint; },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v != "final" && v != "best") throw ConfigError(k + ": expected final or best, got '" + v + "'");
         c.checkpoint = v;
       }},

      GCSICH_SIZE_FIELD("explain.n_samples", smooth.n_samples),
      GCSICH_DOUBLE_FIELD("explain.sigma", smooth.sigma),
      GCSICH_DOUBLE_FIELD("explain.alpha", overlay_alpha),
      {"explain.target_class", false, [](const RunConfig& c) { return std::to_string(c.target_class); },
       [](RunConfig& c, const std::string& k, const std::string& v) { c.target_class = to_int(k, v); }},
      GCSICH_SIZE_FIELD("explain.limit", explain_limit),
  };
  return table;
}

#undef GCSICH_SIZE_FIELD
#undef GCSICH_DOUBLE_FIELD
#undef GCSICH_PATH_FIELD
#undef GCSICH_BOOL_FIELD

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

std::string unquote(const std::string& key, const std::string& v) {
  if (v.size() < 2 || v.front() != '"') return v;
  if (v.back() != '"') throw ConfigError(key + ": unterminated string");
  std::string out;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    if (v[i] == '\\' && i + 2 < v.size()) ++i;
    out += v[i];
  }
  return out;
}

// Drops a trailing comment that is not inside quotes.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_string) {
      ++i;
    } else if (line[i] == '"') {
      in_string = !in_string;
    } else if (line[i] == '#' && !in_string) {
      return line.substr(0, i);
    }
  }
  return line;
}

}  // namespace

KeyValues parse_key_values(std::istream& in) {
  KeyValues out;
  std::string section, line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto text = trim(strip_comment(line));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
      section = trim(text.substr(1, text.size() - 2));
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    auto key = trim(text.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    out[key] = unquote(key, trim(text.substr(eq + 1)));
  }
  return out;
}

KeyValues read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  try {
    return parse_key_values(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void apply(RunConfig& config, const KeyValues& values) {
  for (const auto& [key, value] : values) {
    const auto* f = find_field(key);
    if (!f) throw ConfigError("unknown config key '" + key + "'");
    f->set(config, key, value);
  }
}

void apply_assignment(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  const auto key = trim(assignment.substr(0, eq));
  cli::apply(config, {{key, unquote(key, trim(assignment.substr(eq + 1)))}});
}

KeyValues to_key_values(const RunConfig& config) {
  KeyValues out;
  for (const auto& f : fields()) out[f.key] = f.get(config);
  return out;
}

std::string to_toml(const RunConfig& config) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const auto sec = f.key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) os << '\n';
      os << '[' << sec << "]\n";
      section = sec;
    }
    const auto v = f.get(config);
    os << f.key.substr(dot + 1) << " = " << (f.quoted ? quote(v) : v) << '\n';
  }
  return os.str();
}

void validate(const RunConfig& c) {
  try {
    synth::validate(c.synth);
    train::validate(c.train);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.cv == 0) throw ConfigError("run.cv must be at least 1");
  if (c.folds == 1) throw ConfigError("split.folds must be 0 (single split) or at least 2");
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) throw ConfigError("split.train_fraction must lie in (0, 1)");
  if (c.label_rule.favorable_min_gos != 4 && c.label_rule.favorable_min_gos != 5) {
    throw ConfigError("split.favorable_min_gos must be 4 or 5");
  }
  if (!(c.prep.thresholds.tissue_low >= 0.0 && c.prep.thresholds.tissue_low < c.prep.thresholds.bone &&
        c.prep.thresholds.bone <= 1.0)) {
    throw ConfigError("prep thresholds must satisfy 0 <= tissue_low < bone_threshold <= 1");
  }
  if (c.model.input_size < 8) throw ConfigError("model.input_size must be at least 8");
  if (c.target_class != 0 && c.target_class != 1) throw ConfigError("explain.target_class must be 0 or 1");
  if (c.smooth.n_samples == 0) throw ConfigError("explain.n_samples must be at least 1");
  if (!(c.smooth.sigma >= 0.0)) throw ConfigError("explain.sigma must be non-negative");
  if (!(c.overlay_alpha >= 0.0 && c.overlay_alpha <= 1.0)) throw ConfigError("explain.alpha must lie in [0, 1]");
}

fs::path write_run_config(const fs::path& dir, const RunConfig& config) {
  fs::create_directories(dir);
  const auto path = dir / "run_config.toml";
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_toml(config);
  return path;
}

RunConfig load_run_config(const fs::path& path) {
  RunConfig c;
  cli::apply(c, read_key_values(path));
  return c;
}

}  // namespace gcsich::cli
