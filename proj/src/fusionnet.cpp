#include "gcsich/fusionnet.hpp"

#include <cmath>
#include <stdexcept>

#include "gcsich/rng.hpp"

namespace gcsich::net {

using num::Tensor;

std::string to_string(Backbone b) { return b == Backbone::tiny ? "tiny" : "resnet50"; }
std::string to_string(HeadPreset h) { return h == HeadPreset::tiny ? "tiny" : "densenet121"; }
std::string to_string(FusionLayout f) {
  return f == FusionLayout::single_token ? "single-token" : "two-token";
}
std::string to_string(InputMode m) {
  switch (m) {
    case InputMode::fusion: return "fusion";
    case InputMode::image_only: return "image-only";
    case InputMode::gcs_only: return "gcs-only";
  }
  return "fusion";
}

Backbone parse_backbone(const std::string& s) {
  if (s == "tiny") return Backbone::tiny;
  if (s == "resnet50") return Backbone::resnet50;
  throw std::invalid_argument("unknown backbone preset '" + s + "'");
}
HeadPreset parse_head(const std::string& s) {
  if (s == "tiny") return HeadPreset::tiny;
  if (s == "densenet121") return HeadPreset::densenet121;
  throw std::invalid_argument("unknown head preset '" + s + "'");
}
FusionLayout parse_fusion(const std::string& s) {
  if (s == "single-token") return FusionLayout::single_token;
  if (s == "two-token") return FusionLayout::two_token;
  throw std::invalid_argument("unknown fusion layout '" + s + "'");
}
InputMode parse_input_mode(const std::string& s) {
  if (s == "fusion") return InputMode::fusion;
  if (s == "image-only") return InputMode::image_only;
  if (s == "gcs-only") return InputMode::gcs_only;
  throw std::invalid_argument("unknown mode '" + s + "' (fusion|image-only|gcs-only)");
}

ModelConfig ModelConfig::tiny() { return {}; }

ModelConfig ModelConfig::paper_scale() {
  ModelConfig c;
  c.input_size = 224;
  c.backbone = Backbone::resnet50;
  c.head = HeadPreset::densenet121;
  c.ff_width = 4 * kModelWidth;
  return c;
}

void ParamSet::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(t));
}

const Tensor& ParamSet::at(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return entries_[it->second].second;
}

std::vector<Tensor> ParamSet::tensors() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : entries_) out.push_back(t);
  return out;
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (const auto& [name, t] : entries_) out.add(name, t.clone(t.requires_grad()));
  return out;
}

namespace {

// ---- architecture tables -------------------------------------------------

struct StageSpec {
  std::size_t blocks, mid, out, stride;
};

struct BackboneSpec {
  std::size_t stem_channels, stem_kernel, stem_stride;
  bool stem_pool;
  bool bottleneck;
  std::vector<StageSpec> stages;
  std::size_t fc_hidden;
};

BackboneSpec backbone_spec(Backbone b) {
  if (b == Backbone::tiny) return {4, 3, 2, false, false, {{1, 4, 4, 1}, {1, 8, 8, 2}, {1, 16, 16, 2}}, 128};
  return {64, 7, 2, true, true,
          {{3, 64, 256, 1}, {4, 128, 512, 2}, {6, 256, 1024, 2}, {3, 512, 2048, 2}}, 512};
}

struct HeadSpec {
  std::size_t stem_channels, stem_kernel, stem_stride;
  bool stem_pool;
  std::vector<std::size_t> blocks;
  std::size_t growth;
  bool bottleneck;
  double compression;
};

// Tiny: stem 8 channels, two dense blocks of 2 layers, growth 4.
// densenet121: stem 64, blocks (6, 12, 24, 16), growth 32, 1x1 bottlenecks
// of width 4 * growth, compression 0.5.
HeadSpec head_spec(HeadPreset h) {
  if (h == HeadPreset::tiny) return {8, 3, 2, false, {2, 2}, 4, false, 0.5};
  return {64, 7, 2, true, {6, 12, 24, 16}, 32, true, 0.5};
}

// ---- parameter construction ---------------------------------------------

class Builder {
 public:
  Builder(ParamSet& params, num::DType dtype, std::uint64_t seed)
      : params_(params), dtype_(dtype), rng_(seed, "init") {}

  void weight(const std::string& name, num::Shape shape, std::size_t fan_in) {
    const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
    auto stream = rng_.child(name);
    std::vector<double> v(num::shape_numel(shape));
    for (auto& x : v) x = (2.0 * stream.uniform() - 1.0) * bound;
    params_.add(name, Tensor::from(std::move(shape), std::move(v), dtype_, true));
  }
  void constant(const std::string& name, num::Shape shape, double value) {
    params_.add(name, Tensor::full(std::move(shape), value, dtype_, true));
  }
  void conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t kh,
            std::size_t kw, bool bias = true) {
    weight(name + ".w", {cout, cin, kh, kw}, cin * kh * kw);
    if (bias) constant(name + ".b", {cout}, 0.0);
  }
  void dense(const std::string& name, std::size_t in, std::size_t out, bool bias = true) {
    weight(name + ".w", {out, in}, in);
    if (bias) constant(name + ".b", {out}, 0.0);
  }

 private:
  ParamSet& params_;
  num::DType dtype_;
  num::RngStream rng_;
};

std::string block_name(std::size_t stage, std::size_t block) {
  return "image.stage" + std::to_string(stage + 1) + ".block" + std::to_string(block);
}

void build_backbone(Builder& b, const BackboneSpec& spec) {
  b.conv("image.stem", 1, spec.stem_channels, spec.stem_kernel, spec.stem_kernel);
  std::size_t in = spec.stem_channels;
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    const auto& st = spec.stages[s];
    for (std::size_t k = 0; k < st.blocks; ++k) {
      const auto name = block_name(s, k);
      const std::size_t stride = k == 0 ? st.stride : 1;
      if (spec.bottleneck) {
        b.conv(name + ".conv1", in, st.mid, 1, 1);
        b.conv(name + ".conv2", st.mid, st.mid, 3, 3);
        b.conv(name + ".conv3", st.mid, st.out, 1, 1);
      } else {
        b.conv(name + ".conv1", in, st.out, 3, 3);
        b.conv(name + ".conv2", st.out, st.out, 3, 3);
      }
      if (stride != 1 || in != st.out) b.conv(name + ".proj", in, st.out, 1, 1);
      in = st.out;
    }
  }
  b.dense("image.fc1", in, spec.fc_hidden);
  b.dense("image.fc2", spec.fc_hidden, kImageFeatures);
}

std::size_t head_transition_width(std::size_t channels, double compression) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(channels * compression)));
}

void build_head(Builder& b, const HeadSpec& spec) {
  b.conv("head.stem", 1, spec.stem_channels, 1, spec.stem_kernel);
  std::size_t c = spec.stem_channels;
  for (std::size_t blk = 0; blk < spec.blocks.size(); ++blk) {
    for (std::size_t l = 0; l < spec.blocks[blk]; ++l) {
      const auto name = "head.block" + std::to_string(blk) + ".layer" + std::to_string(l);
      if (spec.bottleneck) {
        b.conv(name + ".bottleneck", c, 4 * spec.growth, 1, 1);
        b.conv(name + ".conv", 4 * spec.growth, spec.growth, 1, 3);
      } else {
        b.conv(name + ".conv", c, spec.growth, 1, 3);
      }
      c += spec.growth;
    }
    if (blk + 1 < spec.blocks.size()) {
      const auto out = head_transition_width(c, spec.compression);
      b.conv("head.trans" + std::to_string(blk), c, out, 1, 1);
      c = out;
    }
  }
  b.dense("head.fc", c, kClasses);
}

// ---- forward helpers -----------------------------------------------------

Tensor conv(const Tensor& x, const ParamSet& p, const std::string& name, std::size_t stride,
            std::size_t pad) {
  const Tensor& w = p.at(name + ".w");
  const Tensor bias = p.contains(name + ".b") ? p.at(name + ".b") : Tensor{};
  return num::conv2d(x, w, bias, {stride, stride, pad, pad});
}

Tensor conv1d(const Tensor& x, const ParamSet& p, const std::string& name, std::size_t stride) {
  const Tensor& w = p.at(name + ".w");
  const std::size_t k = w.dim(3);
  return num::conv2d(x, w, p.at(name + ".b"), {1, stride, 0, k / 2});
}

Tensor dense(const Tensor& x, const ParamSet& p, const std::string& name) {
  const Tensor bias = p.contains(name + ".b") ? p.at(name + ".b") : Tensor{};
  return num::linear(x, p.at(name + ".w"), bias);
}

// Row-wise dense layer for token matrices [L x n] -> [L x m].
Tensor dense_rows(const Tensor& x, const ParamSet& p, const std::string& name) {
  std::vector<Tensor> rows;
  for (std::size_t r = 0; r < x.dim(0); ++r) {
    auto row = num::reshape(num::slice(x, 0, r, 1), {x.dim(1)});
    auto y = dense(row, p, name);
    rows.push_back(num::reshape(y, {1, y.numel()}));
  }
  return rows.size() == 1 ? rows.front() : num::concat(rows, 0);
}

Tensor dropout_site(const Tensor& x, double rate, const RunOptions& run, const std::string& site) {
  if (run.mode == num::Mode::eval || rate == 0.0) return x;
  num::RngStream rng(run.dropout_seed, run.dropout_stream + "/" + site);
  return num::dropout(x, rate, run.mode, rng);
}

}  // namespace

FusionModel init_model(const ModelConfig& config, std::uint64_t seed) {
  if (config.heads == 0 || kModelWidth % config.heads != 0) {
    throw std::invalid_argument("attention heads must divide the fused width 192");
  }
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) {
    throw std::invalid_argument("dropout rate must lie in [0, 1)");
  }
  FusionModel model{config, {}};
  Builder b(model.params, config.dtype, seed);
  build_backbone(b, backbone_spec(config.backbone));

  b.dense("gcs.fc1", 1, 32);
  b.dense("gcs.fc2", 32, 128);
  b.dense("gcs.fc3", 128, 256);
  b.dense("gcs.out", 256, kGcsFeatures);

  if (config.fusion == FusionLayout::two_token) {
    b.dense("fusion.image_proj", kImageFeatures, kModelWidth);
    b.dense("fusion.gcs_proj", kGcsFeatures, kModelWidth);
  }
  if (config.encoder_block) {
    b.constant("attn.ln1.gamma", {kModelWidth}, 1.0);
    b.constant("attn.ln1.beta", {kModelWidth}, 0.0);
  }
  b.weight("attn.w_q", {kModelWidth, kModelWidth}, kModelWidth);
  b.weight("attn.w_k", {kModelWidth, kModelWidth}, kModelWidth);
  b.weight("attn.w_v", {kModelWidth, kModelWidth}, kModelWidth);
  b.weight("attn.w_o", {kModelWidth, kModelWidth}, kModelWidth);
  if (config.encoder_block) {
    b.constant("attn.ln2.gamma", {kModelWidth}, 1.0);
    b.constant("attn.ln2.beta", {kModelWidth}, 0.0);
    b.dense("attn.ff1", kModelWidth, config.ff_width);
    b.dense("attn.ff2", config.ff_width, kModelWidth);
  }
  build_head(b, head_spec(config.head));
  return model;
}

Tensor encode_image(const Tensor& image, const FusionModel& model, const RunOptions& run,
                    Tensor* last_conv) {
  const auto& cfg = model.config;
  const auto& p = model.params;
  if (image.rank() != 3 || image.dim(0) != 1 || image.dim(1) != cfg.input_size ||
      image.dim(2) != cfg.input_size) {
    throw std::invalid_argument("encode_image: expected [1 x " + std::to_string(cfg.input_size) +
                                " x " + std::to_string(cfg.input_size) + "], got " +
                                num::shape_string(image.shape()));
  }
  const auto spec = backbone_spec(cfg.backbone);
  Tensor x = num::relu(conv(image, p, "image.stem", spec.stem_stride, spec.stem_kernel / 2));
  if (spec.stem_pool) x = num::avg_pool2d(x, 2, 2, 2, 2);
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    const auto& st = spec.stages[s];
    for (std::size_t k = 0; k < st.blocks; ++k) {
      const auto name = block_name(s, k);
      const std::size_t stride = k == 0 ? st.stride : 1;
      Tensor branch;
      if (spec.bottleneck) {
        branch = num::relu(conv(x, p, name + ".conv1", 1, 0));
        branch = num::relu(conv(branch, p, name + ".conv2", stride, 1));
        branch = conv(branch, p, name + ".conv3", 1, 0);
      } else {
        branch = num::relu(conv(x, p, name + ".conv1", stride, 1));
        branch = conv(branch, p, name + ".conv2", 1, 1);
      }
      const Tensor shortcut = p.contains(name + ".proj.w") ? conv(x, p, name + ".proj", stride, 0) : x;
      x = num::relu(num::add(branch, shortcut));
    }
  }
  if (last_conv) *last_conv = x;
  Tensor f = num::global_avg_pool(x);
  f = num::relu(dense(f, p, "image.fc1"));
  f = dropout_site(f, cfg.dropout, run, "image.fc1");
  return dense(f, p, "image.fc2");
}

double normalize_gcs(int gcs) {
  if (gcs < kGcsMin || gcs > kGcsMax) {
    throw std::invalid_argument("GCS " + std::to_string(gcs) + " outside [3, 15]");
  }
  return static_cast<double>(gcs - kGcsMin) / static_cast<double>(kGcsMax - kGcsMin);
}

Tensor encode_gcs(int gcs, const FusionModel& model, const RunOptions&) {
  const auto& p = model.params;
  Tensor x = Tensor::scalar(normalize_gcs(gcs), model.config.dtype);
  x = num::relu(dense(x, p, "gcs.fc1"));
  x = num::relu(dense(x, p, "gcs.fc2"));
  x = num::relu(dense(x, p, "gcs.fc3"));
  return dense(x, p, "gcs.out");
}

Tensor fuse_global(const Tensor& image_features, const Tensor& gcs_features) {
  if (image_features.shape() != num::Shape{kImageFeatures} ||
      gcs_features.shape() != num::Shape{kGcsFeatures}) {
    throw std::invalid_argument("fuse_global: expected [128] and [64], got " +
                                num::shape_string(image_features.shape()) + " and " +
                                num::shape_string(gcs_features.shape()));
  }
  return num::reshape(num::concat({image_features, gcs_features}, 0), {1, kModelWidth});
}

Tensor multi_head_attention(const Tensor& x, const Tensor& w_q, const Tensor& w_k,
                            const Tensor& w_v, const Tensor& w_o, std::size_t heads) {
  if (x.rank() != 2) throw std::invalid_argument("multi_head_attention: tokens must be [L x D]");
  const std::size_t width = x.dim(1);
  if (heads == 0 || width % heads != 0) {
    throw std::invalid_argument("multi_head_attention: heads must divide width");
  }
  const std::size_t dk = width / heads;
  const Tensor q = num::matmul(x, w_q);
  const Tensor k = num::matmul(x, w_k);
  const Tensor v = num::matmul(x, w_v);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t j = 0; j < heads; ++j) {
    const Tensor qj = num::slice(q, 1, j * dk, dk);
    const Tensor kj = num::slice(k, 1, j * dk, dk);
    const Tensor vj = num::slice(v, 1, j * dk, dk);
    const Tensor scores = num::scale(num::matmul(qj, num::transpose(kj)), inv_sqrt_dk);
    outs.push_back(num::matmul(num::softmax(scores, 1), vj));
  }
  return num::matmul(num::concat(outs, 1), w_o);
}

Tensor attention_fuse(const Tensor& tokens, const FusionModel& model) {
  if (tokens.rank() != 2 || tokens.dim(1) != kModelWidth) {
    throw std::invalid_argument("attention_fuse: expected [L x 192], got " +
                                num::shape_string(tokens.shape()));
  }
  const auto& p = model.params;
  auto mha = [&](const Tensor& x) {
    return multi_head_attention(x, p.at("attn.w_q"), p.at("attn.w_k"), p.at("attn.w_v"),
                                p.at("attn.w_o"), model.config.heads);
  };
  if (!model.config.encoder_block) return mha(tokens);
  const Tensor h = num::add(
      tokens, mha(num::layer_norm(tokens, p.at("attn.ln1.gamma"), p.at("attn.ln1.beta"))));
  Tensor ff = num::layer_norm(h, p.at("attn.ln2.gamma"), p.at("attn.ln2.beta"));
  ff = dense_rows(num::relu(dense_rows(ff, p, "attn.ff1")), p, "attn.ff2");
  return num::add(h, ff);
}

Tensor classify_head(const Tensor& fused, const FusionModel& model, const RunOptions&) {
  if (fused.shape() != num::Shape{1, kModelWidth}) {
    throw std::invalid_argument("classify_head: expected [1 x 192], got " +
                                num::shape_string(fused.shape()));
  }
  const auto& p = model.params;
  const auto spec = head_spec(model.config.head);
  // The fused vector is a one-channel signal of length 192.
  Tensor x = num::reshape(fused, {1, 1, kModelWidth});
  x = conv1d(x, p, "head.stem", spec.stem_stride);
  if (spec.stem_pool) x = num::avg_pool2d(num::relu(x), 1, 2, 1, 2);
  for (std::size_t blk = 0; blk < spec.blocks.size(); ++blk) {
    for (std::size_t l = 0; l < spec.blocks[blk]; ++l) {
      const auto name = "head.block" + std::to_string(blk) + ".layer" + std::to_string(l);
      Tensor y = num::relu(x);
      if (spec.bottleneck) y = num::relu(conv1d(y, p, name + ".bottleneck", 1));
      y = conv1d(y, p, name + ".conv", 1);
      x = num::concat({x, y}, 0);
    }
    if (blk + 1 < spec.blocks.size()) {
      x = conv1d(num::relu(x), p, "head.trans" + std::to_string(blk), 1);
      x = num::avg_pool2d(x, 1, 2, 1, 2);
    }
  }
  return dense(num::global_avg_pool(num::relu(x)), p, "head.fc");
}

ForwardTrace forward_trace(const Tensor& image, int gcs, const FusionModel& model,
                           const RunOptions& run) {
  ForwardTrace t;
  const auto dtype = model.config.dtype;
  if (run.input == InputMode::gcs_only) {
    normalize_gcs(gcs);
    t.image_features = Tensor::zeros({kImageFeatures}, dtype);
  } else {
    t.image_features = encode_image(image, model, run, &t.last_conv);
  }
  if (run.input == InputMode::image_only) {
    t.gcs_features = Tensor::zeros({kGcsFeatures}, dtype);
  } else {
    t.gcs_features = encode_gcs(gcs, model, run);
  }
  const auto& p = model.params;
  if (model.config.fusion == FusionLayout::single_token) {
    t.tokens = fuse_global(t.image_features, t.gcs_features);
    t.mixed = attention_fuse(t.tokens, model);
  } else {
    const auto img = num::reshape(dense(t.image_features, p, "fusion.image_proj"), {1, kModelWidth});
    const auto g = num::reshape(dense(t.gcs_features, p, "fusion.gcs_proj"), {1, kModelWidth});
    t.tokens = num::concat({img, g}, 0);
    t.mixed = num::reshape(num::mean(attention_fuse(t.tokens, model), 0), {1, kModelWidth});
  }
  t.logits = classify_head(t.mixed, model, run);
  t.probabilities = num::softmax(t.logits, 0);
  return t;
}

Tensor forward(const Tensor& image, int gcs, const FusionModel& model, const RunOptions& run) {
  return forward_trace(image, gcs, model, run).probabilities;
}

}  // namespace gcsich::net
