#include "gcsich/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace gcsich::net {

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : buf_(b) {}
  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > buf_.size()) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    const auto* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename T>
  T le() {
    const auto* p = take(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
    return v;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParamSet& params) {
  Writer w;
  w.bytes("GICH", 4);
  w.le<std::uint16_t>(kCheckpointVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params.entries()) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.dtype()));
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape()) w.le<std::uint64_t>(e);
    for (double v : t.data()) {
      if (t.dtype() == num::DType::f32) {
        w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        w.le<std::uint64_t>(std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  return std::move(w.out);
}

ParamSet decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(4), "GICH", 4) != 0) throw CheckpointError("bad checkpoint magic");
  const auto version = r.le<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.le<std::uint32_t>();
  ParamSet params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.le<std::uint32_t>();
    const auto* np = r.take(name_len);
    std::string name(reinterpret_cast<const char*>(np), name_len);
    const auto dtype_code = r.le<std::uint8_t>();
    if (dtype_code > 1) throw CheckpointError(name + ": unknown dtype code " + std::to_string(dtype_code));
    const auto dtype = static_cast<num::DType>(dtype_code);
    const auto rank = r.le<std::uint8_t>();
    num::Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(r.le<std::uint64_t>());
    std::vector<double> values(num::shape_numel(shape));
    for (auto& v : values) {
      v = dtype == num::DType::f32
              ? static_cast<double>(std::bit_cast<float>(r.le<std::uint32_t>()))
              : std::bit_cast<double>(r.le<std::uint64_t>());
    }
    try {
      params.add(name, num::Tensor::from(std::move(shape), std::move(values), dtype, true));
    } catch (const std::exception& e) {
      throw CheckpointError(name + ": " + e.what());
    }
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint table");
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void load_into(FusionModel& model, const ParamSet& checkpoint) {
  if (checkpoint.size() != model.params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(checkpoint.size()) +
                          " tensors, model expects " + std::to_string(model.params.size()));
  }
  for (const auto& [name, t] : model.params.entries()) {
    if (!checkpoint.contains(name)) throw CheckpointError("checkpoint lacks " + name);
    const auto& src = checkpoint.at(name);
    if (src.shape() != t.shape() || src.dtype() != t.dtype()) {
      throw CheckpointError(name + ": checkpoint " + num::shape_string(src.shape()) + " " +
                            num::to_string(src.dtype()) + " vs model " + num::shape_string(t.shape()) +
                            " " + num::to_string(t.dtype()));
    }
  }
  for (const auto& [name, t] : model.params.entries()) {
    auto dst = t;
    dst.assign(checkpoint.at(name).data());
  }
}

FusionModel load_model(const std::filesystem::path& path, const ModelConfig& config) {
  auto model = init_model(config, 0);
  load_into(model, load_checkpoint(path));
  return model;
}

}  // namespace gcsich::net
