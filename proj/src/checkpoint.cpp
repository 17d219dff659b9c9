#include "ssrl/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <fstream>
#include <iterator>
#include <type_traits>

namespace ssrl {

std::string to_string(Precision p) { return p == Precision::kF64 ? "f64" : "f32"; }

Precision parse_precision(const std::string& name) {
  if (name == "f32") return Precision::kF32;
  if (name == "f64") return Precision::kF64;
  throw std::invalid_argument("precision must be f32 or f64, got '" + name + "'");
}

std::size_t Checkpoint::param_scalars() const {
  std::size_t n = 0;
  for (const auto& t : params) n += t.values.size();
  return n;
}

namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'S', 'S', 'C', 'K'};
constexpr std::uint8_t kVersionF32 = 0x01;
constexpr std::uint8_t kVersionF64 = 0x02;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void le(U v) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  template <typename U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b_[at_ + i]) << (8 * i));
    at_ += sizeof(U);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + at_), n);
    at_ += n;
    return s;
  }
  bool done() const { return at_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (at_ + n > b_.size()) throw CheckpointError("checkpoint truncated at byte " + std::to_string(at_));
  }
  std::span<const std::uint8_t> b_;
  std::size_t at_ = 0;
};

void write_tensors(Writer& w, const std::vector<CheckpointTensor>& tensors, Precision p) {
  w.le(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xffff) throw CheckpointError("tensor name too long: " + t.name);
    if (t.values.size() != t.shape.numel()) {
      throw CheckpointError("tensor " + t.name + " has " + std::to_string(t.values.size()) +
                            " values for shape " + to_string(t.shape));
    }
    w.le(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    for (std::size_t e : {t.shape.n, t.shape.c, t.shape.h, t.shape.w}) w.le(static_cast<std::uint32_t>(e));
    for (double v : t.values) {
      if (p == Precision::kF64) {
        w.le(std::bit_cast<std::uint64_t>(v));
      } else {
        w.le(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      }
    }
  }
}

std::vector<CheckpointTensor> read_tensors(Reader& r, Precision p) {
  const std::uint32_t count = r.le<std::uint32_t>();
  std::vector<CheckpointTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = r.str(r.le<std::uint16_t>());
    t.shape.n = r.le<std::uint32_t>();
    t.shape.c = r.le<std::uint32_t>();
    t.shape.h = r.le<std::uint32_t>();
    t.shape.w = r.le<std::uint32_t>();
    const std::size_t n = t.shape.numel();
    t.values.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      t.values.push_back(p == Precision::kF64
                             ? std::bit_cast<double>(r.le<std::uint64_t>())
                             : static_cast<double>(std::bit_cast<float>(r.le<std::uint32_t>())));
    }
    out.push_back(std::move(t));
  }
  return out;
}

template <typename T>
constexpr Precision precision_of() {
  return std::is_same_v<T, double> ? Precision::kF64 : Precision::kF32;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.le(ckpt.precision == Precision::kF64 ? kVersionF64 : kVersionF32);
  w.le(ckpt.step);
  write_tensors(w, ckpt.params, ckpt.precision);
  write_tensors(w, ckpt.moments, ckpt.precision);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 5 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw CheckpointError("checkpoint has bad magic (expected SSCK)");
  }
  Checkpoint ckpt;
  if (bytes[4] == kVersionF32) {
    ckpt.precision = Precision::kF32;
  } else if (bytes[4] == kVersionF64) {
    ckpt.precision = Precision::kF64;
  } else {
    throw CheckpointError("checkpoint has unsupported version " + std::to_string(bytes[4]));
  }
  Reader r(bytes.subspan(5));
  ckpt.step = r.le<std::uint32_t>();
  ckpt.params = read_tensors(r, ckpt.precision);
  ckpt.moments = read_tensors(r, ckpt.precision);
  if (!r.done()) throw CheckpointError("checkpoint size mismatch: trailing bytes after moments");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template <typename T>
Checkpoint make_checkpoint(std::uint32_t step, const ModelParams<T>& params,
                           const AdamState<T>& state) {
  Checkpoint ckpt;
  ckpt.step = step;
  ckpt.precision = precision_of<T>();
  for (const auto& p : params.tensors) {
    ckpt.params.push_back({p.name, p.value->shape(),
                           std::vector<double>(p.value->data().begin(), p.value->data().end())});
  }
  for (const char* prefix : {"m:", "v:"}) {
    const auto& buffers = prefix[0] == 'm' ? state.m : state.v;
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
      const auto& p = params.tensors[i];
      ckpt.moments.push_back({prefix + p.name, p.value->shape(),
                              std::vector<double>(buffers.at(i).begin(), buffers.at(i).end())});
    }
  }
  return ckpt;
}

template <typename T>
void restore_checkpoint(const Checkpoint& ckpt, ModelParams<T>& params, AdamState<T>& state) {
  if (ckpt.params.size() != params.tensors.size() ||
      ckpt.param_scalars() != params.scalar_count()) {
    throw CheckpointError("checkpoint holds " + std::to_string(ckpt.param_scalars()) +
                          " parameters in " + std::to_string(ckpt.params.size()) +
                          " tensors, model expects " + std::to_string(params.scalar_count()) +
                          " in " + std::to_string(params.tensors.size()));
  }
  if (ckpt.moments.size() != 2 * params.tensors.size()) {
    throw CheckpointError("checkpoint moment buffers do not match the parameter count");
  }
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const auto& p = params.tensors[i];
    const auto& t = ckpt.params[i];
    if (t.name != p.name || t.shape != p.value->shape()) {
      throw CheckpointError("checkpoint tensor " + t.name + " " + to_string(t.shape) +
                            " does not match model tensor " + p.name + " " +
                            to_string(p.value->shape()));
    }
    const auto& m = ckpt.moments[i];
    const auto& v = ckpt.moments[params.tensors.size() + i];
    if (m.name != "m:" + p.name || v.name != "v:" + p.name || m.shape != t.shape ||
        v.shape != t.shape) {
      throw CheckpointError("checkpoint moments for " + p.name + " are missing or misshapen");
    }
  }
  state = AdamState<T>::zeros_like(params);
  state.t = ckpt.step;
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto dst = params.tensors[i].value->data();
    std::transform(ckpt.params[i].values.begin(), ckpt.params[i].values.end(), dst.begin(),
                   [](double v) { return static_cast<T>(v); });
    std::transform(ckpt.moments[i].values.begin(), ckpt.moments[i].values.end(), state.m[i].begin(),
                   [](double v) { return static_cast<T>(v); });
    const auto& v = ckpt.moments[params.tensors.size() + i].values;
    std::transform(v.begin(), v.end(), state.v[i].begin(), [](double x) { return static_cast<T>(x); });
  }
}

template Checkpoint make_checkpoint(std::uint32_t, const ModelParams<float>&, const AdamState<float>&);
template Checkpoint make_checkpoint(std::uint32_t, const ModelParams<double>&, const AdamState<double>&);
template void restore_checkpoint(const Checkpoint&, ModelParams<float>&, AdamState<float>&);
template void restore_checkpoint(const Checkpoint&, ModelParams<double>&, AdamState<double>&);

}  // namespace ssrl
