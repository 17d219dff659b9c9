#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssrl/optimizer.hpp"

namespace ssrl {

enum class Precision { kF32, kF64 };

std::string to_string(Precision p);
/// Accepts "f32" or "f64".
Precision parse_precision(const std::string& name);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;  ///< exact copies of the stored scalars

  friend bool operator==(const CheckpointTensor&, const CheckpointTensor&) = default;
};

/// Model weights plus Adam moments at a given step. The Adam update count
/// equals `step`.
struct Checkpoint {
  std::uint32_t step = 0;
  Precision precision = Precision::kF32;
  std::vector<CheckpointTensor> params;
  std::vector<CheckpointTensor> moments;  ///< "m:<name>" entries, then "v:<name>"

  std::size_t param_scalars() const;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Layout: "SSCK", version byte (0x01 float32 payloads, 0x02 float64), u32
/// step, u32 tensor count, then per tensor u16 name length, name bytes, four
/// u32 extents and the payload; the moment buffers follow in the same layout.
/// All integers and floats little-endian.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename T>
Checkpoint make_checkpoint(std::uint32_t step, const ModelParams<T>& params,
                           const AdamState<T>& state);

/// Copies weights and moments into existing buffers after checking every
/// name and extent; throws CheckpointError on any mismatch.
template <typename T>
void restore_checkpoint(const Checkpoint& ckpt, ModelParams<T>& params, AdamState<T>& state);

}  // namespace ssrl
