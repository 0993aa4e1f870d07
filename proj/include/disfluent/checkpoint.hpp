#pragma once

#include "disfluent/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace disfluent {

template <typename Scalar>
struct BasicNamedTensor {
  std::string name;
  Tensor<Scalar> tensor;
};

using NamedTensor = BasicNamedTensor<float>;

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kCheckpointHasRunningStats = 1u << 0;
inline constexpr std::uint32_t kCheckpointHasOptimizerState = 1u << 1;

/// Binary checkpoint, little-endian:
///   "DSCK" | version u32 | entry_count u32 | flags u32
///   per entry: name_len u16 | UTF-8 name | rank u8 | dims u32 x rank | float32 payload
struct Checkpoint {
  std::uint32_t flags = 0;
  std::vector<NamedTensor> entries;

  const Tensor<float>* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace disfluent
