#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lscm/tensor.hpp"

namespace lscm {

inline constexpr char kCheckpointMagic[4] = {'L', 'S', 'C', 'M'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

/// Binary layout, all integers little-endian:
///   "LSCM" | version u8
///   per tensor: name_len u32 | name bytes | ndim u32 | dims u32... | payload f64...
///   iteration u64 (the final 8 bytes)
struct Checkpoint {
  std::uint8_t version = kCheckpointVersion;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::uint64_t iteration = 0;

  const Tensor* find(const std::string& name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws CorruptCheckpointError with the failing byte offset.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lscm
