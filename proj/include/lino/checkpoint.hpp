#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lino/model.hpp"

namespace lino::training {

/// Binary archive of a trained model.
///
/// Layout (all integers little-endian):
///   "LINOCKPT"                  8-byte magic
///   u32 version                 currently 1
///   u64 n, n bytes              model config as `key=value` lines
///   u32 count                   number of tensors
///   count x { u32 name_len, name bytes, u8 dtype (1 = float64),
///             u32 rank, rank x u64 extents, row-major float64 payload }
///   u64 checksum                FNV-1a 64 over every preceding byte
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  LiNoConfig config;
  LiNoParams params;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws IntegrityError on bad magic, version, checksum, truncation or
/// duplicate tensors; DimensionError when the tensors do not match the
/// embedded config.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
/// Loads and validates the tensors against `expected` (named DimensionError on mismatch).
LiNoParams load_params(const std::string& path, const LiNoConfig& expected);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n);

}  // namespace lino::training
