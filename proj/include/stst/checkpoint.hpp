// SPDX-License-Identifier: Apache-2.0
#pragma once

// Binary tensor container:
//   "STST" | u32 version | u32 count |
//   count x { u32 name_len | name bytes (UTF-8) | u32 rank | rank x u32 dim | f64 data... }
// All integers and doubles little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stst/nn/tensor.hpp"

namespace stst {

inline constexpr char kCheckpointMagic[4] = {'S', 'T', 'S', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  nn::Tensor tensor;
};

std::vector<std::uint8_t> encode_tensors(const std::vector<NamedTensor>& tensors);
/// Throws FormatError on bad magic, unsupported version or truncation.
std::vector<NamedTensor> decode_tensors(const std::vector<std::uint8_t>& bytes);

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path);

}  // namespace stst
