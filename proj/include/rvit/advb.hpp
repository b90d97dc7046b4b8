#pragma once

// .advb: u64 LE header length, JSON header, count*H*W*C float64 LE pixels,
// count int32 LE labels.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "rvit/tensor.hpp"

namespace rvit::io {

struct AdvBatch {
  std::vector<Tensor> images;  // H x W x C each
  std::vector<int> labels;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;
  nlohmann::json extra = nlohmann::json::object();  // e.g. source image indices
};

std::vector<std::uint8_t> encode_advb(const AdvBatch& batch);
/// FormatError on a malformed header, CorruptionError on size mismatches.
AdvBatch decode_advb(const std::vector<std::uint8_t>& bytes);

void save_advb(const AdvBatch& batch, const std::string& path);
AdvBatch load_advb(const std::string& path);

}  // namespace rvit::io
