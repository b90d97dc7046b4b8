#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rvit/tensor.hpp"

namespace rvit::data {

enum class Split : std::uint8_t { train, test };

inline constexpr int kImageSize = 32;
inline constexpr int kChannels = 3;
inline constexpr int kClasses = 10;

/// Images are 32 x 32 x 3 (HWC) in [0, 1].
struct Dataset {
  std::vector<Tensor> images;
  std::vector<int> labels;
  std::vector<Split> splits;
  std::uint64_t seed = 0;

  std::size_t size() const { return images.size(); }
  std::vector<std::size_t> indices(Split split) const;
  Dataset subset(const std::vector<std::size_t>& idx) const;
};

/// Class names in label order.
const std::vector<std::string>& shape_class_names();

/// n procedurally rendered images, n / 10 per class (label = i mod 10).
/// Every fifth example of each class is tagged test. Throws InputError when
/// n is not a positive multiple of 10.
Dataset generate_shapes_dataset(int n, std::uint64_t seed);

/// Renders example i of a dataset with the given seed; used by the generator.
Tensor render_shape(int label, std::uint64_t key);

/// Reads 3,073-byte records (1 label byte + 3,072 channel-planar pixel bytes).
/// Every fifth record is tagged test.
Dataset load_record_file(const std::string& path);

}  // namespace rvit::data
