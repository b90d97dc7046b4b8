#pragma once

#include <cstdint>
#include <vector>

#include "rvit/model.hpp"

namespace rvit::cnn {

/// Three 3x3 convolutions (padding 1) with ReLU, global average pooling and a
/// linear head. Stands in for the convolutional victims.
struct ConvConfig {
  int image_size = 32;
  int channels = 3;
  std::vector<int> widths = {8, 16, 32};
  std::vector<int> strides = {1, 2, 2};
  int num_classes = 10;

  void validate() const;
  nlohmann::json to_json() const;
  static ConvConfig from_json(const nlohmann::json& j);
};

class ConvNet final : public Classifier {
 public:
  ConvNet(ConvConfig cfg, std::uint64_t seed);

  const ConvConfig& config() const { return cfg_; }

  std::string kind() const override { return "cnn"; }
  int num_classes() const override { return cfg_.num_classes; }
  Shape input_shape() const override;
  nlohmann::json config_json() const override { return cfg_.to_json(); }
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<ConvNet>(*this); }
  std::vector<NamedTensor> parameters() override;
  ad::Var forward(ad::Tape& tape, std::span<const ad::Var> params, const ad::Var& image) const override;

 private:
  struct Layer {
    int in_size, out_size, in_ch, out_ch, stride;
    std::shared_ptr<const std::vector<std::int64_t>> im2col;
  };

  ConvConfig cfg_;
  std::vector<Layer> layers_;
  std::vector<Tensor> weights_;  // w0, b0, w1, b1, ..., head_w, head_b
};

/// im2col index for a 3x3, padding-1 convolution over an HWC image; -1 marks padding.
std::vector<std::int64_t> im2col_index(int in_size, int in_ch, int stride, int* out_size);

}  // namespace rvit::cnn
