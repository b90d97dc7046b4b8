#include "rvit/convnet.hpp"

#include <cmath>

#include "rvit/error.hpp"
#include "rvit/rng.hpp"

namespace rvit::cnn {

void ConvConfig::validate() const {
  if (image_size <= 0 || channels <= 0 || num_classes <= 0) throw ConfigError("cnn config fields must be positive");
  if (widths.empty() || widths.size() != strides.size()) throw ConfigError("cnn widths/strides mismatch");
  for (std::size_t i = 0; i < widths.size(); ++i)
    if (widths[i] <= 0 || strides[i] <= 0) throw ConfigError("cnn widths and strides must be positive");
}

nlohmann::json ConvConfig::to_json() const {
  return {{"kind", "cnn"},         {"image_size", image_size}, {"channels", channels},
          {"widths", widths},      {"strides", strides},       {"num_classes", num_classes}};
}

ConvConfig ConvConfig::from_json(const nlohmann::json& j) {
  ConvConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") {
      if (value != "cnn") throw ConfigError("expected a cnn config, got kind " + value.dump());
    } else if (key == "image_size") c.image_size = value.get<int>();
    else if (key == "channels") c.channels = value.get<int>();
    else if (key == "widths") c.widths = value.get<std::vector<int>>();
    else if (key == "strides") c.strides = value.get<std::vector<int>>();
    else if (key == "num_classes") c.num_classes = value.get<int>();
    else throw ConfigError("unknown cnn config key '" + key + "'");
  }
  c.validate();
  return c;
}

std::vector<std::int64_t> im2col_index(int in_size, int in_ch, int stride, int* out_size) {
  const int out = (in_size - 1) / stride + 1;
  *out_size = out;
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(out * out * 9 * in_ch));
  for (int oy = 0; oy < out; ++oy)
    for (int ox = 0; ox < out; ++ox)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
          for (int c = 0; c < in_ch; ++c) {
            const int iy = oy * stride + ky - 1, ix = ox * stride + kx - 1;
            if (iy < 0 || ix < 0 || iy >= in_size || ix >= in_size)
              idx.push_back(-1);
            else
              idx.push_back((static_cast<std::int64_t>(iy) * in_size + ix) * in_ch + c);
          }
  return idx;
}

ConvNet::ConvNet(ConvConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Stream rng(derive(seed, {static_cast<std::uint64_t>(Domain::weight_init)}));
  int size = cfg_.image_size, ch = cfg_.channels;
  for (std::size_t i = 0; i < cfg_.widths.size(); ++i) {
    Layer l{size, 0, ch, cfg_.widths[i], cfg_.strides[i], nullptr};
    l.im2col = std::make_shared<const std::vector<std::int64_t>>(im2col_index(size, ch, l.stride, &l.out_size));
    const auto fan_in = static_cast<std::size_t>(9 * ch);
    Tensor w({fan_in, static_cast<std::size_t>(l.out_ch)});
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : w.storage()) v = sd * rng.normal();
    weights_.push_back(std::move(w));
    weights_.emplace_back(Shape{static_cast<std::size_t>(l.out_ch)});
    size = l.out_size;
    ch = l.out_ch;
    layers_.push_back(l);
  }
  Tensor hw({static_cast<std::size_t>(ch), static_cast<std::size_t>(cfg_.num_classes)});
  for (double& v : hw.storage()) v = rng.normal() / std::sqrt(static_cast<double>(ch));
  weights_.push_back(std::move(hw));
  weights_.emplace_back(Shape{static_cast<std::size_t>(cfg_.num_classes)});
}

Shape ConvNet::input_shape() const {
  const auto s = static_cast<std::size_t>(cfg_.image_size);
  return {s, s, static_cast<std::size_t>(cfg_.channels)};
}

std::vector<NamedTensor> ConvNet::parameters() {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    out.push_back({"conv" + std::to_string(i) + ".w", &weights_[2 * i]});
    out.push_back({"conv" + std::to_string(i) + ".b", &weights_[2 * i + 1]});
  }
  out.push_back({"head.w", &weights_[2 * layers_.size()]});
  out.push_back({"head.b", &weights_[2 * layers_.size() + 1]});
  return out;
}

ad::Var ConvNet::forward(ad::Tape& tape, std::span<const ad::Var> params, const ad::Var& image) const {
  if (params.size() != weights_.size()) throw DimensionError("cnn: wrong number of bound parameters");
  if (image.shape() != input_shape())
    throw DimensionError("cnn: image shape " + shape_str(image.shape()) + " expected " + shape_str(input_shape()));
  ad::Var x = image;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    const auto pixels = static_cast<std::size_t>(l.out_size * l.out_size);
    ad::Var cols = ad::gather(x, l.im2col, {pixels, static_cast<std::size_t>(9 * l.in_ch)});
    x = ad::relu(ad::add_row(ad::matmul(cols, params[2 * i]), params[2 * i + 1]));
  }
  const std::size_t pixels = x.shape()[0];
  ad::Var pool = tape.constant(Tensor::full({1, pixels}, 1.0 / static_cast<double>(pixels)));
  ad::Var feat = ad::matmul(pool, x);
  ad::Var logits = ad::add_row(ad::matmul(feat, params[2 * layers_.size()]), params[2 * layers_.size() + 1]);
  return ad::reshape(logits, {static_cast<std::size_t>(cfg_.num_classes)});
}

}  // namespace rvit::cnn
