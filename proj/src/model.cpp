#include "rvit/model.hpp"

#include "rvit/convnet.hpp"
#include "rvit/error.hpp"
#include "rvit/vit.hpp"

namespace rvit {

std::vector<ad::Var> Classifier::bind(ad::Tape& tape, bool trainable) const {
  // parameters() hands out mutable pointers; binding only reads them.
  auto named = const_cast<Classifier*>(this)->parameters();
  std::vector<ad::Var> out;
  out.reserve(named.size());
  for (const auto& p : named) out.push_back(trainable ? tape.leaf(*p.tensor) : tape.constant(*p.tensor));
  return out;
}

Tensor Classifier::logits(const Tensor& image) const {
  ad::Tape tape;
  auto params = bind(tape, false);
  return forward(tape, params, tape.constant(image)).value();
}

int Classifier::predict(const Tensor& image) const {
  Tensor z = logits(image);
  return argmax(z.data());
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

std::unique_ptr<Classifier> make_classifier(const nlohmann::json& config) {
  const std::string kind = config.at("kind").get<std::string>();
  if (kind == "vit") {
    auto cfg = vit::ViTConfig::from_json(config);
    return std::make_unique<vit::VisionTransformer>(cfg, vit::zero_params(cfg));
  }
  if (kind == "cnn") return std::make_unique<cnn::ConvNet>(cnn::ConvConfig::from_json(config), 0);
  throw ConfigError("unknown model kind '" + kind + "'");
}

}  // namespace rvit
