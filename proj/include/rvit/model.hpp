#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rvit/autodiff.hpp"

namespace rvit {

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

/// A trainable image classifier over H x W x C images in [0, 1].
/// Parameters are immutable during attacks; a forward pass owns its tape.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string kind() const = 0;
  virtual int num_classes() const = 0;
  virtual Shape input_shape() const = 0;
  virtual nlohmann::json config_json() const = 0;
  virtual std::unique_ptr<Classifier> clone() const = 0;

  /// Parameter tensors in a fixed order.
  virtual std::vector<NamedTensor> parameters() = 0;

  /// Logits from parameters bound on the tape in parameters() order.
  virtual ad::Var forward(ad::Tape& tape, std::span<const ad::Var> params, const ad::Var& image) const = 0;

  std::vector<ad::Var> bind(ad::Tape& tape, bool trainable) const;
  Tensor logits(const Tensor& image) const;
  int predict(const Tensor& image) const;
};

/// argmax with ties broken toward the lowest index.
int argmax(std::span<const double> values);

/// Builds a classifier from a checkpoint-style config and zero parameters.
std::unique_ptr<Classifier> make_classifier(const nlohmann::json& config);

}  // namespace rvit
