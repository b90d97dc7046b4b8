#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "rvit/tensor.hpp"
#include "rvit/vit.hpp"

namespace rvit::robust {

enum class Mode { dynamic, global };

std::string_view mode_name(Mode m);
Mode mode_from_name(std::string_view name);

struct RobustConfig {
  int count = 16;  // N_r; 0 disables
  Mode mode = Mode::dynamic;
  int inner_steps = 5;
  int outer_steps = 10;  // J, dynamic mode
  int epochs = 3;        // global mode
  int batch = 16;        // global mode
  double lr = 0.05;
  double init_std = 0.02;

  void validate() const;
  nlohmann::json to_json() const;
  static RobustConfig from_json(const nlohmann::json& j);
  friend bool operator==(const RobustConfig&, const RobustConfig&) = default;
};

/// Inner min-max attack settings shared with the outer attack.
struct InnerAttack {
  double epsilon = 16.0 / 255.0;
  double mu = 1.0;
};

struct RobustTokens {
  Tensor z;  // N_r x D; empty when N_r = 0
  int count = 0;
  Mode mode = Mode::dynamic;
  int steps = 0;
  double lr = 0.0;
  std::uint64_t seed = 0;

  bool enabled() const { return count > 0; }
  nlohmann::json meta_json() const;
};

/// z_r ~ N(0, init_std^2) from the robust_init stream of seed.
Tensor init_tokens(int count, int dim, double init_std, std::uint64_t seed);

/// Loss and dL/dz_r for a frozen model with robust tokens appended.
struct TokenGrad {
  double loss = 0.0;
  Tensor grad;
};
TokenGrad token_gradient(const vit::ViTConfig& cfg, const vit::ViTParams& params, const Tensor& image, int label,
                         const Tensor& tokens);

/// Adversarial example for the model with fixed tokens (MI-FGSM, inner_steps, alpha = eps / steps).
Tensor inner_attack(const vit::ViTConfig& cfg, const vit::ViTParams& params, const Tensor& image, int label,
                    const Tensor& tokens, int steps, const InnerAttack& inner);

RobustTokens robustify_dynamic(const Tensor& image, int label, const vit::VisionTransformer& model,
                               const RobustConfig& cfg, const InnerAttack& inner, std::uint64_t seed);

/// Throws InputError on an empty calibration set.
RobustTokens robustify_global(std::span<const Tensor> images, std::span<const int> labels,
                              const vit::VisionTransformer& model, const RobustConfig& cfg, const InnerAttack& inner,
                              std::uint64_t seed);

}  // namespace rvit::robust
