#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"
#include "rvit/model.hpp"
#include "rvit/policy.hpp"
#include "rvit/redundancy.hpp"
#include "rvit/robust.hpp"
#include "rvit/vit.hpp"

namespace rvit::attack {

enum class Method { mi, ours };

std::string_view method_name(Method m);
Method method_from_name(std::string_view name);

struct AttackConfig {
  double epsilon = 16.0 / 255.0;
  int steps = 10;
  std::optional<double> alpha;  // defaults to epsilon / steps
  double mu = 1.0;
  Method method = Method::mi;
  ops::OpParams ops;
  policy::PolicyConfig policy;
  robust::RobustConfig robust;
  std::uint64_t seed = 0;

  double step_size() const { return alpha ? *alpha : epsilon / steps; }
  void validate() const;
  nlohmann::json to_json() const;
  static AttackConfig from_json(const nlohmann::json& j);
  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

/// Per-pixel clamp to [x - eps, x + eps], then to [0, 1].
Tensor clip_project(const Tensor& x_adv, const Tensor& x, double epsilon);

/// Throws ContractError when x_adv leaves the eps-ball (slack 1e-12) or [0, 1].
void check_constraints(const Tensor& x_adv, const Tensor& x, double epsilon);

struct LossGrad {
  double loss = 0.0;
  Tensor grad;
};

/// Loss and input gradient at the current adversarial image for iteration t.
using GradientFn = std::function<LossGrad(const Tensor& x_adv, int iteration)>;
/// Called after each update with (iteration, loss at x_t).
using StepObserver = std::function<void(int iteration, double loss)>;

struct MiSettings {
  double epsilon;
  int steps;
  double alpha;
  double mu;
};

struct MiTrace {
  Tensor x_adv;
  std::vector<double> losses;  // loss at x_t before step t
  Tensor momentum;             // final accumulator g_T
};

/// Momentum iterative FGSM: g <- mu g + grad / |grad|_1, x <- clip(x + alpha sign(g)).
/// Throws NumericError on a non-finite gradient.
MiTrace mi_fgsm(const Tensor& x, const MiSettings& s, const GradientFn& grad, const StepObserver& observer = {});

LossGrad classifier_input_gradient(const Classifier& model, const Tensor& image, int label);

LossGrad vit_input_gradient(const vit::ViTConfig& cfg, const vit::ViTParams& params, const Tensor& image, int label,
                            const ops::BlockModSchedule& mods, const Tensor* robust_tokens,
                            const ops::CleanContext* clean);

using ModsProvider = std::function<ops::BlockModSchedule(int iteration)>;

/// Plain MI-FGSM against any classifier. A mods provider requires a ViT.
Tensor mi_fgsm_attack(const Tensor& x, int y, const Classifier& model, const AttackConfig& cfg,
                      const ModsProvider& mods = {});

struct RedundantResult {
  Tensor x_adv;
  policy::OpPolicy policy;
  std::vector<double> losses;
  robust::RobustTokens tokens;
};

/// Robustify (or use the supplied global tokens), capture the clean context, then
/// per iteration: sample a schedule, take an MI-FGSM step, and reinforce with the loss.
RedundantResult run_redundant_attack(const Tensor& x, int y, const vit::VisionTransformer& surrogate,
                                     const AttackConfig& cfg, std::uint64_t image_index,
                                     const robust::RobustTokens* global_tokens = nullptr);

/// Attacks every image (in parallel when enabled) with per-image derived streams.
struct BatchResult {
  std::vector<Tensor> x_adv;
  std::vector<std::vector<double>> losses;
  std::optional<policy::OpPolicy> last_policy;
};
BatchResult attack_batch(std::span<const Tensor> images, std::span<const int> labels, const Classifier& surrogate,
                         const AttackConfig& cfg, std::span<const std::uint64_t> image_ids = {},
                         const robust::RobustTokens* global_tokens = nullptr);

}  // namespace rvit::attack
