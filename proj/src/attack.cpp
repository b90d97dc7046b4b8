#include "rvit/attack.hpp"

#include <cmath>

#include "rvit/error.hpp"
#include "rvit/kernels.hpp"
#include "rvit/rng.hpp"

namespace rvit::attack {

using ad::Var;

std::string_view method_name(Method m) { return m == Method::mi ? "mi" : "ours"; }

Method method_from_name(std::string_view name) {
  if (name == "mi") return Method::mi;
  if (name == "ours") return Method::ours;
  throw ConfigError("unknown attack method '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (!(step_size() > 0.0) && epsilon > 0.0) throw ConfigError("alpha must be > 0");
  if (alpha && !(*alpha > 0.0)) throw ConfigError("alpha must be > 0");
  if (!(mu >= 0.0)) throw ConfigError("mu must be >= 0");
  ops.validate();
  policy.validate();
  robust.validate();
}

nlohmann::json AttackConfig::to_json() const {
  nlohmann::json j{{"epsilon", epsilon},
                   {"steps", steps},
                   {"mu", mu},
                   {"method", method_name(method)},
                   {"ops", ops.to_json()},
                   {"policy", policy.to_json()},
                   {"robust", robust.to_json()},
                   {"seed", seed}};
  if (alpha) j["alpha"] = *alpha;
  return j;
}

AttackConfig AttackConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("attack config must be an object");
  AttackConfig c;
  for (auto& [k, v] : j.items()) {
    if (k == "epsilon") c.epsilon = v.get<double>();
    else if (k == "steps") c.steps = v.get<int>();
    else if (k == "alpha") c.alpha = v.get<double>();
    else if (k == "mu") c.mu = v.get<double>();
    else if (k == "method") c.method = method_from_name(v.get<std::string>());
    else if (k == "ops") c.ops = ops::OpParams::from_json(v);
    else if (k == "policy") c.policy = policy::PolicyConfig::from_json(v);
    else if (k == "robust") c.robust = robust::RobustConfig::from_json(v);
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else throw ConfigError("unknown key 'attack." + k + "'");
  }
  c.validate();
  return c;
}

Tensor clip_project(const Tensor& x_adv, const Tensor& x, double epsilon) {
  if (x_adv.shape() != x.shape())
    throw DimensionError("clip_project: " + shape_str(x_adv.shape()) + " vs " + shape_str(x.shape()));
  Tensor out = x_adv;
  auto o = out.data();
  auto c = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    double v = std::clamp(o[i], c[i] - epsilon, c[i] + epsilon);
    o[i] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

void check_constraints(const Tensor& x_adv, const Tensor& x, double epsilon) {
  auto a = x_adv.data();
  auto c = x.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(std::abs(a[i] - c[i]) <= epsilon + 1e-12) || !(a[i] >= 0.0 && a[i] <= 1.0))
      throw ContractError("adversarial image left the feasible set at pixel " + std::to_string(i));
  }
}

MiTrace mi_fgsm(const Tensor& x, const MiSettings& s, const GradientFn& grad, const StepObserver& observer) {
  MiTrace tr;
  tr.x_adv = x;
  Tensor g = Tensor::zeros(x.shape());
  for (int t = 0; t < s.steps; ++t) {
    LossGrad lg = grad(tr.x_adv, t);
    if (lg.grad.shape() != x.shape()) throw DimensionError("mi_fgsm: gradient shape mismatch");
    if (!lg.grad.all_finite() || !std::isfinite(lg.loss))
      throw NumericError("mi_fgsm: non-finite gradient at iteration " + std::to_string(t));
    double l1 = 0.0;
    for (double v : lg.grad.data()) l1 += std::abs(v);
    auto gd = g.data();
    auto dd = lg.grad.data();
    auto xd = tr.x_adv.data();
    for (std::size_t i = 0; i < gd.size(); ++i) {
      gd[i] = s.mu * gd[i] + (l1 > 0.0 ? dd[i] / l1 : 0.0);
      const double sign = gd[i] > 0.0 ? 1.0 : (gd[i] < 0.0 ? -1.0 : 0.0);
      xd[i] += s.alpha * sign;
    }
    tr.x_adv = clip_project(tr.x_adv, x, s.epsilon);
    check_constraints(tr.x_adv, x, s.epsilon);
    tr.losses.push_back(lg.loss);
    if (observer) observer(t, lg.loss);
  }
  tr.momentum = std::move(g);
  return tr;
}

LossGrad classifier_input_gradient(const Classifier& model, const Tensor& image, int label) {
  ad::Tape tape;
  auto params = model.bind(tape, false);
  Var x = tape.leaf(image);
  Var loss = ad::cross_entropy(model.forward(tape, params, x), label);
  LossGrad out;
  out.loss = loss.value()[0];
  out.grad = tape.backward(loss).of(x);
  return out;
}

LossGrad vit_input_gradient(const vit::ViTConfig& cfg, const vit::ViTParams& params, const Tensor& image, int label,
                            const ops::BlockModSchedule& mods, const Tensor* robust_tokens,
                            const ops::CleanContext* clean) {
  ad::Tape tape;
  vit::ViTVars w = vit::bind(tape, params, false);
  Var x = tape.leaf(image);
  std::optional<Var> rt;
  if (robust_tokens && !robust_tokens->empty()) rt = tape.constant(*robust_tokens);
  vit::ForwardOptions opt;
  opt.clean = clean;
  Var loss = ad::cross_entropy(vit::vit_forward(cfg, w, x, mods, rt, opt), label);
  LossGrad out;
  out.loss = loss.value()[0];
  out.grad = tape.backward(loss).of(x);
  return out;
}

namespace {

MiSettings settings(const AttackConfig& cfg) { return {cfg.epsilon, cfg.steps, cfg.step_size(), cfg.mu}; }

bool needs_clean(const ops::BlockModSchedule& s) {
  for (const auto& b : s)
    if (b.find(ops::OpKind::clean)) return true;
  return false;
}

}  // namespace

Tensor mi_fgsm_attack(const Tensor& x, int y, const Classifier& model, const AttackConfig& cfg,
                      const ModsProvider& mods) {
  cfg.validate();
  if (!mods)
    return mi_fgsm(x, settings(cfg), [&](const Tensor& xa, int) { return classifier_input_gradient(model, xa, y); })
        .x_adv;
  const auto* v = dynamic_cast<const vit::VisionTransformer*>(&model);
  if (!v) throw ContractError("mi_fgsm_attack: block mods need a ViT surrogate");
  std::optional<ops::CleanContext> clean;
  return mi_fgsm(x, settings(cfg),
                 [&](const Tensor& xa, int t) {
                   ops::BlockModSchedule s = mods(t);
                   if (needs_clean(s) && !clean) clean = vit::capture_clean_context(v->config(), v->params(), x, nullptr);
                   return vit_input_gradient(v->config(), v->params(), xa, y, s, nullptr, clean ? &*clean : nullptr);
                 })
      .x_adv;
}

RedundantResult run_redundant_attack(const Tensor& x, int y, const vit::VisionTransformer& surrogate,
                                     const AttackConfig& cfg, std::uint64_t image_index,
                                     const robust::RobustTokens* global_tokens) {
  cfg.validate();
  if (cfg.method != Method::ours) throw ConfigError("run_redundant_attack requires method 'ours'");
  const auto& vc = surrogate.config();
  const auto& params = surrogate.params();

  robust::RobustTokens tokens;
  if (cfg.robust.count > 0) {
    if (cfg.robust.mode == robust::Mode::global) {
      if (!global_tokens || !global_tokens->enabled())
        throw StateError("global robust tokens requested but none were supplied");
      if (global_tokens->z.shape() != Shape{static_cast<std::size_t>(cfg.robust.count),
                                            static_cast<std::size_t>(vc.hidden_dim)})
        throw DimensionError("global robust tokens have shape " + shape_str(global_tokens->z.shape()));
      tokens = *global_tokens;
    } else {
      tokens = robust::robustify_dynamic(x, y, surrogate, cfg.robust, {cfg.epsilon, cfg.mu},
                                         derive(cfg.seed, {image_index}));
    }
  }
  const Tensor* rt = tokens.enabled() ? &tokens.z : nullptr;
  ops::CleanContext clean = vit::capture_clean_context(vc, params, x, rt);

  policy::OpPolicy pol = policy::init_policy(vc.num_layers, cfg.policy);
  Stream prng(derive(cfg.seed, {static_cast<std::uint64_t>(Domain::policy_sampling), image_index}));
  std::vector<std::vector<int>> sampled;
  MiTrace tr = mi_fgsm(
      x, settings(cfg),
      [&](const Tensor& xa, int t) {
        auto s = policy::sample_schedule(pol, prng, cfg.ops, cfg.seed, image_index, static_cast<std::uint64_t>(t));
        sampled = std::move(s.sampled);
        return vit_input_gradient(vc, params, xa, y, s.schedule, rt, &clean);
      },
      [&](int, double loss) { policy::reinforce_update(pol, sampled, loss); });
  return {std::move(tr.x_adv), std::move(pol), std::move(tr.losses), std::move(tokens)};
}

BatchResult attack_batch(std::span<const Tensor> images, std::span<const int> labels, const Classifier& surrogate,
                         const AttackConfig& cfg, std::span<const std::uint64_t> image_ids,
                         const robust::RobustTokens* global_tokens) {
  if (images.size() != labels.size()) throw InputError("attack_batch: images and labels differ in length");
  if (!image_ids.empty() && image_ids.size() != images.size())
    throw InputError("attack_batch: image ids and images differ in length");
  cfg.validate();
  const auto* v = dynamic_cast<const vit::VisionTransformer*>(&surrogate);
  if (cfg.method == Method::ours && !v) throw ContractError("method 'ours' needs a ViT surrogate");
  BatchResult out;
  out.x_adv.resize(images.size());
  out.losses.resize(images.size());
  std::vector<std::optional<policy::OpPolicy>> policies(images.size());
  kernels::parallel_for(images.size(), [&](std::size_t i) {
    const std::uint64_t id = image_ids.empty() ? i : image_ids[i];
    if (cfg.method == Method::mi) {
      MiTrace tr = mi_fgsm(images[i], settings(cfg), [&](const Tensor& xa, int) {
        return classifier_input_gradient(surrogate, xa, labels[i]);
      });
      out.x_adv[i] = std::move(tr.x_adv);
      out.losses[i] = std::move(tr.losses);
    } else {
      RedundantResult r = run_redundant_attack(images[i], labels[i], *v, cfg, id, global_tokens);
      out.x_adv[i] = std::move(r.x_adv);
      out.losses[i] = std::move(r.losses);
      policies[i] = std::move(r.policy);
    }
  });
  if (!policies.empty() && policies.back()) out.last_policy = std::move(policies.back());
  return out;
}

}  // namespace rvit::attack
