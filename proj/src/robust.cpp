#include "rvit/robust.hpp"

#include "rvit/attack.hpp"
#include "rvit/error.hpp"
#include "rvit/kernels.hpp"
#include "rvit/rng.hpp"

namespace rvit::robust {

using ad::Var;

std::string_view mode_name(Mode m) { return m == Mode::dynamic ? "dynamic" : "global"; }

Mode mode_from_name(std::string_view name) {
  if (name == "dynamic") return Mode::dynamic;
  if (name == "global") return Mode::global;
  throw ConfigError("unknown robust-token mode '" + std::string(name) + "'");
}

void RobustConfig::validate() const {
  if (count < 0) throw ConfigError("robust token count must be >= 0");
  if (inner_steps < 1) throw ConfigError("robust inner_steps must be >= 1");
  if (outer_steps < 0) throw ConfigError("robust outer_steps must be >= 0");
  if (epochs < 0) throw ConfigError("robust epochs must be >= 0");
  if (batch < 1) throw ConfigError("robust batch must be >= 1");
  if (!(lr >= 0.0)) throw ConfigError("robust lr must be >= 0");
  if (!(init_std >= 0.0)) throw ConfigError("robust init_std must be >= 0");
}

nlohmann::json RobustConfig::to_json() const {
  return {{"count", count},   {"mode", mode_name(mode)}, {"inner_steps", inner_steps}, {"outer_steps", outer_steps},
          {"epochs", epochs}, {"batch", batch},          {"lr", lr},                   {"init_std", init_std}};
}

RobustConfig RobustConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("robust config must be an object");
  RobustConfig c;
  for (auto& [k, v] : j.items()) {
    if (k == "count") c.count = v.get<int>();
    else if (k == "mode") c.mode = mode_from_name(v.get<std::string>());
    else if (k == "inner_steps") c.inner_steps = v.get<int>();
    else if (k == "outer_steps") c.outer_steps = v.get<int>();
    else if (k == "epochs") c.epochs = v.get<int>();
    else if (k == "batch") c.batch = v.get<int>();
    else if (k == "lr") c.lr = v.get<double>();
    else if (k == "init_std") c.init_std = v.get<double>();
    else throw ConfigError("unknown key 'robust." + k + "'");
  }
  c.validate();
  return c;
}

nlohmann::json RobustTokens::meta_json() const {
  return {{"count", count}, {"mode", mode_name(mode)}, {"steps", steps}, {"lr", lr}, {"seed", seed}};
}

Tensor init_tokens(int count, int dim, double init_std, std::uint64_t seed) {
  if (count == 0) return {};
  Tensor z({static_cast<std::size_t>(count), static_cast<std::size_t>(dim)});
  Stream rng(derive(seed, {static_cast<std::uint64_t>(Domain::robust_init)}));
  for (double& v : z.data()) v = init_std * rng.normal();
  return z;
}

TokenGrad token_gradient(const vit::ViTConfig& cfg, const vit::ViTParams& params, const Tensor& image, int label,
                         const Tensor& tokens) {
  ad::Tape tape;
  vit::ViTVars w = vit::bind(tape, params, false);
  Var z = tape.leaf(tokens);
  auto mods = ops::neutral_schedule(static_cast<std::size_t>(cfg.num_layers));
  Var loss = ad::cross_entropy(vit::vit_forward(cfg, w, tape.constant(image), mods, z), label);
  TokenGrad out;
  out.loss = loss.value()[0];
  out.grad = tape.backward(loss).of(z);
  return out;
}

Tensor inner_attack(const vit::ViTConfig& cfg, const vit::ViTParams& params, const Tensor& image, int label,
                    const Tensor& tokens, int steps, const InnerAttack& inner) {
  attack::MiSettings mi{inner.epsilon, steps, inner.epsilon / steps, inner.mu};
  auto mods = ops::neutral_schedule(static_cast<std::size_t>(cfg.num_layers));
  const Tensor* rt = tokens.empty() ? nullptr : &tokens;
  return attack::mi_fgsm(image, mi, [&](const Tensor& x_adv, int) {
           return attack::vit_input_gradient(cfg, params, x_adv, label, mods, rt, nullptr);
         }).x_adv;
}

namespace {

RobustTokens make_tokens(const vit::VisionTransformer& model, const RobustConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RobustTokens rt;
  rt.count = cfg.count;
  rt.mode = cfg.mode;
  rt.lr = cfg.lr;
  rt.seed = seed;
  rt.z = init_tokens(cfg.count, model.config().hidden_dim, cfg.init_std, seed);
  return rt;
}

void descend(Tensor& z, const Tensor& grad, double lr) {
  auto zd = z.data();
  auto gd = grad.data();
  for (std::size_t i = 0; i < zd.size(); ++i) zd[i] -= lr * gd[i];
  if (!z.all_finite()) throw NumericError("robust tokens became non-finite");
}

}  // namespace

RobustTokens robustify_dynamic(const Tensor& image, int label, const vit::VisionTransformer& model,
                               const RobustConfig& cfg, const InnerAttack& inner, std::uint64_t seed) {
  RobustTokens rt = make_tokens(model, cfg, seed);
  if (!rt.enabled()) return rt;
  const auto& vc = model.config();
  const auto& p = model.params();
  for (int j = 0; j < cfg.outer_steps; ++j) {
    Tensor x_adv = inner_attack(vc, p, image, label, rt.z, cfg.inner_steps, inner);
    descend(rt.z, token_gradient(vc, p, x_adv, label, rt.z).grad, cfg.lr);
    ++rt.steps;
  }
  return rt;
}

RobustTokens robustify_global(std::span<const Tensor> images, std::span<const int> labels,
                              const vit::VisionTransformer& model, const RobustConfig& cfg, const InnerAttack& inner,
                              std::uint64_t seed) {
  if (images.empty()) throw InputError("robustify_global: calibration set is empty");
  if (images.size() != labels.size()) throw InputError("robustify_global: images and labels differ in length");
  RobustTokens rt = make_tokens(model, cfg, seed);
  if (!rt.enabled()) return rt;
  const auto& vc = model.config();
  const auto& p = model.params();
  const std::size_t n = images.size();
  const std::size_t b = static_cast<std::size_t>(cfg.batch);
  for (int e = 0; e < cfg.epochs; ++e) {
    for (std::size_t start = 0; start < n; start += b) {
      const std::size_t end = std::min(n, start + b);
      std::vector<Tensor> grads(end - start);
      kernels::parallel_for(end - start, [&](std::size_t i) {
        const Tensor& x = images[start + i];
        Tensor x_adv = inner_attack(vc, p, x, labels[start + i], rt.z, cfg.inner_steps, inner);
        grads[i] = token_gradient(vc, p, x_adv, labels[start + i], rt.z).grad;
      });
      Tensor mean = grads[0];
      for (std::size_t i = 1; i < grads.size(); ++i)
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += grads[i][k];
      const double inv = static_cast<double>(grads.size());
      for (double& v : mean.data()) v /= inv;
      descend(rt.z, mean, cfg.lr);
      ++rt.steps;
    }
  }
  return rt;
}

}  // namespace rvit::robust
