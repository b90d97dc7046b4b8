#include "rvit/train.hpp"

#include <cmath>
#include <numeric>

#include "rvit/error.hpp"
#include "rvit/kernels.hpp"
#include "rvit/rng.hpp"

namespace rvit::train {

void TrainConfig::validate() const {
  if (epochs < 0 || batch < 1 || !(lr > 0) || momentum < 0 || momentum >= 1 || final_lr_fraction < 0 ||
      grad_clip < 0)
    throw ConfigError("invalid training config " + to_json().dump());
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch", batch},
          {"lr", lr},
          {"momentum", momentum},
          {"final_lr_fraction", final_lr_fraction},
          {"grad_clip", grad_clip}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train config must be an object");
  TrainConfig c;
  for (const auto& [k, v] : j.items()) {
    if (k == "epochs") c.epochs = v.get<int>();
    else if (k == "batch") c.batch = v.get<int>();
    else if (k == "lr") c.lr = v.get<double>();
    else if (k == "momentum") c.momentum = v.get<double>();
    else if (k == "final_lr_fraction") c.final_lr_fraction = v.get<double>();
    else if (k == "grad_clip") c.grad_clip = v.get<double>();
    else throw ConfigError("unknown key 'train." + k + "'");
  }
  c.validate();
  return c;
}

double accuracy(const Classifier& model, const data::Dataset& data, const std::vector<std::size_t>& idx) {
  if (idx.empty()) return 0.0;
  std::vector<int> correct(idx.size(), 0);
  kernels::parallel_for(idx.size(), [&](std::size_t k) {
    correct[k] = model.predict(data.images[idx[k]]) == data.labels[idx[k]] ? 1 : 0;
  });
  return static_cast<double>(std::accumulate(correct.begin(), correct.end(), 0)) / static_cast<double>(idx.size());
}

TrainResult train_model(Classifier& model, const data::Dataset& data, const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<std::size_t> train_idx = data.indices(data::Split::train);
  const std::vector<std::size_t> test_idx = data.indices(data::Split::test);
  if (train_idx.empty()) throw InputError("dataset has no train split");

  std::vector<NamedTensor> params = model.parameters();
  std::vector<std::vector<double>> velocity;
  for (const auto& p : params) velocity.emplace_back(p.tensor->size(), 0.0);

  const std::size_t steps_per_epoch = (train_idx.size() + static_cast<std::size_t>(cfg.batch) - 1) /
                                      static_cast<std::size_t>(cfg.batch);
  const double total_steps = static_cast<double>(steps_per_epoch * static_cast<std::size_t>(cfg.epochs));
  std::size_t step = 0;

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Stream shuffle(derive(seed, {static_cast<std::uint64_t>(Domain::train_shuffle), static_cast<std::uint64_t>(epoch)}));
    shuffle.shuffle(train_idx);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train_idx.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(train_idx.size(), start + static_cast<std::size_t>(cfg.batch));
      const std::size_t bs = end - start;
      std::vector<std::vector<Tensor>> grads(bs);
      std::vector<double> losses(bs);
      kernels::parallel_for(bs, [&](std::size_t k) {
        const std::size_t i = train_idx[start + k];
        ad::Tape tape;
        auto bound = model.bind(tape, true);
        ad::Var loss = ad::cross_entropy(model.forward(tape, bound, tape.constant(data.images[i])), data.labels[i]);
        losses[k] = loss.value()[0];
        ad::Gradients g = ad::backward(loss);
        for (const auto& v : bound) grads[k].push_back(g.of(v));
      });

      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      if (!std::isfinite(batch_loss))
        throw TrainingError("training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                            " with config " + cfg.to_json().dump() + " model " + model.config_json().dump());
      epoch_loss += batch_loss;

      // mean gradient, reduced in example order
      std::vector<std::vector<double>> mean(params.size());
      double sq = 0.0;
      for (std::size_t p = 0; p < params.size(); ++p) {
        mean[p].assign(params[p].tensor->size(), 0.0);
        for (std::size_t k = 0; k < bs; ++k)
          for (std::size_t e = 0; e < mean[p].size(); ++e) mean[p][e] += grads[k][p][e];
        for (double& e : mean[p]) {
          e /= static_cast<double>(bs);
          sq += e * e;
        }
      }
      double clip = 1.0;
      const double norm = std::sqrt(sq);
      if (cfg.grad_clip > 0 && norm > cfg.grad_clip) clip = cfg.grad_clip / norm;

      const double frac = total_steps > 0 ? static_cast<double>(step) / total_steps : 0.0;
      const double lr = cfg.lr * (1.0 - (1.0 - cfg.final_lr_fraction) * frac);
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto& w = params[p].tensor->storage();
        for (std::size_t e = 0; e < w.size(); ++e) {
          velocity[p][e] = cfg.momentum * velocity[p][e] + clip * mean[p][e];
          w[e] -= lr * velocity[p][e];
        }
      }
      ++step;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(train_idx.size()));
  }
  result.val_accuracy = accuracy(model, data, test_idx);
  return result;
}

}  // namespace rvit::train
