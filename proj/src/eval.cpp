#include "rvit/eval.hpp"

#include <cmath>

#include "rvit/convnet.hpp"
#include "rvit/error.hpp"
#include "rvit/kernels.hpp"
#include "rvit/rng.hpp"

namespace rvit::eval {

std::string_view filter_name(RateFilter f) { return f == RateFilter::all ? "all" : "clean-correct"; }

RateFilter filter_from_name(std::string_view name) {
  if (name == "all") return RateFilter::all;
  if (name == "clean-correct") return RateFilter::clean_correct;
  throw ConfigError("unknown ASR filter '" + std::string(name) + "'");
}

double attack_success_rate(const Classifier& victim, std::span<const Tensor> adv, std::span<const int> labels,
                           RateFilter filter, std::span<const Tensor> clean) {
  if (adv.size() != labels.size()) throw InputError("attack_success_rate: batch and labels differ in length");
  if (filter == RateFilter::clean_correct && clean.size() != adv.size())
    throw InputError("attack_success_rate: clean-correct filter needs the clean batch");
  std::vector<int> counted(adv.size(), 0), fooled(adv.size(), 0);
  kernels::parallel_for(adv.size(), [&](std::size_t i) {
    if (filter == RateFilter::clean_correct && victim.predict(clean[i]) != labels[i]) return;
    counted[i] = 1;
    fooled[i] = victim.predict(adv[i]) != labels[i] ? 1 : 0;
  });
  std::size_t n = 0, f = 0;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    n += static_cast<std::size_t>(counted[i]);
    f += static_cast<std::size_t>(fooled[i]);
  }
  if (n == 0) throw UndefinedRateError("attack success rate undefined: no examples left after filtering");
  return static_cast<double>(f) / static_cast<double>(n);
}

double row_average(std::span<const double> row) {
  if (row.empty()) throw UndefinedRateError("average of an empty row");
  double s = 0.0;
  for (double v : row) s += v;
  return s / static_cast<double>(row.size());
}

double stddev(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  const double m = row_average(xs);
  double s = 0.0;
  for (double v : xs) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

void TransferReport::recompute_averages() {
  averages.clear();
  for (const auto& row : asr) averages.push_back(row.empty() ? 0.0 : row_average(row));
}

nlohmann::json TransferReport::to_json() const {
  nlohmann::json j;
  j["surrogates"] = surrogates;
  j["victims"] = victims;
  j["asr"] = nlohmann::json::array();
  for (const auto& r : asr) j["asr"].push_back(r);
  j["averages"] = averages;
  j["config"] = config;
  j["seeds"] = seeds;
  for (auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

TransferReport transfer_matrix(std::span<const NamedModel> surrogates, std::span<const NamedModel> victims,
                               std::span<const Tensor> images, std::span<const int> labels,
                               const attack::AttackConfig& cfg, RateFilter filter) {
  TransferReport rep;
  rep.config = cfg.to_json();
  rep.seeds = {cfg.seed};
  for (const auto& v : victims) rep.victims.push_back(v.name);
  nlohmann::json policies = nlohmann::json::object();
  for (const auto& s : surrogates) {
    rep.surrogates.push_back(s.name);
    attack::BatchResult br = attack::attack_batch(images, labels, *s.model, cfg);
    std::vector<double> row;
    for (const auto& v : victims) row.push_back(attack_success_rate(*v.model, br.x_adv, labels, filter, images));
    rep.asr.push_back(std::move(row));
    if (br.last_policy) policies[s.name] = br.last_policy->matrix_json();
  }
  rep.recompute_averages();
  rep.extra["filter"] = filter_name(filter);
  if (!policies.empty()) rep.extra["policy"] = policies;
  return rep;
}

std::vector<std::size_t> sample_test_subset(const data::Dataset& data, std::size_t count, std::uint64_t seed) {
  const auto test = data.indices(data::Split::test);
  if (count > test.size()) throw InputError("requested " + std::to_string(count) + " test images, only " +
                                            std::to_string(test.size()) + " available");
  Stream rng(derive(seed, {static_cast<std::uint64_t>(Domain::image_subset)}));
  std::vector<std::size_t> out;
  for (std::size_t k : rng.sample_without_replacement(test.size(), count)) out.push_back(test[k]);
  return out;
}

std::vector<ZooSpec> default_zoo() {
  vit::ViTConfig base;
  vit::ViTConfig deep = base;
  deep.num_layers = 6;
  vit::ViTConfig wide = base;
  wide.hidden_dim = 48;
  wide.ffn_hidden = 96;
  return {{"surrogate", base.to_json(), 100},
          {"vit_l4_d32", base.to_json(), 200},
          {"vit_l6_d32", deep.to_json(), 300},
          {"vit_l4_d48", wide.to_json(), 400},
          {"cnn", cnn::ConvConfig{}.to_json(), 500}};
}

std::vector<ZooMember> train_zoo(const data::Dataset& data, std::span<const ZooSpec> specs,
                                 const train::TrainConfig& cfg, double gate) {
  std::vector<ZooMember> zoo;
  for (const auto& s : specs) {
    std::unique_ptr<Classifier> m;
    const std::string kind = s.model.at("kind").get<std::string>();
    if (kind == "vit") m = std::make_unique<vit::VisionTransformer>(vit::ViTConfig::from_json(s.model), s.seed);
    else if (kind == "cnn") m = std::make_unique<cnn::ConvNet>(cnn::ConvConfig::from_json(s.model), s.seed);
    else throw ConfigError("unknown model kind '" + kind + "'");
    train::TrainResult r = train::train_model(*m, data, cfg, derive(s.seed, {static_cast<std::uint64_t>(Domain::train_shuffle)}));
    if (r.val_accuracy < gate)
      throw TrainingError("zoo model '" + s.name + "' reached " + std::to_string(r.val_accuracy) +
                          " clean accuracy, below the gate of " + std::to_string(gate));
    zoo.push_back({s.name, std::move(m), r.val_accuracy});
  }
  return zoo;
}

namespace {

std::vector<double> victim_rates(const Classifier& surrogate, std::span<const NamedModel> victims,
                                 std::span<const Tensor> images, std::span<const int> labels,
                                 const attack::AttackConfig& cfg, const robust::RobustTokens* global_tokens,
                                 std::span<const std::uint64_t> ids) {
  attack::BatchResult br = attack::attack_batch(images, labels, surrogate, cfg, ids, global_tokens);
  std::vector<double> out;
  for (const auto& v : victims) out.push_back(attack_success_rate(*v.model, br.x_adv, labels));
  return out;
}

}  // namespace

double mean_victim_asr(const Classifier& surrogate, std::span<const NamedModel> victims, std::span<const Tensor> images,
                       std::span<const int> labels, const attack::AttackConfig& cfg,
                       const robust::RobustTokens* global_tokens) {
  auto r = victim_rates(surrogate, victims, images, labels, cfg, global_tokens, {});
  return row_average(r);
}

int MethodComparison::victims_improved() const {
  int n = 0;
  for (std::size_t v = 0; v < victims.size(); ++v) n += ours_mean[v] > mi_mean[v] ? 1 : 0;
  return n;
}

nlohmann::json MethodComparison::to_json() const {
  return {{"victims", victims}, {"seeds", seeds},       {"mi", mi},         {"ours", ours},
          {"mi_mean", mi_mean}, {"ours_mean", ours_mean}, {"mi_std", mi_std}, {"ours_std", ours_std},
          {"mi_avg", mi_avg},   {"ours_avg", ours_avg},   {"victims_improved", victims_improved()},
          {"mean_lift", mean_lift()}};
}

MethodComparison compare_methods(const vit::VisionTransformer& surrogate, std::span<const NamedModel> victims,
                                 const data::Dataset& data, std::size_t images_per_seed,
                                 const attack::AttackConfig& ours, std::span<const std::uint64_t> seeds,
                                 const robust::RobustTokens* global_tokens) {
  MethodComparison c;
  for (const auto& v : victims) c.victims.push_back(v.name);
  c.seeds.assign(seeds.begin(), seeds.end());
  for (std::uint64_t seed : seeds) {
    auto idx = sample_test_subset(data, images_per_seed, seed);
    std::vector<Tensor> xs;
    std::vector<int> ys;
    std::vector<std::uint64_t> ids;
    for (std::size_t i : idx) {
      xs.push_back(data.images[i]);
      ys.push_back(data.labels[i]);
      ids.push_back(i);
    }
    attack::AttackConfig mi = ours;
    mi.method = attack::Method::mi;
    mi.seed = seed;
    attack::AttackConfig full = ours;
    full.seed = seed;
    c.mi.push_back(victim_rates(surrogate, victims, xs, ys, mi, nullptr, ids));
    c.ours.push_back(victim_rates(surrogate, victims, xs, ys, full, global_tokens, ids));
  }
  for (std::size_t v = 0; v < victims.size(); ++v) {
    std::vector<double> a, b;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      a.push_back(c.mi[s][v]);
      b.push_back(c.ours[s][v]);
    }
    c.mi_mean.push_back(row_average(a));
    c.ours_mean.push_back(row_average(b));
    c.mi_std.push_back(stddev(a));
    c.ours_std.push_back(stddev(b));
  }
  c.mi_avg = row_average(c.mi_mean);
  c.ours_avg = row_average(c.ours_mean);
  return c;
}

}  // namespace rvit::eval
