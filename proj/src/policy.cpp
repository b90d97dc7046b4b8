#include "rvit/policy.hpp"

#include <algorithm>
#include <numeric>

#include "rvit/error.hpp"

namespace rvit::policy {

nlohmann::json PolicyConfig::to_json() const {
  std::vector<std::string> names;
  for (auto k : pool) names.emplace_back(ops::op_name(k));
  return {{"s", ops_per_block}, {"lr", lr}, {"prob_floor", prob_floor}, {"pool", names}};
}

void PolicyConfig::validate() const { OpPolicy(1, pool, ops_per_block, lr, prob_floor); }

PolicyConfig PolicyConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("policy config must be an object");
  PolicyConfig c;
  for (auto& [k, v] : j.items()) {
    if (k == "s") c.ops_per_block = v.get<int>();
    else if (k == "lr") c.lr = v.get<double>();
    else if (k == "prob_floor") c.prob_floor = v.get<double>();
    else if (k == "pool") {
      c.pool.clear();
      for (auto& name : v) c.pool.push_back(ops::op_from_name(name.get<std::string>()));
    } else throw ConfigError("unknown key 'policy." + k + "'");
  }
  c.validate();
  return c;
}

OpPolicy::OpPolicy(int layers, std::vector<ops::OpKind> pool, int ops_per_block, double lr, double prob_floor)
    : layers_(layers), pool_(std::move(pool)), s_(ops_per_block), lr_(lr), floor_(prob_floor) {
  const int o = static_cast<int>(pool_.size());
  if (layers_ < 1) throw ConfigError("policy needs at least one block");
  if (o < 1) throw ConfigError("policy op pool is empty");
  if (s_ < 0 || s_ > o) throw ConfigError("ops per block must lie in [0, O]");
  if (!(floor_ >= 0.0) || floor_ * o >= 1.0) throw ConfigError("prob_floor * O must be below 1");
  if (!(lr_ >= 0.0)) throw ConfigError("policy lr must be non-negative");
  for (std::size_t i = 0; i < pool_.size(); ++i)
    for (std::size_t j = i + 1; j < pool_.size(); ++j)
      if (pool_[i] == pool_[j]) throw ConfigError("duplicate op in policy pool");
  m_.assign(static_cast<std::size_t>(layers_ * o), 1.0 / o);
}

std::vector<double> OpPolicy::row(int layer) const {
  auto b = m_.begin() + layer * pool_size();
  return {b, b + pool_size()};
}

int OpPolicy::column_of(ops::OpKind kind) const {
  for (int i = 0; i < pool_size(); ++i)
    if (pool_[static_cast<std::size_t>(i)] == kind) return i;
  return -1;
}

nlohmann::json OpPolicy::matrix_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (int l = 0; l < layers_; ++l) rows.push_back(row(l));
  return rows;
}

OpPolicy init_policy(int layers, const PolicyConfig& cfg) {
  return OpPolicy(layers, cfg.pool, cfg.ops_per_block, cfg.lr, cfg.prob_floor);
}

std::vector<std::vector<int>> sample_ops(const OpPolicy& policy, Stream& rng) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(policy.layers()));
  const int o = policy.pool_size();
  for (int l = 0; l < policy.layers(); ++l) {
    std::vector<double> mass = policy.row(l);
    for (int k = 0; k < policy.ops_per_block(); ++k) {
      double total = 0.0;
      for (double m : mass) total += m;
      double u = rng.uniform() * total;
      int pick = -1;
      for (int j = 0; j < o; ++j) {
        if (mass[static_cast<std::size_t>(j)] <= 0.0) continue;
        pick = j;  // last positive column absorbs rounding at the top end
        if (u < mass[static_cast<std::size_t>(j)]) break;
        u -= mass[static_cast<std::size_t>(j)];
      }
      out[static_cast<std::size_t>(l)].push_back(pick);
      mass[static_cast<std::size_t>(pick)] = 0.0;
    }
  }
  return out;
}

ops::BlockModSchedule materialize(const OpPolicy& policy, const std::vector<std::vector<int>>& sampled,
                                  const ops::OpParams& params, std::uint64_t seed, std::uint64_t image,
                                  std::uint64_t iteration) {
  ops::BlockModSchedule schedule;
  for (std::size_t l = 0; l < sampled.size(); ++l) {
    std::vector<ops::OpInstance> inst;
    for (int col : sampled[l]) {
      if (col < 0 || col >= policy.pool_size()) throw ContractError("sampled op not in pool");
      ops::OpKind kind = policy.pool()[static_cast<std::size_t>(col)];
      inst.push_back({kind, params, op_stream_key(seed, image, iteration, l, static_cast<std::uint64_t>(kind))});
    }
    schedule.push_back(ops::compose_block_mods(std::move(inst)));
  }
  return schedule;
}

SampledSchedule sample_schedule(const OpPolicy& policy, Stream& rng, const ops::OpParams& params,
                                std::uint64_t seed, std::uint64_t image, std::uint64_t iteration) {
  SampledSchedule s;
  s.sampled = sample_ops(policy, rng);
  s.schedule = materialize(policy, s.sampled, params, seed, image, iteration);
  return s;
}

void project_row(std::span<double> row, double floor) {
  for (double& v : row)
    if (!(v >= floor)) v = floor;
  double total = 0.0;
  for (double v : row) total += v;
  for (double& v : row) v /= total;
  // pin entries pushed back under the floor and rescale the free mass
  std::vector<bool> pinned(row.size(), false);
  for (std::size_t pass = 0; pass <= row.size(); ++pass) {
    bool changed = false;
    for (std::size_t i = 0; i < row.size(); ++i)
      if (!pinned[i] && row[i] < floor) {
        pinned[i] = true;
        changed = true;
      }
    if (!changed) break;
    double free_mass = 0.0, pinned_count = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (pinned[i]) pinned_count += 1.0;
      else free_mass += row[i];
    }
    const double target = 1.0 - pinned_count * floor;
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = pinned[i] ? floor : row[i] * target / free_mass;
  }
}

void reinforce_update(OpPolicy& policy, const std::vector<std::vector<int>>& sampled, double reward) {
  if (sampled.size() != static_cast<std::size_t>(policy.layers()))
    throw ContractError("reinforce_update: sampled sets do not match policy depth");
  const double advantage = reward - policy.baseline_;
  const int o = policy.pool_size();
  for (int l = 0; l < policy.layers(); ++l) {
    for (int col : sampled[static_cast<std::size_t>(l)])
      if (col < 0 || col >= o) throw ContractError("reinforce_update: op not in pool");
    if (advantage == 0.0 || sampled[static_cast<std::size_t>(l)].empty()) continue;
    std::span<double> row(policy.m_.data() + l * o, static_cast<std::size_t>(o));
    std::vector<double> before(row.begin(), row.end());
    for (int col : sampled[static_cast<std::size_t>(l)]) {
      const double m = before[static_cast<std::size_t>(col)];
      row[static_cast<std::size_t>(col)] = m + policy.lr_ * advantage / m;
    }
    project_row(row, policy.floor_);
  }
  policy.baseline_ = 0.9 * policy.baseline_ + 0.1 * reward;
}

}  // namespace rvit::policy
