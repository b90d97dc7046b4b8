#pragma once

// Per-block categorical policy over redundancy ops, trained online with the
// single-draw REINFORCE estimator and a running-mean baseline.

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "rvit/redundancy.hpp"
#include "rvit/rng.hpp"

namespace rvit::policy {

struct PolicyConfig {
  int ops_per_block = 2;  // s
  double lr = 0.05;
  double prob_floor = 0.01;
  std::vector<ops::OpKind> pool{ops::kOpPool.begin(), ops::kOpPool.end()};

  void validate() const;
  nlohmann::json to_json() const;
  static PolicyConfig from_json(const nlohmann::json& j);
  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

/// L x O sampling matrix with one categorical distribution per block.
class OpPolicy {
 public:
  OpPolicy(int layers, std::vector<ops::OpKind> pool, int ops_per_block, double lr, double prob_floor);

  int layers() const { return layers_; }
  int pool_size() const { return static_cast<int>(pool_.size()); }
  int ops_per_block() const { return s_; }
  double lr() const { return lr_; }
  double prob_floor() const { return floor_; }
  double baseline() const { return baseline_; }
  const std::vector<ops::OpKind>& pool() const { return pool_; }

  double prob(int layer, int op) const { return m_[static_cast<std::size_t>(layer * pool_size() + op)]; }
  double& prob(int layer, int op) { return m_[static_cast<std::size_t>(layer * pool_size() + op)]; }
  std::vector<double> row(int layer) const;
  int column_of(ops::OpKind kind) const;

  nlohmann::json matrix_json() const;

 private:
  friend class PolicyTestAccess;
  friend void reinforce_update(OpPolicy&, const std::vector<std::vector<int>>&, double);

  int layers_;
  std::vector<ops::OpKind> pool_;
  int s_;
  double lr_;
  double floor_;
  double baseline_ = 0.0;
  std::vector<double> m_;
};

/// Uniform rows, zero baseline. Throws ConfigError unless O >= 1,
/// 0 <= s <= O and prob_floor * O < 1.
OpPolicy init_policy(int layers, const PolicyConfig& cfg);

/// Per block: s draws without replacement, each categorical over the
/// renormalized remaining mass. Returns pool column indices in draw order.
std::vector<std::vector<int>> sample_ops(const OpPolicy& policy, Stream& rng);

/// Materializes sampled columns into a schedule with the configured op
/// parameters; each op gets its own stream for (image, iteration, block, kind).
ops::BlockModSchedule materialize(const OpPolicy& policy, const std::vector<std::vector<int>>& sampled,
                                  const ops::OpParams& params, std::uint64_t seed, std::uint64_t image,
                                  std::uint64_t iteration);

struct SampledSchedule {
  std::vector<std::vector<int>> sampled;
  ops::BlockModSchedule schedule;
};

SampledSchedule sample_schedule(const OpPolicy& policy, Stream& rng, const ops::OpParams& params,
                                std::uint64_t seed, std::uint64_t image, std::uint64_t iteration);

/// M[l,o] += lr * (reward - baseline) / M[l,o] for every sampled (l, o), then
/// each changed row is floored and renormalized; baseline <- 0.9 b + 0.1 reward.
void reinforce_update(OpPolicy& policy, const std::vector<std::vector<int>>& sampled, double reward);

/// Raises entries to the floor and rescales the rest so the row sums to one.
void project_row(std::span<double> row, double floor);

}  // namespace rvit::policy
