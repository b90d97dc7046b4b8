#include "rvit/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "rvit/error.hpp"

namespace rvit {

std::uint64_t derive(std::uint64_t parent, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t k = parent;
  for (std::uint64_t t : tags) k = mix64(k ^ mix64(t + kGolden));
  return k;
}

std::uint64_t op_stream_key(std::uint64_t seed, std::uint64_t image, std::uint64_t iteration,
                            std::uint64_t block, std::uint64_t op_kind) {
  return derive(seed, {static_cast<std::uint64_t>(Domain::attack_ops), image, iteration, block,
                       op_kind});
}

double Stream::normal() {
  double u1 = uniform();
  double u2 = uniform();
  // u1 in (0, 1] keeps log finite
  u1 = 1.0 - u1;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Stream::below(std::uint64_t n) {
  if (n == 0) throw ContractError("Stream::below: n must be positive");
  // Rejection on the top of the range keeps the result unbiased.
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
  while (true) {
    std::uint64_t r = next_u64();
    if (r < limit) return r % n;
  }
}

int Stream::uniform_int(int lo, int hi) {
  if (hi < lo) throw ContractError("Stream::uniform_int: empty range");
  return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
}

std::vector<int> Stream::sample_without_replacement(int n, int k) {
  if (k < 0 || k > n) throw ContractError("sample_without_replacement: k out of range");
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  // partial Fisher-Yates from the front
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

}  // namespace rvit
