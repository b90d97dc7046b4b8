#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace rvit {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

/// Derives a child key from a parent key and a list of integer tags.
/// derive(k, {a, b}) == derive(derive(k, {a}), {b}).
std::uint64_t derive(std::uint64_t parent, std::initializer_list<std::uint64_t> tags);

/// Top-level domains for stream derivation. A stream key is always
/// derive(global_seed, {domain, ...}) so that no two consumers share a stream.
enum class Domain : std::uint64_t {
  dataset = 1,
  weight_init = 2,
  train_shuffle = 3,
  attack_ops = 4,
  policy_sampling = 5,
  robust_init = 6,
  probe = 7,
  image_subset = 8,
};

/// Key of the stream consumed by one redundancy op at one block of one
/// attack iteration on one image.
std::uint64_t op_stream_key(std::uint64_t seed, std::uint64_t image, std::uint64_t iteration,
                            std::uint64_t block, std::uint64_t op_kind);

/// Counter-based generator: the i-th draw is mix64(key + i * golden), so any
/// position of any stream is computable without touching other streams.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}

  std::uint64_t key() const { return key_; }
  std::uint64_t position() const { return counter_; }

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGolden); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (one value per two uniforms).
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi);

  /// k distinct indices from [0, n), in draw order.
  std::vector<int> sample_without_replacement(int n, int k);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  Stream split(std::uint64_t tag) const { return Stream(derive(key_, {tag})); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace rvit
