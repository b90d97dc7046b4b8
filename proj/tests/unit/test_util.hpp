#pragma once

#include <cstdint>

#include "rvit/rng.hpp"
#include "rvit/tensor.hpp"

namespace rvit::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Stream s(derive(seed, {0xfeed}));
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = lo + (hi - lo) * s.uniform();
  return t;
}

inline Tensor random_normal(Shape shape, std::uint64_t seed, double stddev = 1.0) {
  Stream s(derive(seed, {0xbeef}));
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = stddev * s.normal();
  return t;
}

}  // namespace rvit::testing
