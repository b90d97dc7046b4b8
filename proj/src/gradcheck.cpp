#include "rvit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "rvit/error.hpp"

namespace rvit::ad {
namespace {

double evaluate(const ScalarFn& f, const Tensor& x) {
  Tape tape;
  Var out = f(tape, tape.constant(x));
  if (out.value().size() != 1) throw ContractError("finite_diff_check: f must return a scalar");
  return out.value()[0];
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult finite_diff_check(const ScalarFn& f, const Tensor& x, double h,
                                  std::span<const std::size_t> coords) {
  if (!(h > 0.0)) throw ContractError("finite_diff_check: step must be positive");

  const double f0 = evaluate(f, x);
  const double f1 = evaluate(f, x);
  if (std::memcmp(&f0, &f1, sizeof(double)) != 0)
    throw ContractError("finite_diff_check: f is not deterministic (unfrozen RNG stream?)");

  Tape tape;
  Var leaf = tape.leaf(x);
  Var out = f(tape, leaf);
  Tensor analytic = backward(out).of(leaf);

  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(x.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    coords = all;
  }

  GradCheckResult r;
  Tensor probe = x;
  for (std::size_t i : coords) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = evaluate(f, probe);
    probe[i] = orig - h;
    const double fm = evaluate(f, probe);
    probe[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = relative_error(analytic[i], numeric);
    if (err > r.max_rel_error || r.checked == 0) {
      r.max_rel_error = err;
      r.worst_index = i;
      r.analytic = analytic[i];
      r.numeric = numeric;
    }
    ++r.checked;
    r.coords.push_back(i);
    r.analytic_values.push_back(analytic[i]);
    r.numeric_values.push_back(numeric);
  }
  return r;
}

ScaledErrors split_errors(const GradCheckResult& r, double threshold) {
  ScaledErrors s;
  for (std::size_t k = 0; k < r.coords.size(); ++k) {
    const double a = r.analytic_values[k], n = r.numeric_values[k];
    if (std::max(std::abs(a), std::abs(n)) >= threshold) {
      s.max_rel_error = std::max(s.max_rel_error, relative_error(a, n));
      ++s.above;
    } else {
      s.max_abs_error_below = std::max(s.max_abs_error_below, std::abs(a - n));
      ++s.below;
    }
  }
  return s;
}

}  // namespace rvit::ad
