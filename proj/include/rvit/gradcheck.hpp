#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "rvit/autodiff.hpp"

namespace rvit::ad {

/// Scalar function of one tensor, built on the given tape with x as a leaf.
using ScalarFn = std::function<Var(Tape&, const Var& x)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  std::vector<std::size_t> coords;  // checked coordinates, in order
  std::vector<double> analytic_values;
  std::vector<double> numeric_values;
};

/// Relative error restricted to coordinates where max(|a|, |n|) >= threshold,
/// absolute error over the rest.
struct ScaledErrors {
  double max_rel_error = 0.0;
  double max_abs_error_below = 0.0;
  std::size_t above = 0;
  std::size_t below = 0;
};
ScaledErrors split_errors(const GradCheckResult& r, double threshold);

/// |a - n| / max(|a|, |n|, 1e-12).
double relative_error(double analytic, double numeric);

/// Compares backward() against central differences with step h on the listed
/// coordinates (all coordinates when empty). Throws ContractError when f is
/// not deterministic for a fixed x.
GradCheckResult finite_diff_check(const ScalarFn& f, const Tensor& x, double h,
                                  std::span<const std::size_t> coords = {});

}  // namespace rvit::ad
