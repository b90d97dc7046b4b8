#include "rvit/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rvit/error.hpp"
#include "rvit/kernels.hpp"

namespace rvit::ad {

// ---- Var / Tape ----

const Tensor& Var::value() const {
  if (!tape_) throw StateError("Var has no tape");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

const Tensor& Gradients::of(const Var& leaf) const {
  for (const auto& [id, g] : by_id_)
    if (id == leaf.id()) return g;
  throw ContractError("Gradients::of: not a differentiable leaf of this tape");
}

void Tape::check_live() const {
  if (consumed_) throw StateError("tape already consumed by backward");
}

Var Tape::push(Node node) {
  check_live();
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.is_leaf = true;
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  bool rg = false;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw ContractError("operands recorded on different tapes");
    rg = rg || requires_grad(v.id());
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = rg;
  if (rg) n.backward = std::move(fn);
  return push(std::move(n));
}

std::vector<double>& Tape::grad(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Gradients Tape::backward(const Var& output) {
  check_live();
  if (output.tape() != this) throw ContractError("backward: output belongs to another tape");
  if (output.value().size() != 1)
    throw ContractError("backward: output must be scalar, got " + shape_str(output.shape()));
  consumed_ = true;
  if (requires_grad(output.id())) {
    grad(output.id())[0] = 1.0;
    for (int id = output.id(); id >= 0; --id) {
      auto& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.requires_grad || n.is_leaf || n.grad.empty() || !n.backward) continue;
      n.backward(*this, id);
    }
  }
  Gradients g;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    auto& n = nodes_[id];
    if (!n.is_leaf || !n.requires_grad) continue;
    Tensor t(n.value.shape());
    if (!n.grad.empty()) t.storage() = n.grad;
    g.by_id_.emplace_back(static_cast<int>(id), std::move(t));
  }
  return g;
}

Gradients backward(const Var& output) {
  if (!output.valid()) throw StateError("backward on a tensor that was not recorded on a tape");
  return output.tape()->backward(output);
}

// ---- helpers ----

namespace {

Tape& tape_of(const Var& v) {
  if (!v.valid()) throw StateError("operand has no tape");
  return *v.tape();
}

void require_rank2(const Var& v, const char* op) {
  if (v.shape().size() != 2)
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(v.shape()));
}

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

void accumulate(Tape& t, const Var& into, const std::vector<double>& g) {
  if (!into.requires_grad()) return;
  auto& dst = t.grad(into.id());
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

// Views a shape as [outer, axis, inner] around one axis.
struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

}  // namespace

// ---- primitives ----

Var matmul(const Var& a, const Var& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw DimensionError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  Tensor out({m, n});
  kernels::gemm(false, false, m, n, k, a.value().data().data(), b.value().data().data(),
                out.data().data(), false);
  return tape_of(a).record(std::move(out), {a, b}, [a, b, m, n, k](Tape& t, int self) {
    const double* g = t.grad(self).data();
    if (a.requires_grad())  // dA = G B^T
      kernels::gemm(false, true, m, k, n, g, b.value().data().data(), t.grad(a.id()).data(), true);
    if (b.requires_grad())  // dB = A^T G
      kernels::gemm(true, false, k, n, m, a.value().data().data(), g, t.grad(b.id()).data(), true);
  });
}

Var transpose(const Var& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out({n, m});
  const auto& x = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return tape_of(a).record(std::move(out), {a}, [a, m, n](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto& d = t.grad(a.id());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] += g[j * m + i];
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out = a.value();
  const auto& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const auto g = t.grad(self);
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out = a.value();
  const auto& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const auto g = t.grad(self);
    accumulate(t, a, g);
    if (b.requires_grad()) {
      auto& d = t.grad(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out = a.value();
  const auto& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const auto& g = t.grad(self);
    if (a.requires_grad()) {
      auto& d = t.grad(a.id());
      const auto& y = b.value();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * y[i];
    }
    if (b.requires_grad()) {
      auto& d = t.grad(b.id());
      const auto& x = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * x[i];
    }
  });
}

Var add_row(const Var& x, const Var& v) {
  require_rank2(x, "add_row");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (v.value().size() != n)
    throw DimensionError("add_row: " + shape_str(x.shape()) + " with " + shape_str(v.shape()));
  Tensor out = x.value();
  const auto& b = v.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
  return tape_of(x).record(std::move(out), {x, v}, [x, v, m, n](Tape& t, int self) {
    const auto g = t.grad(self);
    accumulate(t, x, g);
    if (v.requires_grad()) {
      auto& d = t.grad(v.id());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d[j] += g[i * n + j];
    }
  });
}

Var mul_row(const Var& x, const Var& v) {
  require_rank2(x, "mul_row");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (v.value().size() != n)
    throw DimensionError("mul_row: " + shape_str(x.shape()) + " with " + shape_str(v.shape()));
  Tensor out = x.value();
  const auto& s = v.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= s[j];
  return tape_of(x).record(std::move(out), {x, v}, [x, v, m, n](Tape& t, int self) {
    const auto& g = t.grad(self);
    if (x.requires_grad()) {
      auto& d = t.grad(x.id());
      const auto& s = v.value();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d[i * n + j] += g[i * n + j] * s[j];
    }
    if (v.requires_grad()) {
      auto& d = t.grad(v.id());
      const auto& xv = x.value();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d[j] += g[i * n + j] * xv[i * n + j];
    }
  });
}

Var scale(const Var& x, double c) {
  Tensor out = x.value();
  for (double& e : out.storage()) e *= c;
  return tape_of(x).record(std::move(out), {x}, [x, c](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto& d = t.grad(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += c * g[i];
  });
}

Var mask_multiply(const Var& x, const Tensor& mask) {
  if (x.shape() != mask.shape())
    throw DimensionError("mask_multiply: " + shape_str(x.shape()) + " vs mask " + shape_str(mask.shape()));
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  auto saved = std::make_shared<const Tensor>(mask);
  return tape_of(x).record(std::move(out), {x}, [x, saved](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto& d = t.grad(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * (*saved)[i];
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.value().size() / n;
  if (gamma.value().size() != n || beta.value().size() != n)
    throw DimensionError("layer_norm: affine parameters must have " + std::to_string(n) + " entries");
  const auto& xv = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data().data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * is;
      (*xhat)[r * n + j] = h;
      out[r * n + j] = gv[j] * h + bv[j];
    }
  }
  return tape_of(x).record(
      std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std, rows, n](Tape& t, int self) {
        const auto& g = t.grad(self);
        const auto& gv = gamma.value();
        if (gamma.requires_grad()) {
          auto& d = t.grad(gamma.id());
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) d[j] += g[r * n + j] * (*xhat)[r * n + j];
        }
        if (beta.requires_grad()) {
          auto& d = t.grad(beta.id());
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) d[j] += g[r * n + j];
        }
        if (x.requires_grad()) {
          auto& d = t.grad(x.id());
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dh = g[r * n + j] * gv[j];
              m1 += dh;
              m2 += dh * (*xhat)[r * n + j];
            }
            m1 *= inv_n;
            m2 *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
              const double dh = g[r * n + j] * gv[j];
              d[r * n + j] += (*inv_std)[r] * (dh - m1 - (*xhat)[r * n + j] * m2);
            }
          }
        }
      });
}

Var gelu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.storage()) v = v * 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, int self) {
    const auto& g = t.grad(self);
    const auto& xv = x.value();
    auto& d = t.grad(x.id());
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      d[i] += g[i] * (cdf + v * pdf);
    }
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.storage()) v = v > 0.0 ? v : 0.0;
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, int self) {
    const auto& g = t.grad(self);
    const auto& xv = x.value();
    auto& d = t.grad(x.id());
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) d[i] += g[i];
  });
}

Var softmax_rows(const Var& x) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.value().size() / n;
  Tensor out = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data().data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      s += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= s;
  }
  Tape& t0 = tape_of(x);
  return t0.record(std::move(out), {x}, [x, rows, n](Tape& t, int self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& d = t.grad(x.id());
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) d[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
    }
  });
}

Var cross_entropy(const Var& logits, int label) {
  const auto& z = logits.value();
  const std::size_t c = z.size();
  if (label < 0 || static_cast<std::size_t>(label) >= c)
    throw InputError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                     std::to_string(c) + ")");
  const double mx = *std::max_element(z.data().begin(), z.data().end());
  double s = 0.0;
  for (double v : z.data()) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  Tensor out = Tensor::scalar(lse - z[static_cast<std::size_t>(label)]);
  return tape_of(logits).record(std::move(out), {logits}, [logits, label, lse](Tape& t, int self) {
    const double g = t.grad(self)[0];
    const auto& zv = logits.value();
    auto& d = t.grad(logits.id());
    for (std::size_t i = 0; i < zv.size(); ++i) {
      const double p = std::exp(zv[i] - lse);
      d[i] += g * (p - (static_cast<int>(i) == label ? 1.0 : 0.0));
    }
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return tape_of(x).record(Tensor::scalar(s), {x}, [x](Tape& t, int self) {
    const double g = t.grad(self)[0];
    auto& d = t.grad(x.id());
    for (double& e : d) e += g;
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return tape_of(x).record(Tensor::scalar(s / n), {x}, [x, n](Tape& t, int self) {
    const double g = t.grad(self)[0] / n;
    auto& d = t.grad(x.id());
    for (double& e : d) e += g;
  });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no operands");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw DimensionError("concat: axis out of range for " + shape_str(s0));
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != s0[i])
        throw DimensionError("concat: " + shape_str(s0) + " vs " + shape_str(s));
    out_shape[axis] += s[axis];
  }
  Tensor out(out_shape);
  const AxisView ov = axis_view(out_shape, axis);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const AxisView pv = axis_view(p.shape(), axis);
    const auto& src = p.value();
    for (std::size_t o = 0; o < pv.outer; ++o)
      std::copy_n(src.data().data() + o * pv.len * pv.inner, pv.len * pv.inner,
                  out.data().data() + (o * ov.len + off) * ov.inner);
    offsets.push_back(off);
    off += pv.len;
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return tape_of(parts[0]).record(std::move(out), parts, [ins, offsets, ov, axis](Tape& t, int self) {
    const auto& g = t.grad(self);
    for (std::size_t k = 0; k < ins.size(); ++k) {
      if (!ins[k].requires_grad()) continue;
      const AxisView pv = axis_view(ins[k].shape(), axis);
      auto& d = t.grad(ins[k].id());
      for (std::size_t o = 0; o < pv.outer; ++o) {
        const double* src = g.data() + (o * ov.len + offsets[k]) * ov.inner;
        double* dst = d.data() + o * pv.len * pv.inner;
        for (std::size_t i = 0; i < pv.len * pv.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size() || begin >= end || end > s[axis])
    throw DimensionError("slice: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") on axis " + std::to_string(axis) + " of " + shape_str(s));
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  const AxisView xv = axis_view(s, axis);
  const std::size_t len = end - begin;
  Tensor out(out_shape);
  const auto& src = x.value();
  for (std::size_t o = 0; o < xv.outer; ++o)
    std::copy_n(src.data().data() + (o * xv.len + begin) * xv.inner, len * xv.inner,
                out.data().data() + o * len * xv.inner);
  return tape_of(x).record(std::move(out), {x}, [x, xv, begin, len](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto& d = t.grad(x.id());
    for (std::size_t o = 0; o < xv.outer; ++o) {
      const double* src = g.data() + o * len * xv.inner;
      double* dst = d.data() + (o * xv.len + begin) * xv.inner;
      for (std::size_t i = 0; i < len * xv.inner; ++i) dst[i] += src[i];
    }
  });
}

Var permute_blocks(const Var& x, std::span<const int> perm) {
  const Shape& s = x.shape();
  const std::size_t blocks = s[0];
  if (perm.size() != blocks)
    throw DimensionError("permute_blocks: permutation of size " + std::to_string(perm.size()) +
                         " for " + shape_str(s));
  std::vector<int> seen(blocks, 0);
  for (int p : perm) {
    if (p < 0 || static_cast<std::size_t>(p) >= blocks || seen[static_cast<std::size_t>(p)]++)
      throw ContractError("permute_blocks: not a permutation");
  }
  const std::size_t stride = x.value().size() / blocks;
  Tensor out(s);
  const auto& src = x.value();
  for (std::size_t i = 0; i < blocks; ++i)
    std::copy_n(src.data().data() + static_cast<std::size_t>(perm[i]) * stride, stride,
                out.data().data() + i * stride);
  std::vector<int> p(perm.begin(), perm.end());
  return tape_of(x).record(std::move(out), {x}, [x, p, stride](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto& d = t.grad(x.id());
    for (std::size_t i = 0; i < p.size(); ++i) {
      double* dst = d.data() + static_cast<std::size_t>(p[i]) * stride;
      const double* src = g.data() + i * stride;
      for (std::size_t k = 0; k < stride; ++k) dst[k] += src[k];
    }
  });
}

Var gather(const Var& x, std::shared_ptr<const std::vector<std::int64_t>> index, Shape out_shape) {
  if (numel(out_shape) != index->size())
    throw DimensionError("gather: index count " + std::to_string(index->size()) + " vs shape " +
                         shape_str(out_shape));
  const auto& src = x.value();
  const auto limit = static_cast<std::int64_t>(src.size());
  Tensor out(out_shape);
  for (std::size_t i = 0; i < index->size(); ++i) {
    const std::int64_t k = (*index)[i];
    if (k >= limit) throw DimensionError("gather: index out of range");
    out[i] = k < 0 ? 0.0 : src[static_cast<std::size_t>(k)];
  }
  return tape_of(x).record(std::move(out), {x}, [x, index](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto& d = t.grad(x.id());
    for (std::size_t i = 0; i < index->size(); ++i) {
      const std::int64_t k = (*index)[i];
      if (k >= 0) d[static_cast<std::size_t>(k)] += g[i];
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, int self) {
    const auto g = t.grad(self);
    accumulate(t, x, g);
  });
}

}  // namespace rvit::ad
