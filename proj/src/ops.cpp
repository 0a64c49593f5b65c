#include "mlf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mlf {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got " + shape_str(x.shape()));
  }
}

// Accumulates `g` into input `i` of `self` if that input is on the tape.
template <typename Fn>
void accumulate(detail::Node& self, std::size_t i, Fn&& fn) {
  auto& in = *self.inputs[i];
  if (!in.requires_grad) return;
  fn(in.ensure_grad());
}

// Row-major strides.
std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), "add", {a, b},
                     [](detail::Node& self) {
                       for (std::size_t k = 0; k < 2; ++k) {
                         accumulate(self, k, [&](std::vector<double>& g) {
                           for (std::size_t i = 0; i < g.size(); ++i)
                             g[i] += self.grad[i];
                         });
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), "sub", {a, b},
                     [](detail::Node& self) {
                       accumulate(self, 0, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i];
                       });
                       accumulate(self, 1, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] -= self.grad[i];
                       });
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), "mul", {a, b},
                     [](detail::Node& self) {
                       const auto& x = self.inputs[0]->value;
                       const auto& y = self.inputs[1]->value;
                       accumulate(self, 0, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i] * y[i];
                       });
                       accumulate(self, 1, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i] * x[i];
                       });
                     });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), "scale", {a},
                     [factor](detail::Node& self) {
                       accumulate(self, 0, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += factor * self.grad[i];
                       });
                     });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "add_bias");
  const std::size_t c = bias.dim(0);
  if (x.shape().back() != c) {
    throw DimensionError("add_bias: " + shape_str(x.shape()) + " vs bias " +
                         shape_str(bias.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto b = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % c];
  return make_result(x.shape(), std::move(out), "add_bias", {x, bias},
                     [c](detail::Node& self) {
                       accumulate(self, 0, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i];
                       });
                       accumulate(self, 1, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           g[i % c] += self.grad[i];
                       });
                     });
}

Tensor add_broadcast(const Tensor& x, const Tensor& p) {
  const Shape tail(x.shape().begin() + 1, x.shape().end());
  if (x.rank() < 2 || tail != p.shape()) {
    throw DimensionError("add_broadcast: " + shape_str(x.shape()) + " vs " +
                         shape_str(p.shape()));
  }
  const std::size_t n = p.numel();
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto pv = p.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += pv[i % n];
  return make_result(x.shape(), std::move(out), "add_broadcast", {x, p},
                     [n](detail::Node& self) {
                       accumulate(self, 0, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i];
                       });
                       accumulate(self, 1, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           g[i % n] += self.grad[i];
                       });
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t p = a.dim(0), q = a.dim(1), r = b.dim(1);
  if (b.dim(0) != q) {
    throw DimensionError("matmul: inner dimensions disagree, " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(p * r, 0.0);
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t k = 0; k < q; ++k) {
      const double xv = x[i * q + k];
      const double* yrow = &y[k * r];
      double* orow = &out[i * r];
      for (std::size_t j = 0; j < r; ++j) orow[j] += xv * yrow[j];
    }
  }
  return make_result({p, r}, std::move(out), "matmul", {a, b},
                     [p, q, r](detail::Node& self) {
                       const auto& x = self.inputs[0]->value;
                       const auto& y = self.inputs[1]->value;
                       const auto& go = self.grad;
                       // dA = dC * B^T
                       accumulate(self, 0, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < p; ++i)
                           for (std::size_t k = 0; k < q; ++k) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < r; ++j)
                               acc += go[i * r + j] * y[k * r + j];
                             g[i * q + k] += acc;
                           }
                       });
                       // dB = A^T * dC
                       accumulate(self, 1, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < p; ++i)
                           for (std::size_t k = 0; k < q; ++k) {
                             const double xv = x[i * q + k];
                             for (std::size_t j = 0; j < r; ++j)
                               g[k * r + j] += xv * go[i * r + j];
                           }
                       });
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(weight, 2, "linear");
  const std::size_t out_dim = weight.dim(0), in_dim = weight.dim(1);
  if (x.shape().back() != in_dim) {
    throw DimensionError("linear: input " + shape_str(x.shape()) +
                         " vs weight " + shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) +
                         " vs weight " + shape_str(weight.shape()));
  }
  const std::size_t rows = x.numel() / in_dim;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  std::vector<double> out(rows * out_dim);
  const auto xv = x.data();
  const auto w = weight.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &xv[r * in_dim];
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wr = &w[o * in_dim];
      double acc = bias.defined() ? bias.data()[o] : 0.0;
      for (std::size_t i = 0; i < in_dim; ++i) acc += xr[i] * wr[i];
      out[r * out_dim + o] = acc;
    }
  }
  auto backward = [rows, in_dim, out_dim](detail::Node& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& w = self.inputs[1]->value;
    const auto& go = self.grad;
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t r = 0; r < rows; ++r) {
        double* gr = &g[r * in_dim];
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double d = go[r * out_dim + o];
          if (d == 0.0) continue;
          const double* wr = &w[o * in_dim];
          for (std::size_t i = 0; i < in_dim; ++i) gr[i] += d * wr[i];
        }
      }
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = &xv[r * in_dim];
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double d = go[r * out_dim + o];
          if (d == 0.0) continue;
          double* gw = &g[o * in_dim];
          for (std::size_t i = 0; i < in_dim; ++i) gw[i] += d * xr[i];
        }
      }
    });
    if (self.inputs.size() > 2) {
      accumulate(self, 2, [&](std::vector<double>& g) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t o = 0; o < out_dim; ++o)
            g[o] += go[r * out_dim + o];
      });
    }
  };
  if (bias.defined()) {
    return make_result(std::move(out_shape), std::move(out), "linear",
                       {x, weight, bias}, backward);
  }
  return make_result(std::move(out_shape), std::move(out), "linear",
                     {x, weight}, backward);
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::size_t batch = a.dim(0), p = a.dim(1), q = a.dim(2);
  const std::size_t r = transpose_b ? b.dim(1) : b.dim(2);
  const std::size_t bq = transpose_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != batch || bq != q) {
    throw DimensionError("bmm: incompatible " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) +
                         (transpose_b ? " (transposed)" : ""));
  }
  std::vector<double> out(batch * p * r, 0.0);
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t n = 0; n < batch; ++n) {
    const double* xa = &x[n * p * q];
    const double* yb = &y[n * q * r];
    double* ob = &out[n * p * r];
    for (std::size_t i = 0; i < p; ++i) {
      if (transpose_b) {
        for (std::size_t j = 0; j < r; ++j) {
          double acc = 0.0;
          for (std::size_t k = 0; k < q; ++k) acc += xa[i * q + k] * yb[j * q + k];
          ob[i * r + j] = acc;
        }
      } else {
        for (std::size_t k = 0; k < q; ++k) {
          const double xv = xa[i * q + k];
          for (std::size_t j = 0; j < r; ++j) ob[i * r + j] += xv * yb[k * r + j];
        }
      }
    }
  }
  return make_result(
      {batch, p, r}, std::move(out), "bmm", {a, b},
      [batch, p, q, r, transpose_b](detail::Node& self) {
        const auto& x = self.inputs[0]->value;
        const auto& y = self.inputs[1]->value;
        const auto& go = self.grad;
        accumulate(self, 0, [&](std::vector<double>& g) {
          for (std::size_t n = 0; n < batch; ++n) {
            const double* yb = &y[n * q * r];
            const double* gb = &go[n * p * r];
            double* ga = &g[n * p * q];
            for (std::size_t i = 0; i < p; ++i)
              for (std::size_t j = 0; j < r; ++j) {
                const double d = gb[i * r + j];
                if (transpose_b) {
                  for (std::size_t k = 0; k < q; ++k) ga[i * q + k] += d * yb[j * q + k];
                } else {
                  for (std::size_t k = 0; k < q; ++k) ga[i * q + k] += d * yb[k * r + j];
                }
              }
          }
        });
        accumulate(self, 1, [&](std::vector<double>& g) {
          for (std::size_t n = 0; n < batch; ++n) {
            const double* xa = &x[n * p * q];
            const double* gb = &go[n * p * r];
            double* gy = &g[n * q * r];
            for (std::size_t i = 0; i < p; ++i)
              for (std::size_t j = 0; j < r; ++j) {
                const double d = gb[i * r + j];
                if (transpose_b) {
                  for (std::size_t k = 0; k < q; ++k) gy[j * q + k] += d * xa[i * q + k];
                } else {
                  for (std::size_t k = 0; k < q; ++k) gy[k * r + j] += d * xa[i * q + k];
                }
              }
          }
        });
      });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) +
                         " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), "reshape", {x},
                     [](detail::Node& self) {
                       accumulate(self, 0, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i];
                       });
                     });
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) {
    throw DimensionError("transpose_last2: rank < 2 " + shape_str(x.shape()));
  }
  std::vector<std::size_t> perm(x.rank());
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[x.rank() - 1], perm[x.rank() - 2]);
  return permute(x, perm);
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const auto& in_shape = x.shape();
  const std::size_t rank = in_shape.size();
  if (perm.size() != rank) {
    throw DimensionError("permute: rank mismatch for " + shape_str(in_shape));
  }
  std::vector<bool> used(rank, false);
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (perm[i] >= rank || used[perm[i]]) {
      throw DimensionError("permute: invalid axis permutation");
    }
    used[perm[i]] = true;
    out_shape[i] = in_shape[perm[i]];
  }
  const auto in_strides = strides_of(in_shape);
  // source offset for every output position
  const std::size_t n = x.numel();
  auto gather = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < rank; ++i) src += idx[i] * in_strides[perm[i]];
    (*gather)[flat] = src;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(n);
  const auto v = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = v[(*gather)[i]];
  return make_result(std::move(out_shape), std::move(out), "permute", {x},
                     [gather](detail::Node& self) {
                       accumulate(self, 0, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           g[(*gather)[i]] += self.grad[i];
                       });
                     });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != first.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw DimensionError("concat: inconsistent shapes " + shape_str(first) +
                             " and " + shape_str(s));
      }
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(p.shape()[axis] * inner);
  const std::size_t row = out_shape[axis] * inner;

  std::vector<double> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(&v[o * widths[k]], widths[k], &out[o * row + offset]);
    }
    offset += widths[k];
  }
  return make_result(std::move(out_shape), std::move(out), "concat", parts,
                     [outer, row, widths](detail::Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         accumulate(self, k, [&](std::vector<double>& g) {
                           for (std::size_t o = 0; o < outer; ++o)
                             for (std::size_t i = 0; i < widths[k]; ++i)
                               g[o * widths[k] + i] += self.grad[o * row + off + i];
                         });
                         off += widths[k];
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t length) {
  const auto& s = x.shape();
  if (axis >= s.size() || length == 0 || start + length > s[axis]) {
    throw DimensionError("slice: [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") on axis " +
                         std::to_string(axis) + " of " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t in_row = s[axis] * inner;
  const std::size_t out_row = length * inner;
  const std::size_t off = start * inner;
  Shape out_shape = s;
  out_shape[axis] = length;
  std::vector<double> out(outer * out_row);
  const auto v = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(&v[o * in_row + off], out_row, &out[o * out_row]);
  }
  return make_result(std::move(out_shape), std::move(out), "slice", {x},
                     [outer, in_row, out_row, off](detail::Node& self) {
                       accumulate(self, 0, [&](std::vector<double>& g) {
                         for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t i = 0; i < out_row; ++i)
                             g[o * in_row + off + i] += self.grad[o * out_row + i];
                       });
                     });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) +
                         " out of range for " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  std::vector<double> out(x.numel());
  const auto v = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, v[base + k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(v[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= total;
    }
  }
  return make_result(s, std::move(out), "softmax", {x},
                     [outer, inner, len](detail::Node& self) {
                       const auto& y = self.value;
                       accumulate(self, 0, [&](std::vector<double>& g) {
                         for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t in = 0; in < inner; ++in) {
                             const std::size_t base = o * len * inner + in;
                             double dot = 0.0;
                             for (std::size_t k = 0; k < len; ++k)
                               dot += self.grad[base + k * inner] * y[base + k * inner];
                             for (std::size_t k = 0; k < len; ++k) {
                               const std::size_t i = base + k * inner;
                               g[i] += y[i] * (self.grad[i] - dot);
                             }
                           }
                       });
                     });
}

Tensor activate(const Tensor& x, Activation kind) {
  std::vector<double> out(x.data().begin(), x.data().end());
  const char* name = "tanh";
  switch (kind) {
    case Activation::kTanh:
      for (auto& v : out) v = std::tanh(v);
      break;
    case Activation::kSigmoid:
      name = "sigmoid";
      for (auto& v : out) v = 1.0 / (1.0 + std::exp(-v));
      break;
    case Activation::kRelu:
      name = "relu";
      for (auto& v : out) v = v > 0.0 ? v : 0.0;
      break;
  }
  return make_result(x.shape(), std::move(out), name, {x},
                     [kind](detail::Node& self) {
                       const auto& y = self.value;
                       accumulate(self, 0, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           double d = 0.0;
                           switch (kind) {
                             case Activation::kTanh: d = 1.0 - y[i] * y[i]; break;
                             case Activation::kSigmoid: d = y[i] * (1.0 - y[i]); break;
                             case Activation::kRelu: d = y[i] > 0.0 ? 1.0 : 0.0; break;
                           }
                           g[i] += d * self.grad[i];
                         }
                       });
                     });
}

Tensor batch_norm(const Tensor& x, std::size_t channel_axis,
                  const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training) {
  const auto& s = x.shape();
  if (channel_axis >= s.size()) throw DimensionError("batch_norm: bad axis");
  const std::size_t channels = s[channel_axis];
  if (gamma.numel() != channels || beta.numel() != channels ||
      state.running_mean.size() != channels ||
      state.running_var.size() != channels) {
    throw DimensionError("batch_norm: parameters do not match " +
                         std::to_string(channels) + " channels of " +
                         shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < channel_axis; ++i) outer *= s[i];
  for (std::size_t i = channel_axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t count = outer * inner;
  const auto v = x.data();
  auto at = [&](std::size_t o, std::size_t c, std::size_t in) {
    return (o * channels + c) * inner + in;
  };

  std::vector<double> mean(channels), inv_std(channels);
  if (training) {
    if (count < 2) {
      throw DimensionError("batch_norm: training mode needs more than one value per channel");
    }
    for (std::size_t c = 0; c < channels; ++c) {
      double m = 0.0;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) m += v[at(o, c, in)];
      m /= static_cast<double>(count);
      double var = 0.0;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          const double d = v[at(o, c, in)] - m;
          var += d * d;
        }
      var /= static_cast<double>(count);
      mean[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + kBatchNormEps);
      const double unbiased = var * static_cast<double>(count) /
                              static_cast<double>(count - 1);
      state.running_mean[c] = (1.0 - kBatchNormMomentum) * state.running_mean[c] +
                              kBatchNormMomentum * m;
      state.running_var[c] = (1.0 - kBatchNormMomentum) * state.running_var[c] +
                             kBatchNormMomentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = state.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + kBatchNormEps);
    }
  }

  const auto gv = gamma.data();
  const auto bv = beta.data();
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t in = 0; in < inner; ++in) {
        const auto i = at(o, c, in);
        (*xhat)[i] = (v[i] - mean[c]) * inv_std[c];
        out[i] = gv[c] * (*xhat)[i] + bv[c];
      }

  return make_result(
      s, std::move(out), "batch_norm", {x, gamma, beta},
      [xhat, inv_std, outer, inner, channels, count, training](detail::Node& self) {
        const auto& gamma_v = self.inputs[1]->value;
        const auto& go = self.grad;
        auto at = [&](std::size_t o, std::size_t c, std::size_t in) {
          return (o * channels + c) * inner + in;
        };
        std::vector<double> sum_g(channels, 0.0), sum_gx(channels, 0.0);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t in = 0; in < inner; ++in) {
              const auto i = at(o, c, in);
              sum_g[c] += go[i];
              sum_gx[c] += go[i] * (*xhat)[i];
            }
        accumulate(self, 1, [&](std::vector<double>& g) {
          for (std::size_t c = 0; c < channels; ++c) g[c] += sum_gx[c];
        });
        accumulate(self, 2, [&](std::vector<double>& g) {
          for (std::size_t c = 0; c < channels; ++c) g[c] += sum_g[c];
        });
        accumulate(self, 0, [&](std::vector<double>& g) {
          const double n = static_cast<double>(count);
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t c = 0; c < channels; ++c)
              for (std::size_t in = 0; in < inner; ++in) {
                const auto i = at(o, c, in);
                if (training) {
                  g[i] += gamma_v[c] * inv_std[c] / n *
                          (n * go[i] - sum_g[c] - (*xhat)[i] * sum_gx[c]);
                } else {
                  g[i] += gamma_v[c] * inv_std[c] * go[i];
                }
              }
        });
      });
}

Tensor conv1d_same(const Tensor& x, const Tensor& weight) {
  require_rank(x, 3, "conv1d");
  require_rank(weight, 3, "conv1d");
  const std::size_t batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const std::size_t filters = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin) {
    throw DimensionError("conv1d: input " + shape_str(x.shape()) +
                         " vs kernel " + shape_str(weight.shape()));
  }
  if (k % 2 == 0) throw DimensionError("conv1d: kernel size must be odd");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const auto xv = x.data();
  const auto w = weight.data();
  std::vector<double> out(batch * filters * len, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t f = 0; f < filters; ++f)
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t j = 0; j < k; ++j) {
          const double wv = w[(f * cin + c) * k + j];
          const double* xr = &xv[(b * cin + c) * len];
          double* orow = &out[(b * filters + f) * len];
          for (std::size_t t = 0; t < len; ++t) {
            const auto src = static_cast<std::ptrdiff_t>(t + j) - pad;
            if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) orow[t] += wv * xr[src];
          }
        }
  return make_result(
      {batch, filters, len}, std::move(out), "conv1d", {x, weight},
      [batch, cin, len, filters, k, pad](detail::Node& self) {
        const auto& xv = self.inputs[0]->value;
        const auto& w = self.inputs[1]->value;
        const auto& go = self.grad;
        auto each = [&](auto&& fn) {
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t f = 0; f < filters; ++f)
              for (std::size_t c = 0; c < cin; ++c)
                for (std::size_t j = 0; j < k; ++j)
                  for (std::size_t t = 0; t < len; ++t) {
                    const auto src = static_cast<std::ptrdiff_t>(t + j) - pad;
                    if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
                    fn((b * cin + c) * len + static_cast<std::size_t>(src),
                       (f * cin + c) * k + j, (b * filters + f) * len + t);
                  }
        };
        accumulate(self, 0, [&](std::vector<double>& g) {
          each([&](std::size_t xi, std::size_t wi, std::size_t oi) { g[xi] += w[wi] * go[oi]; });
        });
        accumulate(self, 1, [&](std::vector<double>& g) {
          each([&](std::size_t xi, std::size_t wi, std::size_t oi) { g[wi] += xv[xi] * go[oi]; });
        });
      });
}

Tensor max_pool1d(const Tensor& x, std::size_t window) {
  const auto& s = x.shape();
  const std::size_t len = s.back();
  if (window == 0 || len < window) {
    throw DimensionError("max_pool1d: length " + std::to_string(len) +
                         " shorter than window " + std::to_string(window));
  }
  const std::size_t out_len = len / window;
  const std::size_t rows = x.numel() / len;
  Shape out_shape = s;
  out_shape.back() = out_len;
  auto argmax = std::make_shared<std::vector<std::size_t>>(rows * out_len);
  std::vector<double> out(rows * out_len);
  const auto v = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < out_len; ++t) {
      std::size_t best = r * len + t * window;
      for (std::size_t j = 1; j < window; ++j) {
        const std::size_t i = r * len + t * window + j;
        if (v[i] > v[best]) best = i;
      }
      (*argmax)[r * out_len + t] = best;
      out[r * out_len + t] = v[best];
    }
  return make_result(std::move(out_shape), std::move(out), "max_pool1d", {x},
                     [argmax](detail::Node& self) {
                       accumulate(self, 0, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           g[(*argmax)[i]] += self.grad[i];
                       });
                     });
}

Tensor conv_bn_pool(const Tensor& x, ConvBnPoolParams& params, bool training) {
  if (x.rank() != 3 || x.dim(2) < 2) {
    throw DimensionError("conv_bn_pool: degenerate input " + shape_str(x.shape()) +
                         ", need [B, C, T] with T >= 2");
  }
  auto h = conv1d_same(x, params.conv_weight);
  h = batch_norm(h, 1, params.bn_gamma, params.bn_beta, params.bn_state, training);
  return max_pool1d(h, 2);
}

Tensor sum(const Tensor& x) {
  const auto v = x.data();
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  return make_result({1}, {total}, "sum", {x}, [](detail::Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (auto& gi : g) gi += self.grad[0];
    });
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse");
  const auto p = pred.data();
  const auto t = target.data();
  const double n = static_cast<double>(pred.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    acc += d * d;
  }
  return make_result({1}, {acc / n}, "mse", {pred, target},
                     [n](detail::Node& self) {
                       const auto& p = self.inputs[0]->value;
                       const auto& t = self.inputs[1]->value;
                       const double c = 2.0 * self.grad[0] / n;
                       accumulate(self, 0, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * (p[i] - t[i]);
                       });
                       accumulate(self, 1, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] -= c * (p[i] - t[i]);
                       });
                     });
}

Tensor average(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("average: no inputs");
  Tensor total = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) total = add(total, parts[i]);
  return parts.size() == 1 ? total
                           : scale(total, 1.0 / static_cast<double>(parts.size()));
}

}  // namespace mlf
