#include "lscm/ops.hpp"

#include <algorithm>
#include <cmath>

#include "lscm/errors.hpp"

namespace lscm {

namespace {

void require_rank(const Var& x, std::size_t rank, const char* op) {
  if (x.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

Tensor& parent_grad(Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }
bool parent_needs(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }
const Tensor& parent_value(const Node& self, std::size_t i) { return self.parents[i]->value; }

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = a[i * k + t];
      if (av == 0.0) continue;
      const double* brow = b + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x k] += g[m x n] * b[k x n]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double* brow = b + t * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
      c[i * k + t] += s;
    }
  }
}

// c[k x n] += a[m x k]^T * g[m x n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = a[i * k + t];
      if (av == 0.0) continue;
      double* crow = c + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

template <typename Fwd, typename Deriv>
Var unary(const Var& x, const char* op, Fwd fwd, Deriv deriv) {
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return make_result(std::move(out), op, {x}, [deriv](Node& self) {
    const Tensor& y = self.value;
    const Tensor& xv = parent_value(self, 0);
    Tensor& gx = parent_grad(self, 0);
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] += self.grad[i] * deriv(xv[i], y[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(1)});
  gemm_nn(a.ptr(), b.ptr(), c.ptr(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected matrix, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor t({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t[j * r + i] = a[i * c + j];
  return t;
}

Var matmul(const Var& a, const Var& b) {
  Tensor c = matmul(a.value(), b.value());
  return make_result(std::move(c), "matmul", {a, b}, [](Node& self) {
    const Tensor& av = parent_value(self, 0);
    const Tensor& bv = parent_value(self, 1);
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (parent_needs(self, 0)) gemm_nt(self.grad.ptr(), bv.ptr(), parent_grad(self, 0).ptr(), m, k, n);
    if (parent_needs(self, 1)) gemm_tn(av.ptr(), self.grad.ptr(), parent_grad(self, 1).ptr(), m, k, n);
  });
}

Var transpose(const Var& a) {
  return make_result(transpose(a.value()), "transpose", {a}, [](Node& self) {
    Tensor& ga = parent_grad(self, 0);
    const std::size_t r = ga.dim(0), c = ga.dim(1);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[j * r + i];
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result(std::move(out), "add", {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!parent_needs(self, p)) continue;
      Tensor& g = parent_grad(self, p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_result(std::move(out), "sub", {a, b}, [](Node& self) {
    if (parent_needs(self, 0)) {
      Tensor& g = parent_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (parent_needs(self, 1)) {
      Tensor& g = parent_grad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result(std::move(out), "mul", {a, b}, [](Node& self) {
    const Tensor& av = parent_value(self, 0);
    const Tensor& bv = parent_value(self, 1);
    if (parent_needs(self, 0)) {
      Tensor& g = parent_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (parent_needs(self, 1)) {
      Tensor& g = parent_grad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * s;
  return make_result(std::move(out), "scale", {a}, [s](Node& self) {
    Tensor& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

Var add_bias(const Var& x, const Var& b) {
  require_rank(b, 1, "add_bias");
  const std::size_t c = b.dim(0);
  if (x.value().rank() == 0 || x.shape().back() != c) {
    throw DimensionError("add_bias: bias " + shape_str(b.shape()) + " does not match " + shape_str(x.shape()));
  }
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i % c];
  return make_result(std::move(out), "add_bias", {x, b}, [c](Node& self) {
    if (parent_needs(self, 0)) {
      Tensor& g = parent_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (parent_needs(self, 1)) {
      Tensor& g = parent_grad(self, 1);
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % c] += self.grad[i];
    }
  });
}

Var tanh(const Var& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(const Var& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var scaled_row_softmax(const Var& x, double scale) {
  require_rank(x, 2, "scaled_row_softmax");
  if (!(scale > 0.0)) throw ContractError("scaled_row_softmax: scale must be positive");
  const std::size_t r = x.dim(0), c = x.dim(1);
  const Tensor& xv = x.value();
  Tensor out(x.shape());
  const double inv = 1.0 / scale;
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = xv.ptr() + i * c;
    double* o = out.ptr() + i * c;
    double mx = in[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, in[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = std::exp((in[j] - mx) * inv);
      z += o[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  return make_result(std::move(out), "scaled_row_softmax", {x}, [r, c, inv](Node& self) {
    Tensor& gx = parent_grad(self, 0);
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = self.value.ptr() + i * c;
      const double* gy = self.grad.ptr() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += y[j] * gy[j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += inv * y[j] * (gy[j] - dot);
    }
  });
}

Var conv2d_same(const Var& x, const Var& w, const Var& b) {
  require_rank(x, 3, "conv2d_same");
  require_rank(w, 4, "conv2d_same");
  require_rank(b, 1, "conv2d_same");
  const std::size_t k = w.dim(0);
  if (k % 2 == 0) throw ConfigError("conv2d_same: kernel size must be odd, got " + std::to_string(k));
  const std::size_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2), cout = w.dim(3);
  if (w.dim(1) != k || w.dim(2) != cin || b.dim(0) != cout) {
    throw DimensionError("conv2d_same: input " + shape_str(x.shape()) + ", kernel " + shape_str(w.shape()) +
                         ", bias " + shape_str(b.shape()));
  }
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  Tensor out({h, wd, cout});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t xx = 0; xx < wd; ++xx) {
      double* o = out.ptr() + (y * wd + xx) * cout;
      std::copy(b.value().ptr(), b.value().ptr() + cout, o);
      for (std::size_t ky = 0; ky < k; ++ky) {
        const auto sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
        if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const auto sx = static_cast<std::ptrdiff_t>(xx + kx) - pad;
          if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(wd)) continue;
          const double* in = xv.ptr() + (static_cast<std::size_t>(sy) * wd + static_cast<std::size_t>(sx)) * cin;
          const double* wk = wv.ptr() + (ky * k + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double a = in[ci];
            if (a == 0.0) continue;
            const double* wr = wk + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) o[co] += a * wr[co];
          }
        }
      }
    }
  }
  return make_result(std::move(out), "conv2d_same", {x, w, b}, [h, wd, cin, cout, k, pad](Node& self) {
    const Tensor& xv = parent_value(self, 0);
    const Tensor& wv = parent_value(self, 1);
    const bool need_x = parent_needs(self, 0), need_w = parent_needs(self, 1), need_b = parent_needs(self, 2);
    double* gx = need_x ? parent_grad(self, 0).ptr() : nullptr;
    double* gw = need_w ? parent_grad(self, 1).ptr() : nullptr;
    if (need_b) {
      double* gb = parent_grad(self, 2).ptr();
      for (std::size_t p = 0; p < h * wd; ++p)
        for (std::size_t co = 0; co < cout; ++co) gb[co] += self.grad[p * cout + co];
    }
    if (!need_x && !need_w) return;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < wd; ++xx) {
        const double* go = self.grad.ptr() + (y * wd + xx) * cout;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const auto sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const auto sx = static_cast<std::ptrdiff_t>(xx + kx) - pad;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(wd)) continue;
            const std::size_t src = (static_cast<std::size_t>(sy) * wd + static_cast<std::size_t>(sx)) * cin;
            const std::size_t woff = (ky * k + kx) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double* wr = wv.ptr() + woff + ci * cout;
              if (need_x) {
                double s = 0.0;
                for (std::size_t co = 0; co < cout; ++co) s += go[co] * wr[co];
                gx[src + ci] += s;
              }
              if (need_w) {
                const double a = xv[src + ci];
                if (a == 0.0) continue;
                double* gwr = gw + woff + ci * cout;
                for (std::size_t co = 0; co < cout; ++co) gwr[co] += a * go[co];
              }
            }
          }
        }
      }
    }
  });
}

Var max_pool_over_rows(const Var& q) {
  require_rank(q, 2, "max_pool_over_rows");
  const std::size_t t = q.dim(0), c = q.dim(1);
  const Tensor& qv = q.value();
  Tensor out({c});
  std::vector<std::size_t> arg(c, 0);
  for (std::size_t j = 0; j < c; ++j) {
    double best = qv[j];
    for (std::size_t i = 1; i < t; ++i) {
      if (qv[i * c + j] > best) {
        best = qv[i * c + j];
        arg[j] = i;
      }
    }
    out[j] = best;
  }
  return make_result(std::move(out), "max_pool_over_rows", {q}, [arg = std::move(arg), c](Node& self) {
    Tensor& g = parent_grad(self, 0);
    for (std::size_t j = 0; j < c; ++j) g[arg[j] * c + j] += self.grad[j];
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const Shape& first = parts[0].shape();
  if (first.empty()) throw DimensionError("concat_channels: scalar input");
  Shape lead(first.begin(), first.end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(lead.begin(), lead.end(), s.begin())) {
      throw DimensionError("concat_channels: " + shape_str(s) + " does not match " + shape_str(first));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  const std::size_t cells = shape_numel(lead);
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = parts[p].value();
    for (std::size_t i = 0; i < cells; ++i)
      std::copy(v.ptr() + i * widths[p], v.ptr() + (i + 1) * widths[p], out.ptr() + i * total + offset);
    offset += widths[p];
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return make_result(std::move(out), "concat_channels", std::move(parents),
                     [widths, cells, total](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t p = 0; p < widths.size(); ++p) {
                         if (parent_needs(self, p)) {
                           Tensor& g = parent_grad(self, p);
                           for (std::size_t i = 0; i < cells; ++i)
                             for (std::size_t c = 0; c < widths[p]; ++c)
                               g[i * widths[p] + c] += self.grad[i * total + offset + c];
                         }
                         offset += widths[p];
                       }
                     });
}

Var concat_channels(std::initializer_list<Var> parts) {
  return concat_channels(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice_channels(const Var& x, std::size_t begin, std::size_t count) {
  const Shape& s = x.shape();
  if (s.empty() || count == 0 || begin + count > s.back()) {
    throw DimensionError("slice_channels: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") out of range for " + shape_str(s));
  }
  const std::size_t c = s.back();
  const std::size_t cells = x.value().size() / c;
  Shape out_shape = s;
  out_shape.back() = count;
  Tensor out(out_shape);
  for (std::size_t i = 0; i < cells; ++i)
    std::copy(x.value().ptr() + i * c + begin, x.value().ptr() + i * c + begin + count, out.ptr() + i * count);
  return make_result(std::move(out), "slice_channels", {x}, [c, cells, begin, count](Node& self) {
    Tensor& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < cells; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * c + begin + j] += self.grad[i * count + j];
  });
}

Var reshape(const Var& x, Shape shape) {
  return make_result(x.value().reshaped(std::move(shape)), "reshape", {x}, [](Node& self) {
    Tensor& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var row(const Var& x, std::size_t i) {
  require_rank(x, 2, "row");
  const std::size_t c = x.dim(1);
  if (i >= x.dim(0)) throw DimensionError("row: index out of range for " + shape_str(x.shape()));
  Tensor out({c});
  std::copy(x.value().ptr() + i * c, x.value().ptr() + (i + 1) * c, out.ptr());
  return make_result(std::move(out), "row", {x}, [i, c](Node& self) {
    Tensor& g = parent_grad(self, 0);
    for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j];
  });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  const std::size_t c = rows[0].value().size();
  Tensor out({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].value().rank() != 1 || rows[i].value().size() != c) {
      throw DimensionError("stack_rows: row " + std::to_string(i) + " has shape " + shape_str(rows[i].shape()));
    }
    std::copy(rows[i].value().ptr(), rows[i].value().ptr() + c, out.ptr() + i * c);
  }
  std::vector<Var> parents(rows.begin(), rows.end());
  return make_result(std::move(out), "stack_rows", std::move(parents), [c](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (!parent_needs(self, i)) continue;
      Tensor& g = parent_grad(self, i);
      for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
    }
  });
}

Var embedding_lookup(const Var& table, std::span<const std::size_t> indices) {
  require_rank(table, 2, "embedding_lookup");
  if (indices.empty()) throw DimensionError("embedding_lookup: empty index list");
  const std::size_t v = table.dim(0), c = table.dim(1);
  Tensor out({indices.size(), c});
  for (std::size_t t = 0; t < indices.size(); ++t) {
    if (indices[t] >= v) throw DimensionError("embedding_lookup: index " + std::to_string(indices[t]) + " >= " + std::to_string(v));
    std::copy(table.value().ptr() + indices[t] * c, table.value().ptr() + (indices[t] + 1) * c, out.ptr() + t * c);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result(std::move(out), "embedding_lookup", {table}, [idx = std::move(idx), c](Node& self) {
    Tensor& g = parent_grad(self, 0);
    for (std::size_t t = 0; t < idx.size(); ++t)
      for (std::size_t j = 0; j < c; ++j) g[idx[t] * c + j] += self.grad[t * c + j];
  });
}

Var tile_spatial(const Var& l, std::size_t h, std::size_t w) {
  require_rank(l, 1, "tile_spatial");
  const std::size_t c = l.dim(0);
  Tensor out({h, w, c});
  for (std::size_t p = 0; p < h * w; ++p) std::copy(l.value().ptr(), l.value().ptr() + c, out.ptr() + p * c);
  return make_result(std::move(out), "tile_spatial", {l}, [h, w, c](Node& self) {
    Tensor& g = parent_grad(self, 0);
    for (std::size_t p = 0; p < h * w; ++p)
      for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[p * c + j];
  });
}

Var pixel_unshuffle(const Var& x, std::size_t f) {
  require_rank(x, 3, "pixel_unshuffle");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (f == 0 || h % f || w % f) {
    throw DimensionError("pixel_unshuffle: factor " + std::to_string(f) + " does not divide " + shape_str(x.shape()));
  }
  const std::size_t oh = h / f, ow = w / f, oc = f * f * c;
  // out[oy][ox][(dy*f + dx)*c + ch] = x[oy*f + dy][ox*f + dx][ch]
  std::vector<std::size_t> src(oh * ow * oc);
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t dy = 0; dy < f; ++dy)
        for (std::size_t dx = 0; dx < f; ++dx)
          for (std::size_t ch = 0; ch < c; ++ch)
            src[(oy * ow + ox) * oc + (dy * f + dx) * c + ch] = ((oy * f + dy) * w + ox * f + dx) * c + ch;
  Tensor out({oh, ow, oc});
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = x.value()[src[i]];
  return make_result(std::move(out), "pixel_unshuffle", {x}, [src = std::move(src)](Node& self) {
    Tensor& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += self.grad[i];
  });
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double w_hi;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t factor) {
  std::vector<Tap> taps(in * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    auto lo = static_cast<std::size_t>(std::floor(src));
    std::size_t hi = std::min(lo + 1, in - 1);
    taps[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Var upsample_bilinear(const Var& x, std::size_t factor) {
  require_rank(x, 3, "upsample_bilinear");
  if (factor == 0) throw ConfigError("upsample_bilinear: factor must be >= 1");
  if (factor == 1) return x;
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t oh = h * factor, ow = w * factor;
  auto ty = bilinear_taps(h, factor);
  auto tx = bilinear_taps(w, factor);
  const Tensor& xv = x.value();
  Tensor out({oh, ow, c});
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t xx = 0; xx < ow; ++xx) {
      const Tap& a = ty[y];
      const Tap& b = tx[xx];
      const double w00 = (1 - a.w_hi) * (1 - b.w_hi), w01 = (1 - a.w_hi) * b.w_hi;
      const double w10 = a.w_hi * (1 - b.w_hi), w11 = a.w_hi * b.w_hi;
      for (std::size_t ch = 0; ch < c; ++ch) {
        out[(y * ow + xx) * c + ch] = w00 * xv[(a.lo * w + b.lo) * c + ch] + w01 * xv[(a.lo * w + b.hi) * c + ch] +
                                      w10 * xv[(a.hi * w + b.lo) * c + ch] + w11 * xv[(a.hi * w + b.hi) * c + ch];
      }
    }
  }
  return make_result(std::move(out), "upsample_bilinear", {x}, [ty, tx, w, c, oh, ow](Node& self) {
    Tensor& g = parent_grad(self, 0);
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const Tap& a = ty[y];
        const Tap& b = tx[xx];
        const double w00 = (1 - a.w_hi) * (1 - b.w_hi), w01 = (1 - a.w_hi) * b.w_hi;
        const double w10 = a.w_hi * (1 - b.w_hi), w11 = a.w_hi * b.w_hi;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double go = self.grad[(y * ow + xx) * c + ch];
          g[(a.lo * w + b.lo) * c + ch] += w00 * go;
          g[(a.lo * w + b.hi) * c + ch] += w01 * go;
          g[(a.hi * w + b.lo) * c + ch] += w10 * go;
          g[(a.hi * w + b.hi) * c + ch] += w11 * go;
        }
      }
    }
  });
}

Var bce_with_logits(const Var& logits, const Tensor& target) {
  if (logits.shape() != target.shape()) {
    throw DimensionError("bce_with_logits: logits " + shape_str(logits.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  const Tensor& lv = logits.value();
  const auto n = static_cast<double>(lv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    const double l = lv[i];
    const double g = target[i];
    total += std::max(l, 0.0) - l * g + std::log1p(std::exp(-std::abs(l)));
  }
  return make_result(Tensor::scalar(total / n), "bce_with_logits", {logits}, [target, n](Node& self) {
    const Tensor& lv = parent_value(self, 0);
    Tensor& g = parent_grad(self, 0);
    const double up = self.grad[0] / n;
    for (std::size_t i = 0; i < lv.size(); ++i) {
      const double l = lv[i];
      const double p = l >= 0 ? 1.0 / (1.0 + std::exp(-l)) : std::exp(l) / (1.0 + std::exp(l));
      g[i] += up * (p - target[i]);
    }
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return make_result(Tensor::scalar(s), "sum", {x}, [](Node& self) {
    Tensor& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

}  // namespace lscm
