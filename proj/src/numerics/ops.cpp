#include "focusmix/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "focusmix/numerics/kernels.hpp"

namespace focusmix::numerics {
namespace {

template <typename T>
bool any_needs(const Graph<T>& g, std::initializer_list<Var> vars) {
  for (Var v : vars)
    if (v.valid() && g.needs_grad(v)) return true;
  return false;
}

template <typename T>
bool wants(const Graph<T>& g, Var v) {
  return v.valid() && g.needs_grad(v);
}

std::string both(const char* op, const Shape& a, const Shape& b) {
  return std::string(op) + ": " + shape_string(a) + " vs " + shape_string(b);
}

template <typename T>
void require_matrix(const Tensor<T>& t, std::size_t rows, std::size_t cols, const char* op,
                    const Shape& other) {
  if (t.rank() != 2 || t.dim(0) != rows || t.dim(1) != cols)
    throw DimensionError(both(op, t.shape(), other));
}

template <typename T>
void require_vector(const Tensor<T>& t, std::size_t n, const char* op, const Shape& other) {
  if (t.rank() != 1 || t.size() != n) throw DimensionError(both(op, t.shape(), other));
}

template <typename T>
T stable_sigmoid(T x) {
  T s;
  if (x >= T{0}) {
    s = T{1} / (T{1} + std::exp(-x));
  } else {
    const T e = std::exp(x);
    s = e / (T{1} + e);
  }
  // Keep the open interval even where the exponential saturates.
  constexpr T lo = std::numeric_limits<T>::min();
  const T hi = std::nextafter(T{1}, T{0});
  return std::clamp(s, lo, hi);
}

}  // namespace

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

template <typename T>
Var affine(Graph<T>& g, Var x, Var W, Var b) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& Wv = g.value(W);
  if (xv.rank() != 1 || Wv.rank() != 2 || Wv.dim(1) != xv.size())
    throw DimensionError(both("affine W/x", Wv.shape(), xv.shape()));
  const std::size_t m = Wv.dim(0), n = Wv.dim(1);
  Tensor<T> y(Shape{m});
  if (b.valid()) {
    const Tensor<T>& bv = g.value(b);
    require_vector(bv, m, "affine b/W", Wv.shape());
    std::copy(bv.data(), bv.data() + m, y.data());
  }
  kernels::gemv_acc(Wv.data(), xv.data(), y.data(), m, n);
  return g.push(std::move(y), any_needs(g, {x, W, b}), [x, W, b, m, n](Graph<T>& g, Var self) {
    const T* gy = g.grad(self).data();
    if (wants(g, W)) kernels::ger_acc(g.grad(W).data(), gy, g.value(x).data(), m, n);
    if (wants(g, x)) kernels::gemv_t_acc(g.value(W).data(), gy, g.grad(x).data(), m, n);
    if (wants(g, b)) kernels::axpy(T{1}, gy, g.grad(b).data(), m);
  });
}

template <typename T>
Var linear(Graph<T>& g, Var x, Var W) {
  return affine(g, x, W, Var{});
}

template <typename T>
Var linear_rows(Graph<T>& g, Var X, Var W) {
  const Tensor<T>& Xv = g.value(X);
  const Tensor<T>& Wv = g.value(W);
  if (Xv.rank() != 2 || Wv.rank() != 2 || Wv.dim(1) != Xv.dim(1))
    throw DimensionError(both("linear_rows W/X", Wv.shape(), Xv.shape()));
  const std::size_t S = Xv.dim(0), n = Xv.dim(1), m = Wv.dim(0);
  Tensor<T> Y(Shape{S, m});
  for (std::size_t i = 0; i < S; ++i)
    kernels::gemv_acc(Wv.data(), Xv.data() + i * n, Y.data() + i * m, m, n);
  return g.push(std::move(Y), any_needs(g, {X, W}), [X, W, S, n, m](Graph<T>& g, Var self) {
    const T* gY = g.grad(self).data();
    const T* Xd = g.value(X).data();
    if (wants(g, W)) {
      T* gW = g.grad(W).data();
      for (std::size_t i = 0; i < S; ++i) kernels::ger_acc(gW, gY + i * m, Xd + i * n, m, n);
    }
    if (wants(g, X)) {
      T* gX = g.grad(X).data();
      const T* Wd = g.value(W).data();
      for (std::size_t i = 0; i < S; ++i) kernels::gemv_t_acc(Wd, gY + i * m, gX + i * n, m, n);
    }
  });
}

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  require_same_shape(av.shape(), bv.shape(), "add");
  Tensor<T> y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return g.push(std::move(y), any_needs(g, {a, b}), [a, b](Graph<T>& g, Var self) {
    const Tensor<T>& gy = g.grad(self);
    if (wants(g, a)) kernels::axpy(T{1}, gy.data(), g.grad(a).data(), gy.size());
    if (wants(g, b)) kernels::axpy(T{1}, gy.data(), g.grad(b).data(), gy.size());
  });
}

template <typename T>
Var add_row_broadcast(Graph<T>& g, Var X, Var b) {
  const Tensor<T>& Xv = g.value(X);
  const Tensor<T>& bv = g.value(b);
  if (Xv.rank() != 2 || bv.rank() != 1 || bv.size() != Xv.dim(1))
    throw DimensionError(both("add_row_broadcast X/b", Xv.shape(), bv.shape()));
  const std::size_t S = Xv.dim(0), m = Xv.dim(1);
  Tensor<T> Y = Xv;
  for (std::size_t i = 0; i < S; ++i) kernels::axpy(T{1}, bv.data(), Y.data() + i * m, m);
  return g.push(std::move(Y), any_needs(g, {X, b}), [X, b, S, m](Graph<T>& g, Var self) {
    const T* gY = g.grad(self).data();
    if (wants(g, X)) kernels::axpy(T{1}, gY, g.grad(X).data(), S * m);
    if (wants(g, b)) {
      T* gb = g.grad(b).data();
      for (std::size_t i = 0; i < S; ++i) kernels::axpy(T{1}, gY + i * m, gb, m);
    }
  });
}

template <typename T>
Var scale(Graph<T>& g, Var x, T factor) {
  Tensor<T> y = g.value(x);
  for (auto& v : y.values()) v *= factor;
  return g.push(std::move(y), any_needs(g, {x}), [x, factor](Graph<T>& g, Var self) {
    const Tensor<T>& gy = g.grad(self);
    kernels::axpy(factor, gy.data(), g.grad(x).data(), gy.size());
  });
}

template <typename T>
Var sum_all(Graph<T>& g, std::span<const Var> xs) {
  T total{0};
  bool needs = false;
  for (Var v : xs) {
    for (T x : g.value(v).values()) total += x;
    needs = needs || g.needs_grad(v);
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  return g.push(Tensor<T>::scalar(total), needs, [inputs](Graph<T>& g, Var self) {
    const T gs = g.grad(self)[0];
    for (Var v : inputs) {
      if (!g.needs_grad(v)) continue;
      for (auto& x : g.grad(v).values()) x += gs;
    }
  });
}

template <typename T>
Var sigmoid(Graph<T>& g, Var x) {
  Tensor<T> y = g.value(x);
  for (auto& v : y.values()) v = stable_sigmoid(v);
  return g.push(std::move(y), any_needs(g, {x}), [x](Graph<T>& g, Var self) {
    const Tensor<T>& s = g.value(self);
    const Tensor<T>& gy = g.grad(self);
    Tensor<T>& gx = g.grad(x);
    for (std::size_t i = 0; i < s.size(); ++i) gx[i] += gy[i] * s[i] * (T{1} - s[i]);
  });
}

template <typename T>
Var tanh(Graph<T>& g, Var x) {
  Tensor<T> y = g.value(x);
  for (auto& v : y.values()) v = std::tanh(v);
  return g.push(std::move(y), any_needs(g, {x}), [x](Graph<T>& g, Var self) {
    const Tensor<T>& t = g.value(self);
    const Tensor<T>& gy = g.grad(self);
    Tensor<T>& gx = g.grad(x);
    for (std::size_t i = 0; i < t.size(); ++i) gx[i] += gy[i] * (T{1} - t[i] * t[i]);
  });
}

template <typename T>
Var concat(Graph<T>& g, std::span<const Var> parts) {
  std::size_t total = 0;
  bool needs = false;
  for (Var p : parts) {
    const Tensor<T>& pv = g.value(p);
    if (pv.rank() != 1) throw DimensionError(both("concat part", pv.shape(), Shape{total}));
    total += pv.size();
    needs = needs || g.needs_grad(p);
  }
  Tensor<T> y(Shape{total});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor<T>& pv = g.value(p);
    std::copy(pv.data(), pv.data() + pv.size(), y.data() + off);
    off += pv.size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.push(std::move(y), needs, [inputs](Graph<T>& g, Var self) {
    const T* gy = g.grad(self).data();
    std::size_t off = 0;
    for (Var p : inputs) {
      const std::size_t n = g.value(p).size();
      if (g.needs_grad(p)) kernels::axpy(T{1}, gy + off, g.grad(p).data(), n);
      off += n;
    }
  });
}

template <typename T>
Var concat_cols(Graph<T>& g, Var A, Var B) {
  const Tensor<T>& Av = g.value(A);
  const Tensor<T>& Bv = g.value(B);
  if (Av.rank() != 2 || Bv.rank() != 2 || Av.dim(0) != Bv.dim(0))
    throw DimensionError(both("concat_cols", Av.shape(), Bv.shape()));
  const std::size_t S = Av.dim(0), p = Av.dim(1), q = Bv.dim(1);
  Tensor<T> Y(Shape{S, p + q});
  for (std::size_t i = 0; i < S; ++i) {
    std::copy(Av.data() + i * p, Av.data() + (i + 1) * p, Y.data() + i * (p + q));
    std::copy(Bv.data() + i * q, Bv.data() + (i + 1) * q, Y.data() + i * (p + q) + p);
  }
  return g.push(std::move(Y), any_needs(g, {A, B}), [A, B, S, p, q](Graph<T>& g, Var self) {
    const T* gY = g.grad(self).data();
    if (wants(g, A)) {
      T* gA = g.grad(A).data();
      for (std::size_t i = 0; i < S; ++i) kernels::axpy(T{1}, gY + i * (p + q), gA + i * p, p);
    }
    if (wants(g, B)) {
      T* gB = g.grad(B).data();
      for (std::size_t i = 0; i < S; ++i)
        kernels::axpy(T{1}, gY + i * (p + q) + p, gB + i * q, q);
    }
  });
}

template <typename T>
Var row(Graph<T>& g, Var X, std::size_t r) {
  const Tensor<T>& Xv = g.value(X);
  if (Xv.rank() != 2) throw DimensionError(both("row", Xv.shape(), Shape{r}));
  if (r >= Xv.dim(0)) throw IndexError("row " + std::to_string(r) + " of " + shape_string(Xv.shape()));
  const std::size_t n = Xv.dim(1);
  Tensor<T> y(Shape{n});
  std::copy(Xv.data() + r * n, Xv.data() + (r + 1) * n, y.data());
  return g.push(std::move(y), any_needs(g, {X}), [X, r, n](Graph<T>& g, Var self) {
    kernels::axpy(T{1}, g.grad(self).data(), g.grad(X).data() + r * n, n);
  });
}

template <typename T>
Var stack_rows(Graph<T>& g, std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  const std::size_t n = g.value(rows[0]).size();
  bool needs = false;
  Tensor<T> Y(Shape{rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor<T>& rv = g.value(rows[i]);
    if (rv.rank() != 1 || rv.size() != n)
      throw DimensionError(both("stack_rows", rv.shape(), Shape{n}));
    std::copy(rv.data(), rv.data() + n, Y.data() + i * n);
    needs = needs || g.needs_grad(rows[i]);
  }
  std::vector<Var> inputs(rows.begin(), rows.end());
  return g.push(std::move(Y), needs, [inputs, n](Graph<T>& g, Var self) {
    const T* gY = g.grad(self).data();
    for (std::size_t i = 0; i < inputs.size(); ++i)
      if (g.needs_grad(inputs[i])) kernels::axpy(T{1}, gY + i * n, g.grad(inputs[i]).data(), n);
  });
}

template <typename T>
Var slice(Graph<T>& g, Var x, std::size_t offset, std::size_t length) {
  const Tensor<T>& xv = g.value(x);
  if (xv.rank() != 1 || offset + length > xv.size())
    throw DimensionError(both("slice", xv.shape(), Shape{offset, length}));
  Tensor<T> y(Shape{length});
  std::copy(xv.data() + offset, xv.data() + offset + length, y.data());
  return g.push(std::move(y), any_needs(g, {x}), [x, offset, length](Graph<T>& g, Var self) {
    kernels::axpy(T{1}, g.grad(self).data(), g.grad(x).data() + offset, length);
  });
}

template <typename T>
Var reshape(Graph<T>& g, Var x, Shape shape) {
  const Tensor<T>& xv = g.value(x);
  if (shape_size(shape) != xv.size()) throw DimensionError(both("reshape", xv.shape(), shape));
  Tensor<T> y(std::move(shape), xv.storage());
  return g.push(std::move(y), any_needs(g, {x}), [x](Graph<T>& g, Var self) {
    const Tensor<T>& gy = g.grad(self);
    kernels::axpy(T{1}, gy.data(), g.grad(x).data(), gy.size());
  });
}

template <typename T>
Var embedding_lookup(Graph<T>& g, Var E, std::span<const int> ids) {
  const Tensor<T>& Ev = g.value(E);
  if (Ev.rank() != 2) throw DimensionError(both("embedding_lookup", Ev.shape(), Shape{ids.size()}));
  const std::size_t V = Ev.dim(0), d = Ev.dim(1);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= V)
      throw IndexError("embedding id " + std::to_string(id) + " out of range [0, " +
                       std::to_string(V) + ")");
  }
  Tensor<T> Y(Shape{ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy(Ev.data() + ids[i] * d, Ev.data() + (ids[i] + 1) * d, Y.data() + i * d);
  std::vector<int> rows(ids.begin(), ids.end());
  return g.push(std::move(Y), any_needs(g, {E}), [E, rows, d](Graph<T>& g, Var self) {
    const T* gY = g.grad(self).data();
    T* gE = g.grad(E).data();
    for (std::size_t i = 0; i < rows.size(); ++i) kernels::axpy(T{1}, gY + i * d, gE + rows[i] * d, d);
  });
}

template <typename T>
GruVars gru_vars(Graph<T>& g, const ParamStore<T>& store, const std::string& prefix) {
  auto p = [&](const char* n) { return g.param(store, prefix + "." + n); };
  return GruVars{p("W_r"), p("W_z"), p("W_n"), p("U_r"), p("U_z"), p("U_n"),
                 p("b_r"), p("b_z"), p("b_n")};
}

template <typename T>
void init_gru(ParamStore<T>& store, const std::string& prefix, std::size_t d_in,
              std::size_t d_h, Rng& rng) {
  const double a_in = glorot_bound(d_in, d_h);
  const double a_h = glorot_bound(d_h, d_h);
  for (const char* n : {"W_r", "W_z", "W_n"}) store.add_uniform(prefix + "." + n, {d_h, d_in}, a_in, rng);
  for (const char* n : {"U_r", "U_z", "U_n"}) store.add_uniform(prefix + "." + n, {d_h, d_h}, a_h, rng);
  for (const char* n : {"b_r", "b_z", "b_n"}) store.add_zeros(prefix + "." + n, {d_h});
}

template <typename T>
Var gru_step(Graph<T>& g, const GruVars& p, Var x, Var h) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& hv = g.value(h);
  if (xv.rank() != 1 || hv.rank() != 1)
    throw DimensionError(both("gru_step x/h", xv.shape(), hv.shape()));
  const std::size_t din = xv.size(), dh = hv.size();
  for (Var W : {p.W_r, p.W_z, p.W_n}) require_matrix(g.value(W), dh, din, "gru_step W/x", xv.shape());
  for (Var U : {p.U_r, p.U_z, p.U_n}) require_matrix(g.value(U), dh, dh, "gru_step U/h", hv.shape());
  for (Var b : {p.b_r, p.b_z, p.b_n}) require_vector(g.value(b), dh, "gru_step b/h", hv.shape());

  // cache layout: r | z | n | r*h
  std::vector<T> cache(4 * dh);
  T* r = cache.data();
  T* z = r + dh;
  T* n = z + dh;
  T* rh = n + dh;
  const T* xd = xv.data();
  const T* hd = hv.data();
  std::copy_n(g.value(p.b_r).data(), dh, r);
  std::copy_n(g.value(p.b_z).data(), dh, z);
  std::copy_n(g.value(p.b_n).data(), dh, n);
  kernels::gemv_acc(g.value(p.W_r).data(), xd, r, dh, din);
  kernels::gemv_acc(g.value(p.U_r).data(), hd, r, dh, dh);
  kernels::gemv_acc(g.value(p.W_z).data(), xd, z, dh, din);
  kernels::gemv_acc(g.value(p.U_z).data(), hd, z, dh, dh);
  for (std::size_t i = 0; i < dh; ++i) {
    r[i] = stable_sigmoid(r[i]);
    z[i] = stable_sigmoid(z[i]);
    rh[i] = r[i] * hd[i];
  }
  kernels::gemv_acc(g.value(p.W_n).data(), xd, n, dh, din);
  kernels::gemv_acc(g.value(p.U_n).data(), rh, n, dh, dh);
  Tensor<T> out(Shape{dh});
  for (std::size_t i = 0; i < dh; ++i) {
    n[i] = std::tanh(n[i]);
    out[i] = z[i] * hd[i] + (T{1} - z[i]) * n[i];
  }

  const bool needs = any_needs(g, {x, h, p.W_r, p.W_z, p.W_n, p.U_r, p.U_z, p.U_n, p.b_r, p.b_z, p.b_n});
  return g.push(std::move(out), needs,
                [p, x, h, din, dh, cache = std::move(cache)](Graph<T>& g, Var self) {
    const T* r = cache.data();
    const T* z = r + dh;
    const T* n = z + dh;
    const T* rh = n + dh;
    const T* gy = g.grad(self).data();
    const T* xd = g.value(x).data();
    const T* hd = g.value(h).data();
    std::vector<T> work(4 * dh, T{0});
    T* dz = work.data();
    T* dn = dz + dh;
    T* dr = dn + dh;
    T* drh = dr + dh;
    for (std::size_t i = 0; i < dh; ++i) {
      dz[i] = gy[i] * (hd[i] - n[i]) * z[i] * (T{1} - z[i]);
      dn[i] = gy[i] * (T{1} - z[i]) * (T{1} - n[i] * n[i]);
    }
    kernels::gemv_t_acc(g.value(p.U_n).data(), dn, drh, dh, dh);
    for (std::size_t i = 0; i < dh; ++i) dr[i] = drh[i] * hd[i] * r[i] * (T{1} - r[i]);

    auto grad_w = [&](Var W, const T* d, const T* in, std::size_t cols) {
      if (wants(g, W)) kernels::ger_acc(g.grad(W).data(), d, in, dh, cols);
    };
    auto grad_b = [&](Var b, const T* d) {
      if (wants(g, b)) kernels::axpy(T{1}, d, g.grad(b).data(), dh);
    };
    grad_w(p.W_n, dn, xd, din);
    grad_w(p.U_n, dn, rh, dh);
    grad_b(p.b_n, dn);
    grad_w(p.W_z, dz, xd, din);
    grad_w(p.U_z, dz, hd, dh);
    grad_b(p.b_z, dz);
    grad_w(p.W_r, dr, xd, din);
    grad_w(p.U_r, dr, hd, dh);
    grad_b(p.b_r, dr);

    if (wants(g, x)) {
      T* gx = g.grad(x).data();
      kernels::gemv_t_acc(g.value(p.W_n).data(), dn, gx, dh, din);
      kernels::gemv_t_acc(g.value(p.W_z).data(), dz, gx, dh, din);
      kernels::gemv_t_acc(g.value(p.W_r).data(), dr, gx, dh, din);
    }
    if (wants(g, h)) {
      T* gh = g.grad(h).data();
      for (std::size_t i = 0; i < dh; ++i) gh[i] += gy[i] * z[i] + drh[i] * r[i];
      kernels::gemv_t_acc(g.value(p.U_z).data(), dz, gh, dh, dh);
      kernels::gemv_t_acc(g.value(p.U_r).data(), dr, gh, dh, dh);
    }
  });
}

template <typename T>
Var bigru_encode(Graph<T>& g, const GruVars& fwd, const GruVars& bwd, Var X) {
  const Tensor<T>& Xv = g.value(X);
  if (Xv.rank() != 2) throw DimensionError(both("bigru_encode", Xv.shape(), Shape{}));
  const std::size_t S = Xv.dim(0);
  if (S == 0) throw InputError("bigru_encode: empty input sequence");
  const std::size_t dh = g.value(fwd.b_r).size();
  if (g.value(bwd.b_r).size() != dh)
    throw DimensionError(both("bigru_encode fwd/bwd", g.value(fwd.b_r).shape(), g.value(bwd.b_r).shape()));

  std::vector<Var> xs(S);
  for (std::size_t t = 0; t < S; ++t) xs[t] = row(g, X, t);
  const Var zero = g.constant(Tensor<T>(Shape{dh}));
  std::vector<Var> f(S), b(S);
  Var h = zero;
  for (std::size_t t = 0; t < S; ++t) f[t] = h = gru_step(g, fwd, xs[t], h);
  h = zero;
  for (std::size_t t = S; t-- > 0;) b[t] = h = gru_step(g, bwd, xs[t], h);
  std::vector<Var> rows(S);
  for (std::size_t t = 0; t < S; ++t) {
    const Var pair[2] = {f[t], b[t]};
    rows[t] = concat<T>(g, pair);
  }
  return stack_rows<T>(g, rows);
}

template <typename T>
AttentionOut attend(Graph<T>& g, Var s, Var H, Var keys, Var W_a, Var v) {
  const Tensor<T>& sv = g.value(s);
  const Tensor<T>& Hv = g.value(H);
  const Tensor<T>& Kv = g.value(keys);
  const Tensor<T>& Wv = g.value(W_a);
  const Tensor<T>& vv = g.value(v);
  if (Hv.rank() != 2 || Hv.dim(0) == 0) throw DimensionError(both("attention H", Hv.shape(), sv.shape()));
  const std::size_t S = Hv.dim(0), c = Hv.dim(1), a = vv.size(), ds = sv.size();
  if (Kv.rank() != 2 || Kv.dim(0) != S || Kv.dim(1) != a)
    throw DimensionError(both("attention keys/v", Kv.shape(), vv.shape()));
  require_matrix(Wv, a, ds, "attention W_a/s", sv.shape());

  std::vector<T> q(a, T{0});
  kernels::gemv_acc(Wv.data(), sv.data(), q.data(), a, ds);
  // t_i = tanh(q + keys_i), kept for backward
  std::vector<T> th(S * a);
  std::vector<double> score(S);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < S; ++i) {
    T* ti = th.data() + i * a;
    const T* ki = Kv.data() + i * a;
    for (std::size_t j = 0; j < a; ++j) ti[j] = std::tanh(q[j] + ki[j]);
    score[i] = static_cast<double>(kernels::dot(vv.data(), ti, a));
    mx = std::max(mx, score[i]);
  }
  double z = 0;
  for (auto& e : score) z += (e = std::exp(e - mx));
  Tensor<T> w(Shape{S});
  for (std::size_t i = 0; i < S; ++i) w[i] = static_cast<T>(score[i] / z);
  Tensor<T> ctx(Shape{c});
  for (std::size_t i = 0; i < S; ++i) kernels::axpy(w[i], Hv.data() + i * c, ctx.data(), c);

  const Var weights = g.constant(w);
  const bool needs = any_needs(g, {s, H, keys, W_a, v});
  const Var context = g.push(std::move(ctx), needs,
      [s, H, keys, W_a, v, weights, S, c, a, ds, th = std::move(th)](Graph<T>& g, Var self) {
    const T* gc = g.grad(self).data();
    const T* Hd = g.value(H).data();
    const T* w = g.value(weights).data();
    std::vector<T> dw(S);
    T wdw{0};
    for (std::size_t i = 0; i < S; ++i) {
      dw[i] = kernels::dot(gc, Hd + i * c, c);
      wdw += w[i] * dw[i];
    }
    if (wants(g, H)) {
      T* gH = g.grad(H).data();
      for (std::size_t i = 0; i < S; ++i) kernels::axpy(w[i], gc, gH + i * c, c);
    }
    const T* vd = g.value(v).data();
    std::vector<T> dq(a, T{0});
    std::vector<T> dt(a);
    T* gv = wants(g, v) ? g.grad(v).data() : nullptr;
    T* gK = wants(g, keys) ? g.grad(keys).data() : nullptr;
    for (std::size_t i = 0; i < S; ++i) {
      const T dscore = w[i] * (dw[i] - wdw);
      const T* ti = th.data() + i * a;
      if (gv) kernels::axpy(dscore, ti, gv, a);
      for (std::size_t j = 0; j < a; ++j) dt[j] = dscore * vd[j] * (T{1} - ti[j] * ti[j]);
      if (gK) kernels::axpy(T{1}, dt.data(), gK + i * a, a);
      kernels::axpy(T{1}, dt.data(), dq.data(), a);
    }
    if (wants(g, W_a)) kernels::ger_acc(g.grad(W_a).data(), dq.data(), g.value(s).data(), a, ds);
    if (wants(g, s)) kernels::gemv_t_acc(g.value(W_a).data(), dq.data(), g.grad(s).data(), a, ds);
  });
  return AttentionOut{context, weights};
}

template <typename T>
AttentionOut additive_attention(Graph<T>& g, Var s, Var H, Var W_a, Var U_a, Var v) {
  const Var keys = linear_rows(g, H, U_a);
  return attend(g, s, H, keys, W_a, v);
}

template <typename T>
Var softmax_xent(Graph<T>& g, Var logits, int target) {
  const Tensor<T>& lv = g.value(logits);
  if (lv.rank() != 1) throw DimensionError(both("softmax_xent", lv.shape(), Shape{}));
  const std::size_t V = lv.size();
  if (target < 0 || static_cast<std::size_t>(target) >= V)
    throw IndexError("softmax_xent target " + std::to_string(target) + " out of range [0, " +
                     std::to_string(V) + ")");
  double mx = -std::numeric_limits<double>::infinity();
  for (T x : lv.values()) mx = std::max(mx, static_cast<double>(x));
  double z = 0;
  std::vector<T> p(V);
  std::vector<double> e(V);
  for (std::size_t i = 0; i < V; ++i) z += (e[i] = std::exp(static_cast<double>(lv[i]) - mx));
  for (std::size_t i = 0; i < V; ++i) p[i] = static_cast<T>(e[i] / z);
  const double loss = std::log(z) + mx - static_cast<double>(lv[target]);
  return g.push(Tensor<T>::scalar(static_cast<T>(loss)), any_needs(g, {logits}),
                [logits, target, p = std::move(p)](Graph<T>& g, Var self) {
    const T gl = g.grad(self)[0];
    T* gx = g.grad(logits).data();
    for (std::size_t i = 0; i < p.size(); ++i) gx[i] += gl * p[i];
    gx[target] -= gl;
  });
}

template <typename T>
Var bernoulli_nll(Graph<T>& g, Var p, std::span<const std::uint8_t> bits, double eps) {
  const Tensor<T>& pv = g.value(p);
  if (pv.rank() != 1 || pv.size() != bits.size())
    throw DimensionError(both("bernoulli_nll p/m", pv.shape(), Shape{bits.size()}));
  double loss = 0;
  for (std::size_t t = 0; t < bits.size(); ++t) {
    const double pc = std::clamp(static_cast<double>(pv[t]), eps, 1.0 - eps);
    loss -= bits[t] ? std::log(pc) : std::log1p(-pc);
  }
  std::vector<std::uint8_t> m(bits.begin(), bits.end());
  return g.push(Tensor<T>::scalar(static_cast<T>(loss)), any_needs(g, {p}),
                [p, m = std::move(m), eps](Graph<T>& g, Var self) {
    const double gl = g.grad(self)[0];
    const Tensor<T>& pv = g.value(p);
    T* gp = g.grad(p).data();
    for (std::size_t t = 0; t < m.size(); ++t) {
      const double x = pv[t];
      if (x < eps || x > 1.0 - eps) continue;  // clamped: flat
      gp[t] += static_cast<T>(gl * (m[t] ? -1.0 / x : 1.0 / (1.0 - x)));
    }
  });
}

#define FOCUSMIX_INSTANTIATE_OPS(T)                                                         \
  template Var affine<T>(Graph<T>&, Var, Var, Var);                                         \
  template Var linear<T>(Graph<T>&, Var, Var);                                              \
  template Var linear_rows<T>(Graph<T>&, Var, Var);                                         \
  template Var add<T>(Graph<T>&, Var, Var);                                                 \
  template Var add_row_broadcast<T>(Graph<T>&, Var, Var);                                   \
  template Var scale<T>(Graph<T>&, Var, T);                                                 \
  template Var sum_all<T>(Graph<T>&, std::span<const Var>);                                 \
  template Var sigmoid<T>(Graph<T>&, Var);                                                  \
  template Var tanh<T>(Graph<T>&, Var);                                                     \
  template Var concat<T>(Graph<T>&, std::span<const Var>);                                  \
  template Var concat_cols<T>(Graph<T>&, Var, Var);                                         \
  template Var row<T>(Graph<T>&, Var, std::size_t);                                         \
  template Var stack_rows<T>(Graph<T>&, std::span<const Var>);                              \
  template Var slice<T>(Graph<T>&, Var, std::size_t, std::size_t);                          \
  template Var reshape<T>(Graph<T>&, Var, Shape);                                           \
  template Var embedding_lookup<T>(Graph<T>&, Var, std::span<const int>);                   \
  template GruVars gru_vars<T>(Graph<T>&, const ParamStore<T>&, const std::string&);        \
  template void init_gru<T>(ParamStore<T>&, const std::string&, std::size_t, std::size_t,   \
                            Rng&);                                                          \
  template Var gru_step<T>(Graph<T>&, const GruVars&, Var, Var);                            \
  template Var bigru_encode<T>(Graph<T>&, const GruVars&, const GruVars&, Var);             \
  template AttentionOut attend<T>(Graph<T>&, Var, Var, Var, Var, Var);                      \
  template AttentionOut additive_attention<T>(Graph<T>&, Var, Var, Var, Var, Var);          \
  template Var softmax_xent<T>(Graph<T>&, Var, int);                                        \
  template Var bernoulli_nll<T>(Graph<T>&, Var, std::span<const std::uint8_t>, double);

FOCUSMIX_INSTANTIATE_OPS(float)
FOCUSMIX_INSTANTIATE_OPS(double)

}  // namespace focusmix::numerics
