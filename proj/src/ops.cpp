#include "pets/ops.hpp"

#include <cmath>
#include <cstring>

namespace pets {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

bool track(Tape* tape, std::initializer_list<const Tensor*> ins) {
  if (!tape) return false;
  for (const Tensor* t : ins) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void mark(Tensor& out, Tape* tape, std::initializer_list<const Tensor*> ins) {
  if (track(tape, ins)) {
    out.set_requires_grad(true);
    out.grad();
  }
}

/// Rows-times-matrix product treating x as [rows, Din] regardless of
/// leading structure.  Shared by linear() for rank 2 and rank 3.
void rows_matmul(const double* x, std::int64_t rows, std::int64_t din,
                 const double* w, std::int64_t dout, double* out) {
  for (std::int64_t r = 0; r < rows; ++r) {
    double* orow = out + r * dout;
    const double* xrow = x + r * din;
    for (std::int64_t i = 0; i < din; ++i) {
      const double xv = xrow[i];
      if (xv == 0.0) continue;
      const double* wrow = w + i * dout;
      for (std::int64_t o = 0; o < dout; ++o) orow[o] += xv * wrow[o];
    }
  }
}

/// Batched product out[r,t,d] = sum_u a[r,t,u] * b[r,u,d].
Tensor bmm_nn(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(1)) {
    throw ShapeError("bmm: shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " are incompatible");
  }
  const std::int64_t R = a.dim(0), T = a.dim(1), U = a.dim(2), D = b.dim(2);
  Tensor out(std::vector<std::int64_t>{R, T, D});
  {
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::int64_t r = 0; r < R; ++r)
      for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t u = 0; u < U; ++u) {
          const double av = pa[(r * T + t) * U + u];
          if (av == 0.0) continue;
          const double* brow = pb + (r * U + u) * D;
          double* orow = po + (r * T + t) * D;
          for (std::int64_t d = 0; d < D; ++d) orow[d] += av * brow[d];
        }
  }
  mark(out, tape, {&a, &b});
  if (out.requires_grad()) {
    const bool ga = a.requires_grad(), gb = b.requires_grad();
    Tensor ta = a, tb = b, to = out;
    tape->record([ta, tb, to, ga, gb, R, T, U, D]() mutable {
      const auto& g = to.grad();
      const auto& da = ta.data();
      const auto& db = tb.data();
      for (std::int64_t r = 0; r < R; ++r)
        for (std::int64_t t = 0; t < T; ++t)
          for (std::int64_t u = 0; u < U; ++u) {
            double acc = 0.0;
            const std::int64_t go = (r * T + t) * D;
            const std::int64_t bo = (r * U + u) * D;
            if (ga) {
              for (std::int64_t d = 0; d < D; ++d)
                acc += g[go + d] * db[bo + d];
              ta.grad()[(r * T + t) * U + u] += acc;
            }
            if (gb) {
              const double av = da[(r * T + t) * U + u];
              if (av != 0.0) {
                auto& gv = tb.grad();
                for (std::int64_t d = 0; d < D; ++d)
                  gv[bo + d] += av * g[go + d];
              }
            }
          }
    });
  }
  return out;
}

/// Batched product against the transpose: out[r,t,u] = sum_d
/// a[r,t,d] * b[r,u,d].
Tensor bmm_nt(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(2)) {
    throw ShapeError("bmm_nt: shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " are incompatible");
  }
  const std::int64_t R = a.dim(0), T = a.dim(1), D = a.dim(2), U = b.dim(1);
  Tensor out(std::vector<std::int64_t>{R, T, U});
  {
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::int64_t r = 0; r < R; ++r)
      for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t u = 0; u < U; ++u) {
          const double* arow = pa + (r * T + t) * D;
          const double* brow = pb + (r * U + u) * D;
          double acc = 0.0;
          for (std::int64_t d = 0; d < D; ++d) acc += arow[d] * brow[d];
          po[(r * T + t) * U + u] = acc;
        }
  }
  mark(out, tape, {&a, &b});
  if (out.requires_grad()) {
    const bool ga = a.requires_grad(), gb = b.requires_grad();
    Tensor ta = a, tb = b, to = out;
    tape->record([ta, tb, to, ga, gb, R, T, D, U]() mutable {
      const auto& g = to.grad();
      const auto& da = ta.data();
      const auto& db = tb.data();
      for (std::int64_t r = 0; r < R; ++r)
        for (std::int64_t t = 0; t < T; ++t)
          for (std::int64_t u = 0; u < U; ++u) {
            const double gv = g[(r * T + t) * U + u];
            if (gv == 0.0) continue;
            const std::int64_t ao = (r * T + t) * D;
            const std::int64_t bo = (r * U + u) * D;
            if (ga) {
              auto& agr = ta.grad();
              for (std::int64_t d = 0; d < D; ++d)
                agr[ao + d] += gv * db[bo + d];
            }
            if (gb) {
              auto& bgr = tb.grad();
              for (std::int64_t d = 0; d < D; ++d)
                bgr[bo + d] += gv * da[ao + d];
            }
          }
    });
  }
  return out;
}

}  // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a.shape(), b.shape(), "add");
  Tensor out(a.shape());
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i)
    out.data()[i] = a.data()[i] + b.data()[i];
  mark(out, tape, {&a, &b});
  if (out.requires_grad()) {
    const bool ga = a.requires_grad(), gb = b.requires_grad();
    Tensor ta = a, tb = b, to = out;
    tape->record([ta, tb, to, ga, gb, n]() mutable {
      const auto& g = to.grad();
      if (ga) {
        auto& d = ta.grad();
        for (std::int64_t i = 0; i < n; ++i) d[i] += g[i];
      }
      if (gb) {
        auto& d = tb.grad();
        for (std::int64_t i = 0; i < n; ++i) d[i] += g[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a.shape(), b.shape(), "mul");
  Tensor out(a.shape());
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i)
    out.data()[i] = a.data()[i] * b.data()[i];
  mark(out, tape, {&a, &b});
  if (out.requires_grad()) {
    const bool ga = a.requires_grad(), gb = b.requires_grad();
    Tensor ta = a, tb = b, to = out;
    tape->record([ta, tb, to, ga, gb, n]() mutable {
      const auto& g = to.grad();
      if (ga) {
        auto& d = ta.grad();
        const auto& bv = tb.data();
        for (std::int64_t i = 0; i < n; ++i) d[i] += g[i] * bv[i];
      }
      if (gb) {
        auto& d = tb.grad();
        const auto& av = ta.data();
        for (std::int64_t i = 0; i < n; ++i) d[i] += g[i] * av[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape* tape, const Tensor& a, double c) {
  Tensor out(a.shape());
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = c * a.data()[i];
  mark(out, tape, {&a});
  if (out.requires_grad()) {
    Tensor ta = a, to = out;
    tape->record([ta, to, c, n]() mutable {
      const auto& g = to.grad();
      auto& d = ta.grad();
      for (std::int64_t i = 0; i < n; ++i) d[i] += c * g[i];
    });
  }
  return out;
}

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " are incompatible");
  }
  const std::int64_t N = a.dim(0), K = a.dim(1), M = b.dim(1);
  Tensor out(std::vector<std::int64_t>{N, M});
  rows_matmul(a.data().data(), N, K, b.data().data(), M, out.data().data());
  mark(out, tape, {&a, &b});
  if (out.requires_grad()) {
    const bool ga = a.requires_grad(), gb = b.requires_grad();
    Tensor ta = a, tb = b, to = out;
    tape->record([ta, tb, to, ga, gb, N, K, M]() mutable {
      const auto& g = to.grad();
      if (ga) {
        auto& d = ta.grad();
        const auto& bv = tb.data();
        for (std::int64_t n = 0; n < N; ++n)
          for (std::int64_t k = 0; k < K; ++k) {
            double acc = 0.0;
            for (std::int64_t m = 0; m < M; ++m)
              acc += g[n * M + m] * bv[k * M + m];
            d[n * K + k] += acc;
          }
      }
      if (gb) {
        auto& d = tb.grad();
        const auto& av = ta.data();
        for (std::int64_t n = 0; n < N; ++n)
          for (std::int64_t k = 0; k < K; ++k) {
            const double aval = av[n * K + k];
            if (aval == 0.0) continue;
            for (std::int64_t m = 0; m < M; ++m)
              d[k * M + m] += aval * g[n * M + m];
          }
      }
    });
  }
  return out;
}

Tensor linear(Tape* tape, const Tensor& x, const Tensor& W,
              const Tensor& b) {
  if (W.rank() != 2) {
    throw ShapeError("linear: weight shape " + shape_str(W.shape()) +
                     " is not a matrix");
  }
  const std::int64_t din = W.dim(0), dout = W.dim(1);
  if (x.rank() < 2 || x.dim(-1) != din) {
    throw ShapeError("linear: input shape " + shape_str(x.shape()) +
                     " does not end in " + std::to_string(din));
  }
  const bool bias = b.defined();
  if (bias && (b.rank() != 1 || b.dim(0) != dout)) {
    throw ShapeError("linear: bias shape " + shape_str(b.shape()) +
                     " does not match output width " + std::to_string(dout));
  }
  std::vector<std::int64_t> oshape = x.shape();
  oshape.back() = dout;
  Tensor out{oshape};
  const std::int64_t rows = x.numel() / din;
  rows_matmul(x.data().data(), rows, din, W.data().data(), dout,
              out.data().data());
  if (bias) {
    double* po = out.data().data();
    const double* pb = b.data().data();
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t o = 0; o < dout; ++o) po[r * dout + o] += pb[o];
  }
  mark(out, tape, {&x, &W, &b});
  if (out.requires_grad()) {
    const bool gx = x.requires_grad(), gw = W.requires_grad();
    const bool gb = bias && b.requires_grad();
    Tensor tx = x, tw = W, tb = b, to = out;
    tape->record([tx, tw, tb, to, gx, gw, gb, rows, din, dout]() mutable {
      const auto& g = to.grad();
      if (gx) {
        auto& d = tx.grad();
        const auto& wv = tw.data();
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t i = 0; i < din; ++i) {
            double acc = 0.0;
            for (std::int64_t o = 0; o < dout; ++o)
              acc += g[r * dout + o] * wv[i * dout + o];
            d[r * din + i] += acc;
          }
      }
      if (gw) {
        auto& d = tw.grad();
        const auto& xv = tx.data();
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t i = 0; i < din; ++i) {
            const double xval = xv[r * din + i];
            if (xval == 0.0) continue;
            for (std::int64_t o = 0; o < dout; ++o)
              d[i * dout + o] += xval * g[r * dout + o];
          }
      }
      if (gb) {
        auto& d = tb.grad();
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t o = 0; o < dout; ++o) d[o] += g[r * dout + o];
      }
    });
  }
  return out;
}

Tensor linear(Tape* tape, const Tensor& x, const LinParams& p) {
  return linear(tape, x, p.W, p.b);
}

Tensor conv1d(Tape* tape, const Tensor& x, const ConvParams& p, int pad) {
  if (x.rank() != 3 || p.W.rank() != 3) {
    throw ShapeError("conv1d: input " + shape_str(x.shape()) +
                     " and kernel " + shape_str(p.W.shape()) +
                     " must both be rank 3");
  }
  const std::int64_t R = x.dim(0), T = x.dim(1), din = x.dim(2);
  const std::int64_t dout = p.W.dim(0), k = p.W.dim(2);
  if (p.W.dim(1) != din) {
    throw ShapeError("conv1d: kernel " + shape_str(p.W.shape()) +
                     " does not accept " + std::to_string(din) +
                     " input channels");
  }
  if (p.b.defined() && (p.b.rank() != 1 || p.b.dim(0) != dout)) {
    throw ShapeError("conv1d: bias shape " + shape_str(p.b.shape()) +
                     " does not match " + std::to_string(dout) +
                     " output channels");
  }
  const std::int64_t pd = pad < 0 ? (k - 1) / 2 : pad;
  const std::int64_t tout = T + 2 * pd - k + 1;
  if (tout < 1) {
    throw ShapeError("conv1d: kernel size " + std::to_string(k) +
                     " with padding " + std::to_string(pd) +
                     " exceeds " + std::to_string(T) + " tokens");
  }
  Tensor out(std::vector<std::int64_t>{R, tout, dout});
  {
    const double* px = x.data().data();
    const double* pw = p.W.data().data();
    double* po = out.data().data();
    for (std::int64_t r = 0; r < R; ++r)
      for (std::int64_t t = 0; t < tout; ++t)
        for (std::int64_t dt = 0; dt < k; ++dt) {
          const std::int64_t s = t + dt - pd;
          if (s < 0 || s >= T) continue;
          const double* xrow = px + (r * T + s) * din;
          double* orow = po + (r * tout + t) * dout;
          for (std::int64_t o = 0; o < dout; ++o) {
            const double* wrow = pw + (o * din) * k + dt;
            double acc = 0.0;
            for (std::int64_t i = 0; i < din; ++i)
              acc += xrow[i] * wrow[i * k];
            orow[o] += acc;
          }
        }
    if (p.b.defined()) {
      const double* pb = p.b.data().data();
      for (std::int64_t rt = 0; rt < R * tout; ++rt)
        for (std::int64_t o = 0; o < dout; ++o) po[rt * dout + o] += pb[o];
    }
  }
  mark(out, tape, {&x, &p.W, &p.b});
  if (out.requires_grad()) {
    const bool gx = x.requires_grad(), gw = p.W.requires_grad();
    const bool gb = p.b.defined() && p.b.requires_grad();
    Tensor tx = x, tw = p.W, tb = p.b, to = out;
    tape->record(
        [tx, tw, tb, to, gx, gw, gb, R, T, din, dout, k, pd, tout]() mutable {
          const auto& g = to.grad();
          const auto& xv = tx.data();
          const auto& wv = tw.data();
          for (std::int64_t r = 0; r < R; ++r)
            for (std::int64_t t = 0; t < tout; ++t)
              for (std::int64_t dt = 0; dt < k; ++dt) {
                const std::int64_t s = t + dt - pd;
                if (s < 0 || s >= T) continue;
                const std::int64_t xo = (r * T + s) * din;
                const std::int64_t go = (r * tout + t) * dout;
                for (std::int64_t o = 0; o < dout; ++o) {
                  const double gv = g[go + o];
                  if (gv == 0.0) continue;
                  if (gx) {
                    auto& d = tx.grad();
                    for (std::int64_t i = 0; i < din; ++i)
                      d[xo + i] += gv * wv[(o * din + i) * k + dt];
                  }
                  if (gw) {
                    auto& d = tw.grad();
                    for (std::int64_t i = 0; i < din; ++i)
                      d[(o * din + i) * k + dt] += gv * xv[xo + i];
                  }
                }
              }
          if (gb) {
            auto& d = tb.grad();
            for (std::int64_t rt = 0; rt < R * tout; ++rt)
              for (std::int64_t o = 0; o < dout; ++o)
                d[o] += g[rt * dout + o];
          }
        });
  }
  return out;
}

ConvParams zero_init_conv1x1(ParamStore& params, const std::string& name,
                             std::int64_t channels) {
  ConvParams p;
  p.W = params.add_zeros(name + ".W", {channels, channels, 1});
  p.b = params.add_zeros(name + ".b", {channels});
  return p;
}

Tensor self_attention(Tape* tape, const Tensor& x, const AttnParams& p,
                      AttnRecord* rec) {
  if (x.rank() != 3) {
    throw ShapeError("self_attention: input shape " + shape_str(x.shape()) +
                     " is not [R, T, D]");
  }
  const std::int64_t D = x.dim(2);
  Tensor q = linear(tape, x, p.Wq, Tensor());
  Tensor k = linear(tape, x, p.Wk, Tensor());
  Tensor v = linear(tape, x, p.Wv, Tensor());
  Tensor scores =
      scale(tape, bmm_nt(tape, q, k), 1.0 / std::sqrt(double(D)));
  Tensor attn = softmax(tape, scores);
  if (rec) {
    rec->shape = attn.shape();
    rec->weights = attn.data();
  }
  Tensor ctx = bmm_nn(tape, attn, v);
  return linear(tape, ctx, p.Wo, Tensor());
}

Tensor feed_forward(Tape* tape, const Tensor& x, const FfnParams& p) {
  return linear(tape, gelu(tape, linear(tape, x, p.l1)), p.l2);
}

Tensor layer_norm(Tape* tape, const Tensor& x, const LnParams& p,
                  double eps) {
  const std::int64_t D = x.dim(-1);
  if (p.gamma.numel() != D || p.beta.numel() != D) {
    throw ShapeError("layer_norm: gamma/beta size does not match feature "
                     "width " + std::to_string(D));
  }
  const std::int64_t rows = x.numel() / D;
  Tensor out(x.shape());
  std::vector<double> xhat(static_cast<std::size_t>(x.numel()));
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  {
    const double* px = x.data().data();
    const double* pg = p.gamma.data().data();
    const double* pb = p.beta.data().data();
    double* po = out.data().data();
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* row = px + r * D;
      double mu = 0.0;
      for (std::int64_t i = 0; i < D; ++i) mu += row[i];
      mu /= static_cast<double>(D);
      double var = 0.0;
      for (std::int64_t i = 0; i < D; ++i) {
        const double c = row[i] - mu;
        var += c * c;
      }
      var /= static_cast<double>(D);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(r)] = is;
      for (std::int64_t i = 0; i < D; ++i) {
        const double xh = (row[i] - mu) * is;
        xhat[static_cast<std::size_t>(r * D + i)] = xh;
        po[r * D + i] = pg[i] * xh + pb[i];
      }
    }
  }
  mark(out, tape, {&x, &p.gamma, &p.beta});
  if (out.requires_grad()) {
    const bool gx = x.requires_grad();
    const bool gg = p.gamma.requires_grad();
    const bool gb = p.beta.requires_grad();
    Tensor tx = x, tg = p.gamma, tb = p.beta, to = out;
    tape->record([tx, tg, tb, to, gx, gg, gb, rows, D, xhat,
                  inv_std]() mutable {
      const auto& g = to.grad();
      const auto& gamma = tg.data();
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* gr = g.data() + r * D;
        const double* xh = xhat.data() + r * D;
        if (gg || gb) {
          for (std::int64_t i = 0; i < D; ++i) {
            if (gg) tg.grad()[static_cast<std::size_t>(i)] += gr[i] * xh[i];
            if (gb) tb.grad()[static_cast<std::size_t>(i)] += gr[i];
          }
        }
        if (gx) {
          double m1 = 0.0, m2 = 0.0;
          for (std::int64_t i = 0; i < D; ++i) {
            const double gg_i = gr[i] * gamma[static_cast<std::size_t>(i)];
            m1 += gg_i;
            m2 += gg_i * xh[i];
          }
          m1 /= static_cast<double>(D);
          m2 /= static_cast<double>(D);
          const double is = inv_std[static_cast<std::size_t>(r)];
          auto& d = tx.grad();
          for (std::int64_t i = 0; i < D; ++i) {
            const double gg_i = gr[i] * gamma[static_cast<std::size_t>(i)];
            d[r * D + i] += is * (gg_i - m1 - xh[i] * m2);
          }
        }
      }
    });
  }
  return out;
}

Tensor gelu(Tape* tape, const Tensor& x) {
  Tensor out(x.shape());
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    const double v = x.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  mark(out, tape, {&x});
  if (out.requires_grad()) {
    Tensor tx = x, to = out;
    tape->record([tx, to, n]() mutable {
      const auto& g = to.grad();
      const auto& xv = tx.data();
      auto& d = tx.grad();
      for (std::int64_t i = 0; i < n; ++i) {
        const double v = xv[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        d[i] += g[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

Tensor dropout(Tape* tape, const Tensor& x, double rate, bool train,
               Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw InvalidInput("dropout: rate " + std::to_string(rate) +
                       " is outside [0, 1)");
  }
  if (!train || rate == 0.0) return x;
  const std::int64_t n = x.numel();
  const double keep = 1.0 - rate;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> mask(static_cast<std::size_t>(n));
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < n; ++i) {
    const double m = u(rng) < keep ? 1.0 / keep : 0.0;
    mask[static_cast<std::size_t>(i)] = m;
    out.data()[i] = x.data()[i] * m;
  }
  mark(out, tape, {&x});
  if (out.requires_grad()) {
    Tensor tx = x, to = out;
    tape->record([tx, to, mask, n]() mutable {
      const auto& g = to.grad();
      auto& d = tx.grad();
      for (std::int64_t i = 0; i < n; ++i)
        d[i] += g[i] * mask[static_cast<std::size_t>(i)];
    });
  }
  return out;
}

Tensor avg_pool_groups(Tape* tape, const Tensor& x, std::int64_t groups) {
  if (x.rank() != 3 || groups < 1 || x.dim(1) % groups != 0) {
    throw ShapeError("avg_pool_groups: cannot pool shape " +
                     shape_str(x.shape()) + " into " +
                     std::to_string(groups) + " groups");
  }
  const std::int64_t R = x.dim(0), T = x.dim(1) / groups, D = x.dim(2);
  Tensor out(std::vector<std::int64_t>{R, T, D});
  const double inv = 1.0 / static_cast<double>(groups);
  {
    const double* px = x.data().data();
    double* po = out.data().data();
    for (std::int64_t r = 0; r < R; ++r)
      for (std::int64_t gidx = 0; gidx < groups; ++gidx)
        for (std::int64_t t = 0; t < T; ++t) {
          const double* xrow = px + ((r * groups + gidx) * T + t) * D;
          double* orow = po + (r * T + t) * D;
          for (std::int64_t d = 0; d < D; ++d) orow[d] += inv * xrow[d];
        }
  }
  mark(out, tape, {&x});
  if (out.requires_grad()) {
    Tensor tx = x, to = out;
    tape->record([tx, to, R, T, D, groups, inv]() mutable {
      const auto& g = to.grad();
      auto& d = tx.grad();
      for (std::int64_t r = 0; r < R; ++r)
        for (std::int64_t gidx = 0; gidx < groups; ++gidx)
          for (std::int64_t t = 0; t < T; ++t) {
            const std::int64_t xo = ((r * groups + gidx) * T + t) * D;
            const std::int64_t go = (r * T + t) * D;
            for (std::int64_t dd = 0; dd < D; ++dd)
              d[xo + dd] += inv * g[go + dd];
          }
    });
  }
  return out;
}

Tensor flatten(Tape* tape, const Tensor& x) {
  if (x.rank() != 3) {
    throw ShapeError("flatten: input shape " + shape_str(x.shape()) +
                     " is not rank 3");
  }
  Tensor out = Tensor::from({x.dim(0), x.dim(1) * x.dim(2)}, x.data());
  mark(out, tape, {&x});
  if (out.requires_grad()) {
    Tensor tx = x, to = out;
    const std::int64_t n = x.numel();
    tape->record([tx, to, n]() mutable {
      const auto& g = to.grad();
      auto& d = tx.grad();
      for (std::int64_t i = 0; i < n; ++i) d[i] += g[i];
    });
  }
  return out;
}

Tensor concat_tokens(Tape* tape, const std::vector<Tensor>& xs) {
  if (xs.empty()) throw InvalidInput("concat_tokens: no inputs");
  const std::int64_t R = xs[0].dim(0), D = xs[0].dim(2);
  std::int64_t total = 0;
  for (const auto& x : xs) {
    if (x.rank() != 3 || x.dim(0) != R || x.dim(2) != D) {
      throw ShapeError("concat_tokens: shape " + shape_str(x.shape()) +
                       " does not match " + shape_str(xs[0].shape()));
    }
    total += x.dim(1);
  }
  Tensor out(std::vector<std::int64_t>{R, total, D});
  std::int64_t off = 0;
  for (const auto& x : xs) {
    const std::int64_t T = x.dim(1);
    for (std::int64_t r = 0; r < R; ++r) {
      std::memcpy(out.data().data() + ((r * total + off) * D),
                  x.data().data() + r * T * D,
                  static_cast<std::size_t>(T * D) * sizeof(double));
    }
    off += T;
  }
  bool any = false;
  for (const auto& x : xs) any = any || x.requires_grad();
  if (tape && any) {
    out.set_requires_grad(true);
    out.grad();
    std::vector<Tensor> txs = xs;
    Tensor to = out;
    tape->record([txs, to, R, D, total]() mutable {
      const auto& g = to.grad();
      std::int64_t off2 = 0;
      for (auto& x : txs) {
        const std::int64_t T = x.dim(1);
        if (x.requires_grad()) {
          auto& d = x.grad();
          for (std::int64_t r = 0; r < R; ++r)
            for (std::int64_t i = 0; i < T * D; ++i)
              d[r * T * D + i] += g[(r * total + off2) * D + i];
        }
        off2 += T;
      }
    });
  }
  return out;
}

std::vector<Tensor> split_tokens(Tape* tape, const Tensor& x,
                                 const std::vector<std::int64_t>& sizes) {
  if (x.rank() != 3) {
    throw ShapeError("split_tokens: input shape " + shape_str(x.shape()) +
                     " is not rank 3");
  }
  std::int64_t total = 0;
  for (auto s : sizes) total += s;
  if (total != x.dim(1)) {
    throw ShapeError("split_tokens: sizes sum to " + std::to_string(total) +
                     " but input has " + std::to_string(x.dim(1)) +
                     " tokens");
  }
  const std::int64_t R = x.dim(0), T = x.dim(1), D = x.dim(2);
  std::vector<Tensor> out;
  std::int64_t off = 0;
  for (auto s : sizes) {
    Tensor piece(std::vector<std::int64_t>{R, s, D});
    for (std::int64_t r = 0; r < R; ++r) {
      std::memcpy(piece.data().data() + r * s * D,
                  x.data().data() + ((r * T + off) * D),
                  static_cast<std::size_t>(s * D) * sizeof(double));
    }
    if (tape && x.requires_grad()) {
      piece.set_requires_grad(true);
      piece.grad();
      Tensor tx = x, tp = piece;
      const std::int64_t o = off;
      tape->record([tx, tp, R, T, D, s, o]() mutable {
        const auto& g = tp.grad();
        auto& d = tx.grad();
        for (std::int64_t r = 0; r < R; ++r)
          for (std::int64_t i = 0; i < s * D; ++i)
            d[(r * T + o) * D + i] += g[r * s * D + i];
      });
    }
    out.push_back(piece);
    off += s;
  }
  return out;
}

Tensor add_rows(Tape* tape, const Tensor& x, const Tensor& table) {
  if (x.rank() != 3 || table.rank() != 2 || x.dim(1) != table.dim(0) ||
      x.dim(2) != table.dim(1)) {
    throw ShapeError("add_rows: shapes " + shape_str(x.shape()) + " and " +
                     shape_str(table.shape()) + " are incompatible");
  }
  const std::int64_t R = x.dim(0), TD = x.dim(1) * x.dim(2);
  Tensor out(x.shape());
  for (std::int64_t r = 0; r < R; ++r)
    for (std::int64_t i = 0; i < TD; ++i)
      out.data()[r * TD + i] = x.data()[r * TD + i] + table.data()[i];
  mark(out, tape, {&x, &table});
  if (out.requires_grad()) {
    const bool gx = x.requires_grad(), gt = table.requires_grad();
    Tensor tx = x, tt = table, to = out;
    tape->record([tx, tt, to, gx, gt, R, TD]() mutable {
      const auto& g = to.grad();
      for (std::int64_t r = 0; r < R; ++r)
        for (std::int64_t i = 0; i < TD; ++i) {
          if (gx) tx.grad()[r * TD + i] += g[r * TD + i];
          if (gt) tt.grad()[i] += g[r * TD + i];
        }
    });
  }
  return out;
}

Tensor mean_all(Tape* tape, const Tensor& x) {
  const std::int64_t n = x.numel();
  if (n == 0) throw InvalidInput("mean_all: empty tensor");
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) acc += x.data()[i];
  Tensor out = Tensor::scalar(acc / static_cast<double>(n));
  mark(out, tape, {&x});
  if (out.requires_grad()) {
    Tensor tx = x, to = out;
    tape->record([tx, to, n]() mutable {
      const double g = to.grad()[0] / static_cast<double>(n);
      auto& d = tx.grad();
      for (std::int64_t i = 0; i < n; ++i) d[i] += g;
    });
  }
  return out;
}

Tensor mean_rowgroups(Tape* tape, const Tensor& x, std::int64_t group) {
  if (x.rank() != 2 || group < 1 || x.dim(0) % group != 0) {
    throw ShapeError("mean_rowgroups: cannot group shape " +
                     shape_str(x.shape()) + " by " + std::to_string(group));
  }
  const std::int64_t B = x.dim(0) / group, F = x.dim(1);
  Tensor out(std::vector<std::int64_t>{B, F});
  const double inv = 1.0 / static_cast<double>(group);
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t gidx = 0; gidx < group; ++gidx)
      for (std::int64_t f = 0; f < F; ++f)
        out.data()[b * F + f] += inv * x.data()[(b * group + gidx) * F + f];
  mark(out, tape, {&x});
  if (out.requires_grad()) {
    Tensor tx = x, to = out;
    tape->record([tx, to, B, F, group, inv]() mutable {
      const auto& g = to.grad();
      auto& d = tx.grad();
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t gidx = 0; gidx < group; ++gidx)
          for (std::int64_t f = 0; f < F; ++f)
            d[(b * group + gidx) * F + f] += inv * g[b * F + f];
    });
  }
  return out;
}

Tensor mse_loss(Tape* tape, const Tensor& pred, const Tensor& target) {
  check_same_shape(pred.shape(), target.shape(), "mse_loss");
  const std::int64_t n = pred.numel();
  if (n == 0) throw InvalidInput("mse_loss: empty tensors");
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = pred.data()[i] - target.data()[i];
    acc += d * d;
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(n));
  mark(out, tape, {&pred});
  if (out.requires_grad()) {
    Tensor tp = pred, tt = target, to = out;
    tape->record([tp, tt, to, n]() mutable {
      const double g = to.grad()[0] * 2.0 / static_cast<double>(n);
      const auto& pv = tp.data();
      const auto& tv = tt.data();
      auto& d = tp.grad();
      for (std::int64_t i = 0; i < n; ++i) d[i] += g * (pv[i] - tv[i]);
    });
  }
  return out;
}

Tensor masked_mse_loss(Tape* tape, const Tensor& pred, const Tensor& target,
                       const Tensor& mask) {
  check_same_shape(pred.shape(), target.shape(), "masked_mse_loss");
  check_same_shape(pred.shape(), mask.shape(), "masked_mse_loss");
  const std::int64_t n = pred.numel();
  double count = 0.0, acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double m = mask.data()[i];
    count += m;
    const double d = pred.data()[i] - target.data()[i];
    acc += m * d * d;
  }
  if (count <= 0.0) {
    throw InvalidInput("masked_mse_loss: mask selects no positions");
  }
  Tensor out = Tensor::scalar(acc / count);
  mark(out, tape, {&pred});
  if (out.requires_grad()) {
    Tensor tp = pred, tt = target, tm = mask, to = out;
    tape->record([tp, tt, tm, to, n, count]() mutable {
      const double g = to.grad()[0] * 2.0 / count;
      const auto& pv = tp.data();
      const auto& tv = tt.data();
      const auto& mv = tm.data();
      auto& d = tp.grad();
      for (std::int64_t i = 0; i < n; ++i)
        d[i] += g * mv[i] * (pv[i] - tv[i]);
    });
  }
  return out;
}

Tensor cross_entropy_loss(Tape* tape, const Tensor& logits,
                          const std::vector<int>& labels) {
  if (logits.rank() != 2) {
    throw ShapeError("cross_entropy_loss: logits shape " +
                     shape_str(logits.shape()) + " is not [B, C]");
  }
  const std::int64_t B = logits.dim(0), C = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != B) {
    throw ShapeError("cross_entropy_loss: " +
                     std::to_string(labels.size()) + " labels for " +
                     std::to_string(B) + " rows");
  }
  std::vector<double> probs(static_cast<std::size_t>(B * C));
  double loss = 0.0;
  for (std::int64_t b = 0; b < B; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= C) {
      throw InvalidInput("cross_entropy_loss: label " + std::to_string(y) +
                         " outside [0, " + std::to_string(C) + ")");
    }
    const double* row = logits.data().data() + b * C;
    double mx = row[0];
    for (std::int64_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::int64_t c = 0; c < C; ++c) sum += std::exp(row[c] - mx);
    const double lse = mx + std::log(sum);
    for (std::int64_t c = 0; c < C; ++c)
      probs[static_cast<std::size_t>(b * C + c)] = std::exp(row[c] - lse);
    loss += lse - row[y];
  }
  Tensor out = Tensor::scalar(loss / static_cast<double>(B));
  mark(out, tape, {&logits});
  if (out.requires_grad()) {
    Tensor tl = logits, to = out;
    tape->record([tl, to, probs, labels, B, C]() mutable {
      const double g = to.grad()[0] / static_cast<double>(B);
      auto& d = tl.grad();
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c) {
          const double onehot =
              (labels[static_cast<std::size_t>(b)] == c) ? 1.0 : 0.0;
          d[b * C + c] +=
              g * (probs[static_cast<std::size_t>(b * C + c)] - onehot);
        }
    });
  }
  return out;
}

Tensor softmax(Tape* tape, const Tensor& x) {
  const std::int64_t D = x.dim(-1);
  const std::int64_t rows = x.numel() / D;
  Tensor out(x.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = x.data().data() + r * D;
    double* orow = out.data().data() + r * D;
    double mx = row[0];
    for (std::int64_t i = 1; i < D; ++i) mx = std::max(mx, row[i]);
    double sum = 0.0;
    for (std::int64_t i = 0; i < D; ++i) {
      orow[i] = std::exp(row[i] - mx);
      sum += orow[i];
    }
    for (std::int64_t i = 0; i < D; ++i) orow[i] /= sum;
  }
  mark(out, tape, {&x});
  if (out.requires_grad()) {
    Tensor tx = x, to = out;
    tape->record([tx, to, rows, D]() mutable {
      const auto& g = to.grad();
      const auto& y = to.data();
      auto& d = tx.grad();
      for (std::int64_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::int64_t i = 0; i < D; ++i)
          dot += g[r * D + i] * y[r * D + i];
        for (std::int64_t i = 0; i < D; ++i)
          d[r * D + i] += y[r * D + i] * (g[r * D + i] - dot);
      }
    });
  }
  return out;
}

double grad_abs_sum(const Tensor& t) {
  const auto* g = t.grad_ptr();
  if (!g) return 0.0;
  double acc = 0.0;
  for (double v : *g) acc += std::abs(v);
  return acc;
}

}  // namespace pets
