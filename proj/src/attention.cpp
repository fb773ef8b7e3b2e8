#include "linea/attention.hpp"

#include <cmath>
#include <string>

#include "linea/errors.hpp"
#include "linea/numerics.hpp"
#include "linea/rng.hpp"

namespace linea {

namespace {

void xavier_init(LinearMap& m, const std::string& name, std::uint64_t seed) {
  CounterRng rng(seed, CounterRng::hash_name(name.c_str()));
  const double a = std::sqrt(6.0 / static_cast<double>(m.in_dim() + m.out_dim()));
  for (std::size_t i = 0; i < m.w.size(); ++i) m.w[i] = rng.uniform(-a, a);
  m.b.set_zero();
}

}  // namespace

MhaParams make_mha_params(std::size_t embed_dim, std::size_t heads, const char* name,
                          std::uint64_t seed) {
  if (heads == 0 || embed_dim % heads != 0) {
    throw ConfigError("mha: embed_dim must be divisible by heads");
  }
  MhaParams p;
  p.heads = heads;
  p.wq = LinearMap(embed_dim, embed_dim);
  p.wk = LinearMap(embed_dim, embed_dim);
  p.wv = LinearMap(embed_dim, embed_dim);
  p.wo = LinearMap(embed_dim, embed_dim);
  const std::string base(name);
  xavier_init(p.wq, base + ".wq", seed);
  xavier_init(p.wk, base + ".wk", seed);
  xavier_init(p.wv, base + ".wv", seed);
  xavier_init(p.wo, base + ".wo", seed);
  return p;
}

MhaParams make_mha_grads(const MhaParams& params) {
  MhaParams g;
  g.heads = params.heads;
  g.wq = LinearMap(params.wq.out_dim(), params.wq.in_dim());
  g.wk = LinearMap(params.wk.out_dim(), params.wk.in_dim());
  g.wv = LinearMap(params.wv.out_dim(), params.wv.in_dim());
  g.wo = LinearMap(params.wo.out_dim(), params.wo.in_dim());
  return g;
}

Tensor linear_rows(const Tensor& x, const LinearMap& m) {
  const std::size_t n = x.extent(0);
  const std::size_t in = m.in_dim(), out = m.out_dim();
  if (x.extent(1) != in) throw ShapeError("linear_rows: input width mismatch");
  Tensor y({n, out});
  for (std::size_t i = 0; i < n; ++i) m.apply(x.data() + i * in, y.data() + i * out);
  return y;
}

void linear_rows_backward(const LinearMap& m, const Tensor& x, const Tensor& gy, LinearMap* grad,
                          Tensor* gx) {
  const std::size_t n = x.extent(0);
  const std::size_t in = m.in_dim(), out = m.out_dim();
  for (std::size_t i = 0; i < n; ++i) {
    linear_backward(m, x.data() + i * in, gy.data() + i * out, grad,
                    gx ? gx->data() + i * in : nullptr);
  }
}

Tensor mha_forward(const Tensor& x, const MhaParams& params, MhaTrace* trace) {
  if (x.rank() != 2) throw ShapeError("mha_forward: tokens must be (n, d)");
  const std::size_t n = x.extent(0);
  const std::size_t d = x.extent(1);
  if (d != params.wq.in_dim()) throw ShapeError("mha_forward: token width mismatch");
  const std::size_t heads = params.heads;
  const std::size_t hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor q = linear_rows(x, params.wq);
  Tensor k = linear_rows(x, params.wk);
  Tensor v = linear_rows(x, params.wv);

  Tensor attn({heads, n, n});
  Tensor ctx({n, d});
  std::vector<double> row(n);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * hd;
    for (std::size_t i = 0; i < n; ++i) {
      const double* qi = q.data() + i * d + off;
      double mx = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        const double* kj = k.data() + j * d + off;
        double s = 0.0;
        for (std::size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
        row[j] = s * scale;
        mx = std::max(mx, row[j]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
      }
      const double inv = 1.0 / sum;
      double* ci = ctx.data() + i * d + off;
      for (std::size_t j = 0; j < n; ++j) {
        const double w = row[j] * inv;
        attn(h, i, j) = w;
        const double* vj = v.data() + j * d + off;
        for (std::size_t c = 0; c < hd; ++c) ci[c] += w * vj[c];
      }
    }
  }
  Tensor out = linear_rows(ctx, params.wo);
  if (trace) {
    trace->x = x;
    trace->q = std::move(q);
    trace->k = std::move(k);
    trace->v = std::move(v);
    trace->attn = std::move(attn);
    trace->ctx = std::move(ctx);
  }
  return out;
}

Tensor mha_backward(const Tensor& g_out, const MhaTrace& trace, const MhaParams& params,
                    MhaParams& grads) {
  const std::size_t n = trace.x.extent(0);
  const std::size_t d = trace.x.extent(1);
  const std::size_t heads = params.heads;
  const std::size_t hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor g_ctx({n, d});
  linear_rows_backward(params.wo, trace.ctx, g_out, &grads.wo, &g_ctx);

  Tensor g_q({n, d});
  Tensor g_k({n, d});
  Tensor g_v({n, d});
  std::vector<double> g_attn_row(n);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * hd;
    for (std::size_t i = 0; i < n; ++i) {
      const double* gci = g_ctx.data() + i * d + off;
      // ctx_i = sum_j attn(i,j) v_j
      for (std::size_t j = 0; j < n; ++j) {
        const double* vj = trace.v.data() + j * d + off;
        double ga = 0.0;
        for (std::size_t c = 0; c < hd; ++c) ga += gci[c] * vj[c];
        g_attn_row[j] = ga;
        const double w = trace.attn(h, i, j);
        double* gvj = g_v.data() + j * d + off;
        for (std::size_t c = 0; c < hd; ++c) gvj[c] += w * gci[c];
      }
      // softmax row backward
      double inner = 0.0;
      for (std::size_t j = 0; j < n; ++j) inner += trace.attn(h, i, j) * g_attn_row[j];
      double* gqi = g_q.data() + i * d + off;
      for (std::size_t j = 0; j < n; ++j) {
        const double gs = trace.attn(h, i, j) * (g_attn_row[j] - inner) * scale;
        if (gs == 0.0) continue;
        const double* kj = trace.k.data() + j * d + off;
        const double* qi = trace.q.data() + i * d + off;
        double* gkj = g_k.data() + j * d + off;
        for (std::size_t c = 0; c < hd; ++c) {
          gqi[c] += gs * kj[c];
          gkj[c] += gs * qi[c];
        }
      }
    }
  }

  Tensor g_x({n, d});
  linear_rows_backward(params.wq, trace.x, g_q, &grads.wq, &g_x);
  linear_rows_backward(params.wk, trace.x, g_k, &grads.wk, &g_x);
  linear_rows_backward(params.wv, trace.x, g_v, &grads.wv, &g_x);
  return g_x;
}

}  // namespace linea
