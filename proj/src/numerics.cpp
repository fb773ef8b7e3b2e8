#include "linea/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace linea {

namespace {

struct BilinearTaps {
  // Corner indices (may be out of bounds) and lerp weights.
  long x0, x1, y0, y1;
  double wx0, wx1, wy0, wy1;
};

inline BilinearTaps taps_for(const FeatureMap& map, Vec2 point) {
  const double xp = point.x * static_cast<double>(map.width) - 0.5;
  const double yp = point.y * static_cast<double>(map.height) - 0.5;
  BilinearTaps t;
  t.x0 = static_cast<long>(std::floor(xp));
  t.y0 = static_cast<long>(std::floor(yp));
  t.x1 = t.x0 + 1;
  t.y1 = t.y0 + 1;
  t.wx1 = xp - static_cast<double>(t.x0);
  t.wx0 = 1.0 - t.wx1;
  t.wy1 = yp - static_cast<double>(t.y0);
  t.wy0 = 1.0 - t.wy1;
  return t;
}

inline bool in_bounds(long y, long x, const FeatureMap& map) {
  return y >= 0 && x >= 0 && y < static_cast<long>(map.height) &&
         x < static_cast<long>(map.width);
}

}  // namespace

void bilinear_sample_slice(const FeatureMap& map, Vec2 point, std::size_t c0, std::size_t n,
                           double* out) {
  if (!std::isfinite(point.x) || !std::isfinite(point.y)) {
    throw DomainError("bilinear_sample: non-finite point");
  }
  const BilinearTaps t = taps_for(map, point);
  const bool b00 = in_bounds(t.y0, t.x0, map);
  const bool b01 = in_bounds(t.y0, t.x1, map);
  const bool b10 = in_bounds(t.y1, t.x0, map);
  const bool b11 = in_bounds(t.y1, t.x1, map);
  const std::size_t w = map.width;
  for (std::size_t i = 0; i < n; ++i) {
    const double* plane = map.plane(c0 + i);
    const double v00 = b00 ? plane[t.y0 * w + t.x0] : 0.0;
    const double v01 = b01 ? plane[t.y0 * w + t.x1] : 0.0;
    const double v10 = b10 ? plane[t.y1 * w + t.x0] : 0.0;
    const double v11 = b11 ? plane[t.y1 * w + t.x1] : 0.0;
    out[i] = t.wy0 * (t.wx0 * v00 + t.wx1 * v01) + t.wy1 * (t.wx0 * v10 + t.wx1 * v11);
  }
}

std::vector<double> bilinear_sample(const FeatureMap& map, Vec2 point) {
  std::vector<double> out(map.channels);
  bilinear_sample_slice(map, point, 0, map.channels, out.data());
  return out;
}

void bilinear_sample_backward(const FeatureMap& map, Vec2 point, const double* upstream,
                              std::size_t c0, std::size_t n, FeatureMap& grad_map,
                              Vec2& grad_point) {
  if (!std::isfinite(point.x) || !std::isfinite(point.y)) {
    throw DomainError("bilinear_sample_backward: non-finite point");
  }
  const BilinearTaps t = taps_for(map, point);
  const bool b00 = in_bounds(t.y0, t.x0, map);
  const bool b01 = in_bounds(t.y0, t.x1, map);
  const bool b10 = in_bounds(t.y1, t.x0, map);
  const bool b11 = in_bounds(t.y1, t.x1, map);
  const std::size_t w = map.width;
  double gx_pix = 0.0;
  double gy_pix = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = upstream[i];
    const double* plane = map.plane(c0 + i);
    double* gplane = grad_map.plane(c0 + i);
    const double v00 = b00 ? plane[t.y0 * w + t.x0] : 0.0;
    const double v01 = b01 ? plane[t.y0 * w + t.x1] : 0.0;
    const double v10 = b10 ? plane[t.y1 * w + t.x0] : 0.0;
    const double v11 = b11 ? plane[t.y1 * w + t.x1] : 0.0;
    if (b00) gplane[t.y0 * w + t.x0] += g * t.wy0 * t.wx0;
    if (b01) gplane[t.y0 * w + t.x1] += g * t.wy0 * t.wx1;
    if (b10) gplane[t.y1 * w + t.x0] += g * t.wy1 * t.wx0;
    if (b11) gplane[t.y1 * w + t.x1] += g * t.wy1 * t.wx1;
    gx_pix += g * (t.wy0 * (v01 - v00) + t.wy1 * (v11 - v10));
    gy_pix += g * (t.wx0 * (v10 - v00) + t.wx1 * (v11 - v01));
  }
  // d(x_pix)/d(x_norm) = width, likewise for y.
  grad_point.x += gx_pix * static_cast<double>(map.width);
  grad_point.y += gy_pix * static_cast<double>(map.height);
}

FeatureMap conv2d(const FeatureMap& input, const Tensor& kernel, std::span<const double> bias,
                  std::pair<int, int> padding, std::pair<int, int> stride) {
  if (kernel.rank() != 4) throw ShapeError("conv2d: kernel must be rank 4 (outC, inC, kH, kW)");
  const std::size_t out_c = kernel.extent(0);
  const std::size_t in_c = kernel.extent(1);
  const std::size_t kh = kernel.extent(2);
  const std::size_t kw = kernel.extent(3);
  if (in_c != input.channels) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(in_c) + " input channels, map has " +
                     std::to_string(input.channels));
  }
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
  if (!bias.empty() && bias.size() != out_c) throw ShapeError("conv2d: bias length mismatch");
  const int ph = padding.first, pw = padding.second;
  const int sh = stride.first, sw = stride.second;
  const long in_h = static_cast<long>(input.height), in_w = static_cast<long>(input.width);
  const long out_h = (in_h + 2 * ph - static_cast<long>(kh)) / sh + 1;
  const long out_w = (in_w + 2 * pw - static_cast<long>(kw)) / sw + 1;
  if (out_h < 1 || out_w < 1) throw ShapeError("conv2d: output would be empty");

  FeatureMap out(out_c, static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w));
  for (std::size_t oc = 0; oc < out_c; ++oc) {
    double* oplane = out.plane(oc);
    const double b = bias.empty() ? 0.0 : bias[oc];
    for (long oy = 0; oy < out_h; ++oy) {
      for (long ox = 0; ox < out_w; ++ox) {
        double acc = b;
        for (std::size_t ic = 0; ic < in_c; ++ic) {
          const double* iplane = input.plane(ic);
          const double* kbase = kernel.data() + ((oc * in_c + ic) * kh) * kw;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const long iy = oy * sh + static_cast<long>(ky) - ph;
            if (iy < 0 || iy >= in_h) continue;
            const double* irow = iplane + iy * in_w;
            const double* krow = kbase + ky * kw;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const long ix = ox * sw + static_cast<long>(kx) - pw;
              if (ix < 0 || ix >= in_w) continue;
              acc += irow[ix] * krow[kx];
            }
          }
        }
        oplane[oy * out_w + ox] = acc;
      }
    }
  }
  return out;
}

void conv2d_backward(const FeatureMap& input, const Tensor& kernel, const FeatureMap& grad_out,
                     std::pair<int, int> padding, std::pair<int, int> stride,
                     FeatureMap* grad_input, Tensor* grad_kernel, std::vector<double>* grad_bias) {
  const std::size_t out_c = kernel.extent(0);
  const std::size_t in_c = kernel.extent(1);
  const std::size_t kh = kernel.extent(2);
  const std::size_t kw = kernel.extent(3);
  const int ph = padding.first, pw = padding.second;
  const int sh = stride.first, sw = stride.second;
  const long in_h = static_cast<long>(input.height), in_w = static_cast<long>(input.width);
  const long out_h = static_cast<long>(grad_out.height), out_w = static_cast<long>(grad_out.width);

  for (std::size_t oc = 0; oc < out_c; ++oc) {
    const double* gplane = grad_out.plane(oc);
    if (grad_bias) {
      double acc = 0.0;
      for (long i = 0; i < out_h * out_w; ++i) acc += gplane[i];
      (*grad_bias)[oc] += acc;
    }
    for (std::size_t ic = 0; ic < in_c; ++ic) {
      const double* iplane = input.plane(ic);
      double* giplane = grad_input ? grad_input->plane(ic) : nullptr;
      double* kgbase =
          grad_kernel ? grad_kernel->data() + ((oc * in_c + ic) * kh) * kw : nullptr;
      const double* kbase = kernel.data() + ((oc * in_c + ic) * kh) * kw;
      for (long oy = 0; oy < out_h; ++oy) {
        for (long ox = 0; ox < out_w; ++ox) {
          const double g = gplane[oy * out_w + ox];
          if (g == 0.0) continue;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const long iy = oy * sh + static_cast<long>(ky) - ph;
            if (iy < 0 || iy >= in_h) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const long ix = ox * sw + static_cast<long>(kx) - pw;
              if (ix < 0 || ix >= in_w) continue;
              if (kgbase) kgbase[ky * kw + kx] += g * iplane[iy * in_w + ix];
              if (giplane) giplane[iy * in_w + ix] += g * kbase[ky * kw + kx];
            }
          }
        }
      }
    }
  }
}

Tensor softmax_over_samples(const Tensor& logits) {
  if (logits.rank() < 2) throw ShapeError("softmax_over_samples: rank must be >= 2");
  const std::size_t heads = logits.extent(0);
  const std::size_t n = logits.size() / heads;
  Tensor out(logits.shape());
  for (std::size_t m = 0; m < heads; ++m) {
    const double* in = logits.data() + m * n;
    double* o = out.data() + m * n;
    double mx = in[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      o[i] = std::exp(in[i] - mx);
      sum += o[i];
    }
    const double inv = 1.0 / sum;
    for (std::size_t i = 0; i < n; ++i) o[i] *= inv;
  }
  return out;
}

Tensor softmax_over_samples_backward(const Tensor& softmax_out, const Tensor& grad_out) {
  if (!softmax_out.same_shape(grad_out)) {
    throw ShapeError("softmax backward: shape mismatch");
  }
  const std::size_t heads = softmax_out.extent(0);
  const std::size_t n = softmax_out.size() / heads;
  Tensor grad(softmax_out.shape());
  for (std::size_t m = 0; m < heads; ++m) {
    const double* y = softmax_out.data() + m * n;
    const double* g = grad_out.data() + m * n;
    double* gl = grad.data() + m * n;
    double inner = 0.0;
    for (std::size_t i = 0; i < n; ++i) inner += y[i] * g[i];
    for (std::size_t i = 0; i < n; ++i) gl[i] = y[i] * (g[i] - inner);
  }
  return grad;
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double step) {
  if (!(step > 0.0)) throw DomainError("finite_difference_gradient: step must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double fp = f(probe);
    probe[i] = saved - step;
    const double fm = f(probe);
    probe[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw DomainError("finite_difference_gradient: non-finite function value");
    }
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

}  // namespace linea
