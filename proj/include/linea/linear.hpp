#pragma once

#include <span>

#include "linea/tensor.hpp"

namespace linea {

// Affine map y = W x + b with W stored (out, in) row-major. Also used as the
// gradient accumulator for itself (same shapes).
struct LinearMap {
  Tensor w;  // (out, in)
  Tensor b;  // (out)

  LinearMap() = default;
  LinearMap(std::size_t out, std::size_t in) : w({out, in}), b({out}) {}

  std::size_t in_dim() const { return w.rank() == 2 ? w.extent(1) : 0; }
  std::size_t out_dim() const { return w.rank() == 2 ? w.extent(0) : 0; }

  void apply(const double* x, double* y) const {
    const std::size_t out = out_dim(), in = in_dim();
    const double* wp = w.data();
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      const double* row = wp + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
      y[o] = acc;
    }
  }

  std::vector<double> apply(std::span<const double> x) const {
    if (x.size() != in_dim()) throw ShapeError("LinearMap: input dimension mismatch");
    std::vector<double> y(out_dim());
    apply(x.data(), y.data());
    return y;
  }

  void set_zero() {
    w.set_zero();
    b.set_zero();
  }
};

// Accumulates parameter gradients into `grad` and, when non-null, input
// gradients into gx, given gy = d(loss)/dy.
inline void linear_backward(const LinearMap& m, const double* x, const double* gy, LinearMap* grad,
                            double* gx) {
  const std::size_t out = m.out_dim(), in = m.in_dim();
  for (std::size_t o = 0; o < out; ++o) {
    const double g = gy[o];
    if (grad) {
      grad->b[o] += g;
      double* grow = grad->w.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) grow[i] += g * x[i];
    }
    if (gx && g != 0.0) {
      const double* row = m.w.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) gx[i] += g * row[i];
    }
  }
}

}  // namespace linea
