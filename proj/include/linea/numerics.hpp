#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "linea/tensor.hpp"

namespace linea {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
};

inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

// Bilinear interpolation of all channels at a normalized coordinate.
// (x, y) in [0,1]^2 maps to pixel space as x_pix = x*width - 0.5,
// y_pix = y*height - 0.5, so (0.5/W, 0.5/H) is the center of pixel (0,0).
// Pixels outside the grid contribute zero. Throws DomainError on a
// non-finite point.
std::vector<double> bilinear_sample(const FeatureMap& map, Vec2 point);

// Same interpolation restricted to channels [c0, c0+n); writes n values.
void bilinear_sample_slice(const FeatureMap& map, Vec2 point, std::size_t c0, std::size_t n,
                           double* out);

// Accumulates d(loss)/d(map values) into grad_map and d(loss)/d(point) into
// grad_point, given upstream[i] = d(loss)/d(sample value of channel c0+i).
// The point gradient is taken in normalized coordinates.
void bilinear_sample_backward(const FeatureMap& map, Vec2 point, const double* upstream,
                              std::size_t c0, std::size_t n, FeatureMap& grad_map,
                              Vec2& grad_point);

// Cross-correlation with zero padding. kernel shape (outC, inC, kH, kW) with
// odd kH, kW; bias may be empty. Output spatial size is preserved when
// padding = (kH/2, kW/2) and stride = 1.
FeatureMap conv2d(const FeatureMap& input, const Tensor& kernel, std::span<const double> bias,
                  std::pair<int, int> padding, std::pair<int, int> stride = {1, 1});

// Backward pass matching conv2d. Any of the gradient outputs may be null;
// non-null ones are accumulated into (not overwritten).
void conv2d_backward(const FeatureMap& input, const Tensor& kernel, const FeatureMap& grad_out,
                     std::pair<int, int> padding, std::pair<int, int> stride,
                     FeatureMap* grad_input, Tensor* grad_kernel, std::vector<double>* grad_bias);

// Softmax over every dimension except the first. For logits shaped (M, L, P)
// this normalizes each head's L*P entries to sum to 1.
Tensor softmax_over_samples(const Tensor& logits);

// d(loss)/d(logits) from d(loss)/d(softmax output); `softmax_out` is the
// forward result.
Tensor softmax_over_samples_backward(const Tensor& softmax_out, const Tensor& grad_out);

// Central-difference gradient (f(x+h e_i) - f(x-h e_i)) / (2h) of a scalar
// function. The ground-truth oracle for every analytic gradient in the repo.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double step);

}  // namespace linea
