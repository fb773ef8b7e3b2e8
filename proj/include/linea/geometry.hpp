#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "linea/linear.hpp"
#include "linea/numerics.hpp"
#include "linea/tensor.hpp"

namespace linea {

// A segment in image-relative coordinates. The unordered endpoint pair is the
// identity: matching and metrics must treat (ep1, ep2) and (ep2, ep1) alike.
struct LineSegment {
  Vec2 ep1;
  Vec2 ep2;
};

struct MidpointDelta {
  Vec2 mid;    // (ep1 + ep2) / 2
  Vec2 delta;  // ep1 - ep2
};

MidpointDelta midpoint_delta(const LineSegment& line);

// Log-odds of x clamped to [eps, 1-eps], eps = 1e-5.
double inverse_sigmoid(double x);
double sigmoid(double x);

struct LevelShape {
  std::size_t height = 0;
  std::size_t width = 0;
};

// Resolves flat pixel indices over concatenated feature levels into
// pixel-center normalized coordinates ((col+0.5)/W, (row+0.5)/H).
Tensor get_norm_coords(std::span<const std::size_t> indices,
                       std::span<const LevelShape> level_shapes);

// Positional state for k queries. anchors live in logit space, 4 components
// per row decoding (via sigmoid) to two normalized endpoints.
struct AnchorSet {
  Tensor anchors;                           // (k, 4)
  std::vector<std::size_t> source_indices;  // flat pixel indices, selection order
  std::vector<double> proposals;            // per-anchor class logits
};

// Top-k pixel selection and anchor initialization. Selects the k pixels with
// the highest prob_head logit (ties broken by lower flat index), lifts their
// pixel-center coordinates to logit space, duplicates to 4 components and
// adds offset_head applied to the selected pixels' feature rows.
AnchorSet generate_anchors(const Tensor& concat_features, std::size_t k,
                           std::span<const LevelShape> level_shapes, const LinearMap& prob_head,
                           const LinearMap& offset_head);

}  // namespace linea
