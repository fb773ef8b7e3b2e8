#include "linea/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace linea {

MidpointDelta midpoint_delta(const LineSegment& line) {
  return {{(line.ep1.x + line.ep2.x) * 0.5, (line.ep1.y + line.ep2.y) * 0.5},
          {line.ep1.x - line.ep2.x, line.ep1.y - line.ep2.y}};
}

double inverse_sigmoid(double x) {
  constexpr double eps = 1e-5;
  const double c = std::clamp(x, eps, 1.0 - eps);
  return std::log(c / (1.0 - c));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor get_norm_coords(std::span<const std::size_t> indices,
                       std::span<const LevelShape> level_shapes) {
  std::size_t total = 0;
  for (const auto& s : level_shapes) total += s.height * s.width;
  Tensor coords({indices.size(), 2});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::size_t idx = indices[i];
    if (idx >= total) {
      throw DomainError("get_norm_coords: index " + std::to_string(idx) +
                        " out of range for total " + std::to_string(total));
    }
    std::size_t lvl = 0;
    while (idx >= level_shapes[lvl].height * level_shapes[lvl].width) {
      idx -= level_shapes[lvl].height * level_shapes[lvl].width;
      ++lvl;
    }
    const std::size_t w = level_shapes[lvl].width;
    const std::size_t row = idx / w;
    const std::size_t col = idx % w;
    coords(i, 0) = (static_cast<double>(col) + 0.5) / static_cast<double>(w);
    coords(i, 1) = (static_cast<double>(row) + 0.5) / static_cast<double>(level_shapes[lvl].height);
  }
  return coords;
}

AnchorSet generate_anchors(const Tensor& concat_features, std::size_t k,
                           std::span<const LevelShape> level_shapes, const LinearMap& prob_head,
                           const LinearMap& offset_head) {
  if (concat_features.rank() != 2) throw ShapeError("generate_anchors: features must be (N, d)");
  const std::size_t n = concat_features.extent(0);
  const std::size_t d = concat_features.extent(1);
  if (k > n) {
    throw ConfigError("generate_anchors: k=" + std::to_string(k) + " exceeds pixel count " +
                      std::to_string(n));
  }
  if (prob_head.in_dim() != d || prob_head.out_dim() != 1) {
    throw ShapeError("generate_anchors: prob_head must map d -> 1");
  }
  if (offset_head.in_dim() != d || offset_head.out_dim() != 4) {
    throw ShapeError("generate_anchors: offset_head must map d -> 4");
  }

  std::vector<double> logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    prob_head.apply(concat_features.data() + i * d, &logits[i]);
  }

  // Top-k by logit, ties broken by lower flat index.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (logits[a] != logits[b]) return logits[a] > logits[b];
                      return a < b;
                    });
  order.resize(k);

  const Tensor coords = get_norm_coords(order, level_shapes);

  AnchorSet set;
  set.anchors = Tensor({k, 4});
  set.source_indices = order;
  set.proposals.resize(k);
  double offset[4];
  for (std::size_t i = 0; i < k; ++i) {
    set.proposals[i] = logits[order[i]];
    offset_head.apply(concat_features.data() + order[i] * d, offset);
    const double lx = inverse_sigmoid(coords(i, 0));
    const double ly = inverse_sigmoid(coords(i, 1));
    set.anchors(i, 0) = lx + offset[0];
    set.anchors(i, 1) = ly + offset[1];
    set.anchors(i, 2) = lx + offset[2];
    set.anchors(i, 3) = ly + offset[3];
  }
  return set;
}

}  // namespace linea
