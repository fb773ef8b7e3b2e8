#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "linea/geometry.hpp"
#include "linea/linear.hpp"
#include "linea/tensor.hpp"

namespace linea {

// Shape of a deformable line attention operator. Sample counts may differ per
// level, e.g. (4, 1, 1); tensors ranging over (level, point) are flattened to
// total_points() entries in level order.
struct DlaConfig {
  std::size_t heads = 8;                        // M
  std::vector<std::size_t> points_per_level;    // P_l, length L
  std::size_t embed_dim = 256;                  // d

  std::size_t levels() const { return points_per_level.size(); }
  std::size_t total_points() const {
    std::size_t t = 0;
    for (auto p : points_per_level) t += p;
    return t;
  }
  std::size_t head_dim() const { return embed_dim / heads; }
  void validate() const;
};

// Learnable pieces. alpha_head and attn_head map the content query to
// steplengths and attention logits, one per (head, level, point). value_proj
// is per level (input channels may differ); out_proj mixes the concatenated
// head outputs.
struct DlaParams {
  LinearMap alpha_head;                // d -> M * total_points
  LinearMap attn_head;                 // d -> M * total_points
  std::vector<LinearMap> value_proj;   // level l: C_l -> d
  LinearMap out_proj;                  // d -> d
};

// Gradient accumulator: same shapes as the params themselves.
using DlaParamGrads = DlaParams;

DlaParams make_dla_params(const DlaConfig& config, std::span<const std::size_t> level_channels,
                          std::uint64_t seed);
DlaParamGrads make_dla_grads(const DlaParams& params);

// Sampling locations, flattened (M, total_points, 2). Every point lies on the
// line through the query's endpoints: p = mid + alpha * delta.
struct SamplingTensor {
  std::size_t heads = 0;
  std::vector<std::size_t> points_per_level;
  Tensor points;  // (M, total_points, 2)

  Vec2 at(std::size_t m, std::size_t flat) const {
    return {points(m, flat, 0), points(m, flat, 1)};
  }
};

// Per-head normalized attention weights, flattened (M, total_points).
struct AttentionTensor {
  Tensor weights;
};

// Eq. of motion for the sampling points: p_mlp = mid + alpha_mlp * delta.
// alpha has shape (M, total_points).
SamplingTensor sampling_points(const LineSegment& line, const Tensor& alpha,
                               std::span<const std::size_t> points_per_level);

// Weighted aggregation over value-projected feature maps (each d channels,
// head m reads channels [m*d/M, (m+1)*d/M)), followed by out_proj.
std::vector<double> dla_forward(const std::vector<FeatureMap>& value_maps,
                                const SamplingTensor& S, const AttentionTensor& A,
                                const LinearMap& out_proj);

// Applies each level's value projection as a 1x1 channel map.
std::vector<FeatureMap> project_values(const std::vector<FeatureMap>& features,
                                       const DlaParams& params);

// Full per-query operator: generate alpha and attention logits from the
// content query, place samples on the query's line, aggregate.
std::vector<double> dla_attention(std::span<const double> query_content, const LineSegment& line,
                                  const std::vector<FeatureMap>& features, const DlaConfig& config,
                                  const DlaParams& params);

// Saved intermediates for one dla_attention evaluation.
struct DlaTrace {
  std::vector<double> query;   // d
  LineSegment line;
  Tensor alpha;                // (M, TP)
  Tensor attn;                 // (M, TP), post-softmax
  SamplingTensor S;
  Tensor samples;              // (M, TP, head_dim) bilinear reads
  std::vector<double> head_concat;  // d, pre-out_proj
};

// Traced forward against pre-projected value maps (shared across queries).
std::vector<double> dla_attention_traced(std::span<const double> query_content,
                                         const LineSegment& line,
                                         const std::vector<FeatureMap>& value_maps,
                                         const DlaConfig& config, const DlaParams& params,
                                         DlaTrace& trace);

// Gradients produced by dla_backward for one query. Feature-map gradients are
// accumulated into caller-owned buffers (value maps are shared).
struct DlaInputGrads {
  std::vector<double> query;  // d
  Vec2 ep1, ep2;
};

// Analytic backward through out_proj, the weighted sum, bilinear
// interpolation, the sampling equation (dp/dalpha = delta,
// dp/dep1 = alpha + 1/2, dp/dep2 = -alpha + 1/2 per coordinate) and softmax.
// Accumulates into grads, value_map_grads and input_grads.
void dla_backward(std::span<const double> upstream, const DlaTrace& trace,
                  const std::vector<FeatureMap>& value_maps, const DlaConfig& config,
                  const DlaParams& params, DlaParamGrads& grads,
                  std::vector<FeatureMap>& value_map_grads, DlaInputGrads& input_grads);

// Backward of project_values: pushes value-map gradients into per-level
// projection params and (optionally) the raw feature maps.
void project_values_backward(const std::vector<FeatureMap>& features, const DlaParams& params,
                             const std::vector<FeatureMap>& value_map_grads, DlaParamGrads& grads,
                             std::vector<FeatureMap>* feature_grads);

// Closed-form per-query cost model (multiply and add each count as one op;
// the 4 interpolation reads are counted per the documented formula):
//   alpha head   2 * d * M * TP
//   attn head    2 * d * M * TP
//   sampling     6 * M * TP
//   bilinear     (4 + 7) * TP * d      (4 reads + 7 multiply-adds per point
//                                       per channel of the head's slice)
//   out_proj     2 * d^2
// multiplied by num_queries. Per-image costs (value projection, softmax) are
// excluded; both comparators exclude them identically.
std::uint64_t count_flops(const DlaConfig& config, std::size_t num_queries);

// Same accounting for multi-scale deformable attention: the offset head emits
// two coordinates per point instead of one steplength, and sampling is a
// 2-add offset application per point.
std::uint64_t count_flops_mda(const DlaConfig& config, std::size_t num_queries);

}  // namespace linea
