#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "linea/attention.hpp"
#include "linea/tensor.hpp"

namespace linea {

// Convolution parameter bundle; kernel (outC, inC, kH, kW), bias (outC).
struct Conv {
  Tensor kernel;
  Tensor bias;

  Conv() = default;
  Conv(std::size_t out_c, std::size_t in_c, std::size_t kh, std::size_t kw)
      : kernel({out_c, in_c, kh, kw}), bias({out_c}) {}
};

// One GELAN block: four parallel branches over the same C channels. The
// asymmetric 1x3 / 3x1 branches are what the block adds for line features.
struct GelanBranchParams {
  std::size_t channels = 0;
  Conv k3x3, k1x3, k3x1, k1x1;

  explicit GelanBranchParams(std::size_t c = 0)
      : channels(c), k3x3(c, c, 3, 3), k1x3(c, c, 1, 3), k3x1(c, c, 3, 1), k1x1(c, c, 1, 1) {}
};

// Cross-scale fusion module: 1x1 in/out projections around `depth` residual
// branch blocks.
struct GelanParams {
  std::size_t hidden_dim = 0;
  Conv in_proj;   // 1x1: 2d -> C
  Conv out_proj;  // 1x1: C -> d
  std::vector<GelanBranchParams> blocks;
};

enum class GelanMode { kTrain, kDeploy };

GelanParams make_gelan_params(std::size_t embed_dim, std::size_t hidden_dim, std::size_t depth,
                              const char* name, std::uint64_t seed);
GelanParams make_gelan_grads(const GelanParams& params);

// 1x1 channel unification, one projection per level.
std::vector<FeatureMap> project_channels(const std::vector<FeatureMap>& maps,
                                         std::span<const Conv> projections);

// Nearest-neighbor factor-2 upsampling; out extents must be 2*in or 2*in - 1.
FeatureMap upsample_nearest2(const FeatureMap& lo, std::size_t out_h, std::size_t out_w);

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b);

// Self-attention over the map's H*W tokens plus residual.
FeatureMap self_attention_smallest(const FeatureMap& map, const MhaParams& params);
FeatureMap self_attention_smallest_traced(const FeatureMap& map, const MhaParams& params,
                                          MhaTrace& trace);
FeatureMap self_attention_smallest_backward(const FeatureMap& g_out, const MhaTrace& trace,
                                            const MhaParams& params, MhaParams& grads);

// Branch sum k3x3(x) + k1x3(x) + k3x1(x) + k1x1(x); residual added by caller.
FeatureMap gelan_branch_sum(const GelanBranchParams& block, const FeatureMap& x);

// Zero-pads the 1x3, 3x1 and 1x1 kernels into 3x3 position and sums all four
// kernels and biases. Convolving with the result equals the sum of branch
// convolutions for every input.
std::pair<Tensor, Tensor> fuse_kernels(const GelanBranchParams& params);

// Fuses lo (upsampled) into hi. Train mode runs the four parallel branches;
// deploy mode runs each block as a single fused 3x3 convolution. The two
// modes compute the same function.
FeatureMap gelan_forward(const FeatureMap& hi, const FeatureMap& lo, const GelanParams& params,
                         GelanMode mode);

struct GelanTrace {
  FeatureMap concat;                  // in_proj input
  std::vector<FeatureMap> block_in;   // h before each block
  FeatureMap h_final;                 // out_proj input
  std::size_t lo_h = 0, lo_w = 0;
};

FeatureMap gelan_forward_traced(const FeatureMap& hi, const FeatureMap& lo,
                                const GelanParams& params, GelanTrace& trace);
void gelan_backward(const FeatureMap& g_out, const GelanTrace& trace, const GelanParams& params,
                    GelanParams& grads, FeatureMap& g_hi, FeatureMap& g_lo);

// Analytic conv cost (2*inC*outC*kH*kW per output pixel). In deploy mode each
// block costs exactly one 3x3 convolution regardless of branch count.
std::uint64_t gelan_flops(const GelanParams& params, GelanMode mode, std::size_t h, std::size_t w);

}  // namespace linea
