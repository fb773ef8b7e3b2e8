#include "linea/encoder.hpp"

#include <cmath>
#include <string>

#include "linea/errors.hpp"
#include "linea/numerics.hpp"
#include "linea/rng.hpp"

namespace linea {

namespace {

void conv_init(Conv& c, const std::string& name, std::uint64_t seed) {
  CounterRng rng(seed, CounterRng::hash_name(name.c_str()));
  const std::size_t fan_in = c.kernel.extent(1) * c.kernel.extent(2) * c.kernel.extent(3);
  const std::size_t fan_out = c.kernel.extent(0) * c.kernel.extent(2) * c.kernel.extent(3);
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < c.kernel.size(); ++i) c.kernel[i] = rng.uniform(-a, a);
  c.bias.set_zero();
}

std::pair<int, int> same_padding(const Conv& c) {
  return {static_cast<int>(c.kernel.extent(2) / 2), static_cast<int>(c.kernel.extent(3) / 2)};
}

Tensor map_to_tokens(const FeatureMap& map) {
  Tensor tokens({map.height * map.width, map.channels});
  for (std::size_t c = 0; c < map.channels; ++c) {
    const double* plane = map.plane(c);
    for (std::size_t i = 0; i < map.height * map.width; ++i) tokens(i, c) = plane[i];
  }
  return tokens;
}

FeatureMap tokens_to_map(const Tensor& tokens, std::size_t h, std::size_t w) {
  FeatureMap map(tokens.extent(1), h, w);
  for (std::size_t c = 0; c < map.channels; ++c) {
    double* plane = map.plane(c);
    for (std::size_t i = 0; i < h * w; ++i) plane[i] = tokens(i, c);
  }
  return map;
}

void add_into(FeatureMap& dst, const FeatureMap& src) {
  for (std::size_t i = 0; i < dst.values.size(); ++i) dst.values[i] += src.values[i];
}

}  // namespace

GelanParams make_gelan_params(std::size_t embed_dim, std::size_t hidden_dim, std::size_t depth,
                              const char* name, std::uint64_t seed) {
  GelanParams p;
  p.hidden_dim = hidden_dim;
  p.in_proj = Conv(hidden_dim, 2 * embed_dim, 1, 1);
  p.out_proj = Conv(embed_dim, hidden_dim, 1, 1);
  const std::string base(name);
  conv_init(p.in_proj, base + ".in_proj", seed);
  conv_init(p.out_proj, base + ".out_proj", seed);
  for (std::size_t b = 0; b < depth; ++b) {
    GelanBranchParams blk(hidden_dim);
    conv_init(blk.k3x3, base + ".b" + std::to_string(b) + ".k3x3", seed);
    conv_init(blk.k1x3, base + ".b" + std::to_string(b) + ".k1x3", seed);
    conv_init(blk.k3x1, base + ".b" + std::to_string(b) + ".k3x1", seed);
    conv_init(blk.k1x1, base + ".b" + std::to_string(b) + ".k1x1", seed);
    p.blocks.push_back(std::move(blk));
  }
  return p;
}

GelanParams make_gelan_grads(const GelanParams& params) {
  GelanParams g;
  g.hidden_dim = params.hidden_dim;
  g.in_proj = Conv(params.in_proj.kernel.extent(0), params.in_proj.kernel.extent(1), 1, 1);
  g.out_proj = Conv(params.out_proj.kernel.extent(0), params.out_proj.kernel.extent(1), 1, 1);
  for (const auto& blk : params.blocks) g.blocks.emplace_back(blk.channels);
  return g;
}

std::vector<FeatureMap> project_channels(const std::vector<FeatureMap>& maps,
                                         std::span<const Conv> projections) {
  if (maps.size() != projections.size()) {
    throw ShapeError("project_channels: " + std::to_string(maps.size()) + " maps but " +
                     std::to_string(projections.size()) + " projections");
  }
  std::vector<FeatureMap> out;
  out.reserve(maps.size());
  for (std::size_t l = 0; l < maps.size(); ++l) {
    out.push_back(conv2d(maps[l], projections[l].kernel, projections[l].bias.flat(), {0, 0}));
  }
  return out;
}

FeatureMap upsample_nearest2(const FeatureMap& lo, std::size_t out_h, std::size_t out_w) {
  if (out_h > 2 * lo.height || out_h + 1 < 2 * lo.height || out_w > 2 * lo.width ||
      out_w + 1 < 2 * lo.width) {
    throw ShapeError("upsample_nearest2: target " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " is not a factor-2 upsampling of " +
                     std::to_string(lo.height) + "x" + std::to_string(lo.width));
  }
  FeatureMap out(lo.channels, out_h, out_w);
  for (std::size_t c = 0; c < lo.channels; ++c) {
    const double* src = lo.plane(c);
    double* dst = out.plane(c);
    for (std::size_t y = 0; y < out_h; ++y) {
      const std::size_t sy = std::min(y / 2, lo.height - 1);
      for (std::size_t x = 0; x < out_w; ++x) {
        dst[y * out_w + x] = src[sy * lo.width + std::min(x / 2, lo.width - 1)];
      }
    }
  }
  return out;
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("concat_channels: spatial sizes differ");
  }
  FeatureMap out(a.channels + b.channels, a.height, a.width);
  std::copy(a.values.data(), a.values.data() + a.values.size(), out.values.data());
  std::copy(b.values.data(), b.values.data() + b.values.size(),
            out.values.data() + a.values.size());
  return out;
}

FeatureMap self_attention_smallest(const FeatureMap& map, const MhaParams& params) {
  MhaTrace trace;
  return self_attention_smallest_traced(map, params, trace);
}

FeatureMap self_attention_smallest_traced(const FeatureMap& map, const MhaParams& params,
                                          MhaTrace& trace) {
  if (map.channels != params.wq.in_dim()) {
    throw ShapeError("self_attention_smallest: map channels must equal attention width");
  }
  const Tensor tokens = map_to_tokens(map);
  Tensor out = mha_forward(tokens, params, &trace);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += tokens[i];
  return tokens_to_map(out, map.height, map.width);
}

FeatureMap self_attention_smallest_backward(const FeatureMap& g_out, const MhaTrace& trace,
                                            const MhaParams& params, MhaParams& grads) {
  const Tensor g_tokens = map_to_tokens(g_out);
  Tensor g_x = mha_backward(g_tokens, trace, params, grads);
  for (std::size_t i = 0; i < g_x.size(); ++i) g_x[i] += g_tokens[i];  // residual path
  return tokens_to_map(g_x, g_out.height, g_out.width);
}

FeatureMap gelan_branch_sum(const GelanBranchParams& block, const FeatureMap& x) {
  FeatureMap acc = conv2d(x, block.k3x3.kernel, block.k3x3.bias.flat(), same_padding(block.k3x3));
  add_into(acc, conv2d(x, block.k1x3.kernel, block.k1x3.bias.flat(), same_padding(block.k1x3)));
  add_into(acc, conv2d(x, block.k3x1.kernel, block.k3x1.bias.flat(), same_padding(block.k3x1)));
  add_into(acc, conv2d(x, block.k1x1.kernel, block.k1x1.bias.flat(), same_padding(block.k1x1)));
  return acc;
}

std::pair<Tensor, Tensor> fuse_kernels(const GelanBranchParams& params) {
  const std::size_t c = params.channels;
  Tensor fused({c, c, 3, 3});
  Tensor bias({c});
  for (std::size_t o = 0; o < c; ++o) {
    bias[o] = params.k3x3.bias[o] + params.k1x3.bias[o] + params.k3x1.bias[o] +
              params.k1x1.bias[o];
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t y = 0; y < 3; ++y) {
        for (std::size_t x = 0; x < 3; ++x) {
          double v = params.k3x3.kernel(o, i, y, x);
          if (y == 1) v += params.k1x3.kernel(o, i, 0, x);
          if (x == 1) v += params.k3x1.kernel(o, i, y, 0);
          if (y == 1 && x == 1) v += params.k1x1.kernel(o, i, 0, 0);
          fused(o, i, y, x) = v;
        }
      }
    }
  }
  return {std::move(fused), std::move(bias)};
}

FeatureMap gelan_forward(const FeatureMap& hi, const FeatureMap& lo, const GelanParams& params,
                         GelanMode mode) {
  const FeatureMap up = upsample_nearest2(lo, hi.height, hi.width);
  const FeatureMap cat = concat_channels(hi, up);
  FeatureMap h = conv2d(cat, params.in_proj.kernel, params.in_proj.bias.flat(), {0, 0});
  for (const auto& block : params.blocks) {
    if (mode == GelanMode::kTrain) {
      add_into(h, gelan_branch_sum(block, h));
    } else {
      auto [fused, bias] = fuse_kernels(block);
      add_into(h, conv2d(h, fused, bias.flat(), {1, 1}));
    }
  }
  return conv2d(h, params.out_proj.kernel, params.out_proj.bias.flat(), {0, 0});
}

FeatureMap gelan_forward_traced(const FeatureMap& hi, const FeatureMap& lo,
                                const GelanParams& params, GelanTrace& trace) {
  const FeatureMap up = upsample_nearest2(lo, hi.height, hi.width);
  trace.concat = concat_channels(hi, up);
  trace.lo_h = lo.height;
  trace.lo_w = lo.width;
  FeatureMap h = conv2d(trace.concat, params.in_proj.kernel, params.in_proj.bias.flat(), {0, 0});
  trace.block_in.clear();
  for (const auto& block : params.blocks) {
    trace.block_in.push_back(h);
    add_into(h, gelan_branch_sum(block, h));
  }
  trace.h_final = h;
  return conv2d(h, params.out_proj.kernel, params.out_proj.bias.flat(), {0, 0});
}

void gelan_backward(const FeatureMap& g_out, const GelanTrace& trace, const GelanParams& params,
                    GelanParams& grads, FeatureMap& g_hi, FeatureMap& g_lo) {
  // out_proj
  FeatureMap g_h(trace.h_final.channels, trace.h_final.height, trace.h_final.width);
  {
    std::vector<double> gb(params.out_proj.bias.size(), 0.0);
    conv2d_backward(trace.h_final, params.out_proj.kernel, g_out, {0, 0}, {1, 1}, &g_h,
                    &grads.out_proj.kernel, &gb);
    for (std::size_t i = 0; i < gb.size(); ++i) grads.out_proj.bias[i] += gb[i];
  }

  // blocks in reverse; residual splits the gradient
  for (std::size_t bi = params.blocks.size(); bi-- > 0;) {
    const auto& block = params.blocks[bi];
    auto& gblock = grads.blocks[bi];
    const FeatureMap& x = trace.block_in[bi];
    FeatureMap g_x(x.channels, x.height, x.width);
    auto branch_back = [&](const Conv& conv, Conv& gconv) {
      std::vector<double> gb(conv.bias.size(), 0.0);
      conv2d_backward(x, conv.kernel, g_h, same_padding(conv), {1, 1}, &g_x, &gconv.kernel, &gb);
      for (std::size_t i = 0; i < gb.size(); ++i) gconv.bias[i] += gb[i];
    };
    branch_back(block.k3x3, gblock.k3x3);
    branch_back(block.k1x3, gblock.k1x3);
    branch_back(block.k3x1, gblock.k3x1);
    branch_back(block.k1x1, gblock.k1x1);
    add_into(g_x, g_h);  // residual
    g_h = std::move(g_x);
  }

  // in_proj
  FeatureMap g_cat(trace.concat.channels, trace.concat.height, trace.concat.width);
  {
    std::vector<double> gb(params.in_proj.bias.size(), 0.0);
    conv2d_backward(trace.concat, params.in_proj.kernel, g_h, {0, 0}, {1, 1}, &g_cat,
                    &grads.in_proj.kernel, &gb);
    for (std::size_t i = 0; i < gb.size(); ++i) grads.in_proj.bias[i] += gb[i];
  }

  // split concat back into hi and upsampled-lo, then reduce the upsampling
  const std::size_t hi_c = g_hi.channels;
  for (std::size_t c = 0; c < hi_c; ++c) {
    const double* src = g_cat.plane(c);
    double* dst = g_hi.plane(c);
    for (std::size_t i = 0; i < g_hi.height * g_hi.width; ++i) dst[i] += src[i];
  }
  for (std::size_t c = 0; c < g_lo.channels; ++c) {
    const double* src = g_cat.plane(hi_c + c);
    double* dst = g_lo.plane(c);
    for (std::size_t y = 0; y < g_cat.height; ++y) {
      const std::size_t sy = std::min(y / 2, trace.lo_h - 1);
      for (std::size_t x = 0; x < g_cat.width; ++x) {
        dst[sy * trace.lo_w + std::min(x / 2, trace.lo_w - 1)] += src[y * g_cat.width + x];
      }
    }
  }
}

std::uint64_t gelan_flops(const GelanParams& params, GelanMode mode, std::size_t h,
                          std::size_t w) {
  auto conv_cost = [&](std::size_t out_c, std::size_t in_c, std::size_t kh, std::size_t kw) {
    return static_cast<std::uint64_t>(2) * out_c * in_c * kh * kw * h * w;
  };
  const std::size_t c = params.hidden_dim;
  std::uint64_t total = conv_cost(params.in_proj.kernel.extent(0), params.in_proj.kernel.extent(1),
                                  1, 1) +
                        conv_cost(params.out_proj.kernel.extent(0),
                                  params.out_proj.kernel.extent(1), 1, 1);
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    if (mode == GelanMode::kDeploy) {
      total += conv_cost(c, c, 3, 3);  // one fused kernel, branch count irrelevant
    } else {
      total += conv_cost(c, c, 3, 3) + conv_cost(c, c, 1, 3) + conv_cost(c, c, 3, 1) +
               conv_cost(c, c, 1, 1);
    }
  }
  return total;
}

}  // namespace linea
