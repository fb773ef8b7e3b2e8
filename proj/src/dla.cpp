#include "linea/dla.hpp"

#include <cmath>
#include <string>

#include "linea/numerics.hpp"
#include "linea/rng.hpp"

namespace linea {

void DlaConfig::validate() const {
  if (heads == 0) throw ConfigError("DlaConfig: heads must be >= 1");
  if (embed_dim % heads != 0) {
    throw ConfigError("DlaConfig: embed_dim " + std::to_string(embed_dim) +
                      " not divisible by heads " + std::to_string(heads));
  }
  if (points_per_level.empty()) throw ConfigError("DlaConfig: no levels");
  for (auto p : points_per_level) {
    if (p < 1) throw ConfigError("DlaConfig: points per level must be >= 1");
  }
}

namespace {

void xavier_init(LinearMap& m, const char* name, std::uint64_t seed) {
  CounterRng rng(seed, CounterRng::hash_name(name));
  const double a = std::sqrt(6.0 / static_cast<double>(m.in_dim() + m.out_dim()));
  for (std::size_t i = 0; i < m.w.size(); ++i) m.w[i] = rng.uniform(-a, a);
  m.b.set_zero();
}

}  // namespace

DlaParams make_dla_params(const DlaConfig& config, std::span<const std::size_t> level_channels,
                          std::uint64_t seed) {
  config.validate();
  if (level_channels.size() != config.levels()) {
    throw ConfigError("make_dla_params: one channel count per level required");
  }
  const std::size_t d = config.embed_dim;
  const std::size_t tp = config.total_points();
  DlaParams p;
  p.alpha_head = LinearMap(config.heads * tp, d);
  p.attn_head = LinearMap(config.heads * tp, d);
  p.out_proj = LinearMap(d, d);

  // Zero weights with spread biases: initial samples cover the segment
  // between the endpoints evenly, and initial attention is uniform.
  p.alpha_head.set_zero();
  for (std::size_t m = 0; m < config.heads; ++m) {
    std::size_t flat = 0;
    for (std::size_t l = 0; l < config.levels(); ++l) {
      const std::size_t pl = config.points_per_level[l];
      for (std::size_t i = 0; i < pl; ++i, ++flat) {
        p.alpha_head.b[m * tp + flat] =
            -0.5 + (static_cast<double>(i) + 0.5) / static_cast<double>(pl);
      }
    }
  }
  p.attn_head.set_zero();
  xavier_init(p.out_proj, "dla.out_proj", seed);
  p.value_proj.reserve(config.levels());
  for (std::size_t l = 0; l < config.levels(); ++l) {
    LinearMap vp(d, level_channels[l]);
    xavier_init(vp, ("dla.value_proj." + std::to_string(l)).c_str(), seed);
    p.value_proj.push_back(std::move(vp));
  }
  return p;
}

DlaParamGrads make_dla_grads(const DlaParams& params) {
  DlaParamGrads g;
  g.alpha_head = LinearMap(params.alpha_head.out_dim(), params.alpha_head.in_dim());
  g.attn_head = LinearMap(params.attn_head.out_dim(), params.attn_head.in_dim());
  g.out_proj = LinearMap(params.out_proj.out_dim(), params.out_proj.in_dim());
  for (const auto& vp : params.value_proj) g.value_proj.emplace_back(vp.out_dim(), vp.in_dim());
  return g;
}

SamplingTensor sampling_points(const LineSegment& line, const Tensor& alpha,
                               std::span<const std::size_t> points_per_level) {
  const auto [mid, delta] = midpoint_delta(line);
  SamplingTensor s;
  s.heads = alpha.extent(0);
  s.points_per_level.assign(points_per_level.begin(), points_per_level.end());
  const std::size_t tp = alpha.size() / s.heads;
  s.points = Tensor({s.heads, tp, 2});
  for (std::size_t m = 0; m < s.heads; ++m) {
    for (std::size_t i = 0; i < tp; ++i) {
      const double a = alpha.data()[m * tp + i];
      s.points(m, i, 0) = mid.x + a * delta.x;
      s.points(m, i, 1) = mid.y + a * delta.y;
    }
  }
  return s;
}

std::vector<double> dla_forward(const std::vector<FeatureMap>& value_maps,
                                const SamplingTensor& S, const AttentionTensor& A,
                                const LinearMap& out_proj) {
  if (value_maps.size() != S.points_per_level.size()) {
    throw ShapeError("dla_forward: level count mismatch (" + std::to_string(value_maps.size()) +
                     " maps vs " + std::to_string(S.points_per_level.size()) + " sample groups)");
  }
  const std::size_t d = value_maps.empty() ? 0 : value_maps[0].channels;
  const std::size_t heads = S.heads;
  const std::size_t head_dim = d / heads;
  const std::size_t tp = S.points.extent(1);

  std::vector<double> concat(d, 0.0);
  std::vector<double> sample(head_dim);
  for (std::size_t m = 0; m < heads; ++m) {
    double* head_out = concat.data() + m * head_dim;
    std::size_t flat = 0;
    for (std::size_t l = 0; l < value_maps.size(); ++l) {
      if (value_maps[l].channels != d) {
        throw ShapeError("dla_forward: all value maps must have " + std::to_string(d) +
                         " channels");
      }
      for (std::size_t p = 0; p < S.points_per_level[l]; ++p, ++flat) {
        bilinear_sample_slice(value_maps[l], S.at(m, flat), m * head_dim, head_dim,
                              sample.data());
        const double w = A.weights.data()[m * tp + flat];
        for (std::size_t c = 0; c < head_dim; ++c) head_out[c] += w * sample[c];
      }
    }
  }
  return out_proj.apply(concat);
}

std::vector<FeatureMap> project_values(const std::vector<FeatureMap>& features,
                                       const DlaParams& params) {
  if (features.size() != params.value_proj.size()) {
    throw ShapeError("project_values: level count mismatch");
  }
  std::vector<FeatureMap> out;
  out.reserve(features.size());
  for (std::size_t l = 0; l < features.size(); ++l) {
    const FeatureMap& f = features[l];
    const LinearMap& vp = params.value_proj[l];
    if (vp.in_dim() != f.channels) {
      throw ShapeError("project_values: level " + std::to_string(l) + " channel mismatch");
    }
    const std::size_t d = vp.out_dim();
    const std::size_t hw = f.height * f.width;
    FeatureMap v(d, f.height, f.width);
    for (std::size_t o = 0; o < d; ++o) {
      double* vplane = v.plane(o);
      const double* wrow = vp.w.data() + o * f.channels;
      const double b = vp.b[o];
      for (std::size_t i = 0; i < hw; ++i) vplane[i] = b;
      for (std::size_t ic = 0; ic < f.channels; ++ic) {
        const double w = wrow[ic];
        if (w == 0.0) continue;
        const double* fplane = f.plane(ic);
        for (std::size_t i = 0; i < hw; ++i) vplane[i] += w * fplane[i];
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<double> dla_attention_traced(std::span<const double> query_content,
                                         const LineSegment& line,
                                         const std::vector<FeatureMap>& value_maps,
                                         const DlaConfig& config, const DlaParams& params,
                                         DlaTrace& trace) {
  const std::size_t tp = config.total_points();
  const std::size_t heads = config.heads;
  const std::size_t head_dim = config.head_dim();

  trace.query.assign(query_content.begin(), query_content.end());
  trace.line = line;

  std::vector<double> raw = params.alpha_head.apply(query_content);
  trace.alpha = Tensor({heads, tp}, std::move(raw));
  Tensor logits({heads, tp}, params.attn_head.apply(query_content));
  trace.attn = softmax_over_samples(logits);
  trace.S = sampling_points(line, trace.alpha, config.points_per_level);

  trace.samples = Tensor({heads, tp, head_dim});
  std::vector<double> concat(config.embed_dim, 0.0);
  for (std::size_t m = 0; m < heads; ++m) {
    double* head_out = concat.data() + m * head_dim;
    std::size_t flat = 0;
    for (std::size_t l = 0; l < value_maps.size(); ++l) {
      for (std::size_t p = 0; p < config.points_per_level[l]; ++p, ++flat) {
        double* sample = trace.samples.data() + (m * tp + flat) * head_dim;
        bilinear_sample_slice(value_maps[l], trace.S.at(m, flat), m * head_dim, head_dim, sample);
        const double w = trace.attn(m, flat);
        for (std::size_t c = 0; c < head_dim; ++c) head_out[c] += w * sample[c];
      }
    }
  }
  trace.head_concat = concat;
  return params.out_proj.apply(concat);
}

std::vector<double> dla_attention(std::span<const double> query_content, const LineSegment& line,
                                  const std::vector<FeatureMap>& features, const DlaConfig& config,
                                  const DlaParams& params) {
  config.validate();
  if (features.size() != config.levels()) {
    throw ShapeError("dla_attention: expected " + std::to_string(config.levels()) + " levels, got " +
                     std::to_string(features.size()));
  }
  const std::vector<FeatureMap> value_maps = project_values(features, params);
  DlaTrace trace;
  return dla_attention_traced(query_content, line, value_maps, config, params, trace);
}

void dla_backward(std::span<const double> upstream, const DlaTrace& trace,
                  const std::vector<FeatureMap>& value_maps, const DlaConfig& config,
                  const DlaParams& params, DlaParamGrads& grads,
                  std::vector<FeatureMap>& value_map_grads, DlaInputGrads& input_grads) {
  if (trace.query.empty()) throw DomainError("dla_backward: trace has no saved forward state");
  const std::size_t d = config.embed_dim;
  const std::size_t heads = config.heads;
  const std::size_t head_dim = config.head_dim();
  const std::size_t tp = config.total_points();

  // out = out_proj(concat)
  std::vector<double> g_concat(d, 0.0);
  linear_backward(params.out_proj, trace.head_concat.data(), upstream.data(), &grads.out_proj,
                  g_concat.data());

  const auto [mid, delta] = midpoint_delta(trace.line);
  Tensor g_attn({heads, tp});
  Tensor g_alpha({heads, tp});
  Vec2 g_mid{0.0, 0.0};
  Vec2 g_delta{0.0, 0.0};

  for (std::size_t m = 0; m < heads; ++m) {
    const double* g_head = g_concat.data() + m * head_dim;
    std::size_t flat = 0;
    for (std::size_t l = 0; l < value_maps.size(); ++l) {
      for (std::size_t p = 0; p < config.points_per_level[l]; ++p, ++flat) {
        const double* sample = trace.samples.data() + (m * tp + flat) * head_dim;
        // concat_m += A * sample
        double ga = 0.0;
        for (std::size_t c = 0; c < head_dim; ++c) ga += g_head[c] * sample[c];
        g_attn(m, flat) = ga;

        const double a_w = trace.attn(m, flat);
        std::vector<double> g_sample(head_dim);
        for (std::size_t c = 0; c < head_dim; ++c) g_sample[c] = a_w * g_head[c];

        Vec2 g_point{0.0, 0.0};
        bilinear_sample_backward(value_maps[l], trace.S.at(m, flat), g_sample.data(),
                                 m * head_dim, head_dim, value_map_grads[l], g_point);

        // p = mid + alpha * delta
        g_alpha(m, flat) = g_point.x * delta.x + g_point.y * delta.y;
        g_mid += g_point;
        g_delta += g_point * trace.alpha(m, flat);
      }
    }
  }

  const Tensor g_logits = softmax_over_samples_backward(trace.attn, g_attn);
  if (input_grads.query.size() != d) input_grads.query.assign(d, 0.0);
  linear_backward(params.attn_head, trace.query.data(), g_logits.data(), &grads.attn_head,
                  input_grads.query.data());
  linear_backward(params.alpha_head, trace.query.data(), g_alpha.data(), &grads.alpha_head,
                  input_grads.query.data());

  // mid = (ep1 + ep2)/2, delta = ep1 - ep2
  input_grads.ep1 += g_mid * 0.5 + g_delta;
  input_grads.ep2 += g_mid * 0.5 - g_delta;
}

void project_values_backward(const std::vector<FeatureMap>& features, const DlaParams& params,
                             const std::vector<FeatureMap>& value_map_grads, DlaParamGrads& grads,
                             std::vector<FeatureMap>* feature_grads) {
  for (std::size_t l = 0; l < features.size(); ++l) {
    const FeatureMap& f = features[l];
    const FeatureMap& gv = value_map_grads[l];
    const LinearMap& vp = params.value_proj[l];
    LinearMap& gp = grads.value_proj[l];
    const std::size_t hw = f.height * f.width;
    for (std::size_t o = 0; o < vp.out_dim(); ++o) {
      const double* gvplane = gv.plane(o);
      double bacc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) bacc += gvplane[i];
      gp.b[o] += bacc;
      double* gwrow = gp.w.data() + o * f.channels;
      const double* wrow = vp.w.data() + o * f.channels;
      for (std::size_t ic = 0; ic < f.channels; ++ic) {
        const double* fplane = f.plane(ic);
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) acc += gvplane[i] * fplane[i];
        gwrow[ic] += acc;
        if (feature_grads) {
          double* gfplane = (*feature_grads)[l].plane(ic);
          const double w = wrow[ic];
          if (w != 0.0) {
            for (std::size_t i = 0; i < hw; ++i) gfplane[i] += w * gvplane[i];
          }
        }
      }
    }
  }
}

std::uint64_t count_flops(const DlaConfig& config, std::size_t num_queries) {
  config.validate();
  const std::uint64_t d = config.embed_dim;
  const std::uint64_t mtp = config.heads * config.total_points();
  const std::uint64_t tp = config.total_points();
  const std::uint64_t per_query = 2 * d * mtp        // alpha head
                                  + 2 * d * mtp      // attention head
                                  + 6 * mtp          // sampling points
                                  + (4 + 7) * tp * d // bilinear reads + lerp/accumulate
                                  + 2 * d * d;       // out_proj
  return per_query * num_queries;
}

std::uint64_t count_flops_mda(const DlaConfig& config, std::size_t num_queries) {
  config.validate();
  const std::uint64_t d = config.embed_dim;
  const std::uint64_t mtp = config.heads * config.total_points();
  const std::uint64_t tp = config.total_points();
  const std::uint64_t per_query = 2 * d * (2 * mtp)  // offset head, 2 coords per point
                                  + 2 * d * mtp      // attention head
                                  + 2 * mtp          // reference + offset per coordinate
                                  + (4 + 7) * tp * d // identical interpolation cost
                                  + 2 * d * d;
  return per_query * num_queries;
}

}  // namespace linea
