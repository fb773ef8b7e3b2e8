#include "linea/matching.hpp"

#include <cmath>
#include <limits>

namespace linea {

double endpoint_l1_ordered(const LineSegment& a, const LineSegment& b) {
  return std::abs(a.ep1.x - b.ep1.x) + std::abs(a.ep1.y - b.ep1.y) +
         std::abs(a.ep2.x - b.ep2.x) + std::abs(a.ep2.y - b.ep2.y);
}

double endpoint_l1(const LineSegment& a, const LineSegment& b) {
  return std::min(endpoint_l1_ordered(a, b), endpoint_l1_ordered(a, {b.ep2, b.ep1}));
}

namespace {

// Hungarian algorithm with potentials; rows <= cols required. cost(r, c)
// indexed row-major. Returns col_for_row minimizing the total cost.
std::vector<std::size_t> hungarian(const std::vector<double>& cost, std::size_t rows,
                                   std::size_t cols) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<std::size_t> p(cols + 1, 0), way(cols + 1, 0);
  for (std::size_t i = 1; i <= rows; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(cols + 1, inf);
    std::vector<char> used(cols + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * cols + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> col_for_row(rows, 0);
  for (std::size_t j = 1; j <= cols; ++j) {
    if (p[j] != 0) col_for_row[p[j] - 1] = j - 1;
  }
  return col_for_row;
}

}  // namespace

Assignment bipartite_match(std::span<const Prediction> predictions,
                           std::span<const LineSegment> truths, const LossWeights& weights) {
  const std::size_t k = predictions.size();
  const std::size_t t = truths.size();
  Assignment out;
  out.truth_for_pred.assign(k, -1);
  out.pred_for_truth.assign(t, -1);
  if (k == 0 || t == 0) return out;

  auto pair_cost = [&](std::size_t i, std::size_t j) {
    return weights.w_line * endpoint_l1(predictions[i].line, truths[j]) -
           weights.w_class * predictions[i].score;
  };

  if (t <= k) {
    std::vector<double> cost(t * k);
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t i = 0; i < k; ++i) cost[j * k + i] = pair_cost(i, j);
    const auto pred_of = hungarian(cost, t, k);
    for (std::size_t j = 0; j < t; ++j) {
      out.pred_for_truth[j] = static_cast<std::ptrdiff_t>(pred_of[j]);
      out.truth_for_pred[pred_of[j]] = static_cast<std::ptrdiff_t>(j);
      out.total_cost += cost[j * k + pred_of[j]];
    }
  } else {
    // more truths than predictions: every prediction gets a truth
    std::vector<double> cost(k * t);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < t; ++j) cost[i * t + j] = pair_cost(i, j);
    const auto truth_of = hungarian(cost, k, t);
    for (std::size_t i = 0; i < k; ++i) {
      out.truth_for_pred[i] = static_cast<std::ptrdiff_t>(truth_of[i]);
      out.pred_for_truth[truth_of[i]] = static_cast<std::ptrdiff_t>(i);
      out.total_cost += cost[i * t + truth_of[i]];
    }
  }
  return out;
}

double focal_loss(double logit, bool positive, double* grad_logit) {
  constexpr double gamma_balance = 0.25;
  // Stable log-sigmoid: log p = -softplus(-z), log(1-p) = -softplus(z).
  auto softplus = [](double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); };
  const double p = sigmoid(logit);
  if (positive) {
    const double log_p = -softplus(-logit);
    const double q = 1.0 - p;
    const double loss = -gamma_balance * q * q * log_p;
    if (grad_logit) *grad_logit += gamma_balance * q * q * (2.0 * p * log_p - q);
    return loss;
  }
  const double alpha_bg = 1.0 - gamma_balance;
  const double log_q = -softplus(logit);
  const double loss = -alpha_bg * p * p * log_q;
  if (grad_logit) *grad_logit += alpha_bg * p * p * (p - 2.0 * (1.0 - p) * log_q);
  return loss;
}

LossBreakdown compute_loss(std::span<const Prediction> predictions,
                           std::span<const double> class_logits,
                           std::span<const LineSegment> truths, const Assignment& assignment,
                           const LossWeights& weights, Tensor* g_endpoints,
                           std::vector<double>* g_logits) {
  LossBreakdown out;
  const std::size_t k = predictions.size();
  for (std::size_t i = 0; i < k; ++i) {
    const std::ptrdiff_t j = assignment.truth_for_pred[i];
    double g_logit = 0.0;
    const double cls = focal_loss(class_logits[i], j >= 0, g_logits ? &g_logit : nullptr);
    out.class_term += weights.w_class * cls;
    if (g_logits) (*g_logits)[i] += weights.w_class * g_logit;
    if (j < 0) continue;

    // order-minimized endpoint regression
    const LineSegment& gt = truths[static_cast<std::size_t>(j)];
    const LineSegment swapped{gt.ep2, gt.ep1};
    const double d_direct = endpoint_l1_ordered(predictions[i].line, gt);
    const double d_swap = endpoint_l1_ordered(predictions[i].line, swapped);
    const LineSegment& target = d_direct <= d_swap ? gt : swapped;
    out.line_term += weights.w_line * std::min(d_direct, d_swap);
    if (g_endpoints) {
      const double coords[4] = {predictions[i].line.ep1.x, predictions[i].line.ep1.y,
                                predictions[i].line.ep2.x, predictions[i].line.ep2.y};
      const double tgt[4] = {target.ep1.x, target.ep1.y, target.ep2.x, target.ep2.y};
      for (std::size_t c = 0; c < 4; ++c) {
        const double diff = coords[c] - tgt[c];
        (*g_endpoints)(i, c) += weights.w_line * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
      }
    }
  }
  out.total = out.line_term + out.class_term;
  return out;
}

}  // namespace linea
