#pragma once

#include <span>
#include <vector>

#include "linea/geometry.hpp"
#include "linea/tensor.hpp"

namespace linea {

// A scored line hypothesis; score = sigmoid(class logit).
struct Prediction {
  LineSegment line;
  double score = 0.0;
};

struct LossWeights {
  double w_line = 5.0;
  double w_class = 1.0;
};

// One-to-one assignment between predictions and ground-truth lines.
// truth_for_pred[i] == -1 marks prediction i as background.
struct Assignment {
  std::vector<std::ptrdiff_t> truth_for_pred;
  std::vector<std::ptrdiff_t> pred_for_truth;
  double total_cost = 0.0;
};

// L1 distance over the 4 endpoint coordinates in the given order.
double endpoint_l1_ordered(const LineSegment& a, const LineSegment& b);

// min over the two endpoint orderings of b; segment identity is unordered.
double endpoint_l1(const LineSegment& a, const LineSegment& b);

// Optimal assignment (Hungarian) under
//   cost(i, j) = w_line * endpoint_l1(pred_i, gt_j) - w_class * score_i.
// Empty truths yields a valid all-background result.
Assignment bipartite_match(std::span<const Prediction> predictions,
                           std::span<const LineSegment> truths, const LossWeights& weights);

// Sigmoid focal loss, gamma = 2, positive-class balance 0.25. Returns the
// loss; *grad_logit receives d(loss)/d(logit).
double focal_loss(double logit, bool positive, double* grad_logit);

struct LossBreakdown {
  double total = 0.0;
  double line_term = 0.0;   // already scaled by w_line
  double class_term = 0.0;  // already scaled by w_class
};

// Set-prediction loss for one image and one decoder layer:
//   w_line * sum over matched pairs of order-minimized endpoint L1
// + w_class * sum over all predictions of focal line-vs-background loss.
// class_logits[i] is prediction i's raw logit. When non-null, g_endpoints
// (k, 4) and g_logits (k) are accumulated with d(loss)/d(readout endpoint)
// and d(loss)/d(logit).
LossBreakdown compute_loss(std::span<const Prediction> predictions,
                           std::span<const double> class_logits,
                           std::span<const LineSegment> truths, const Assignment& assignment,
                           const LossWeights& weights, Tensor* g_endpoints,
                           std::vector<double>* g_logits);

}  // namespace linea
