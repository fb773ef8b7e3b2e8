#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "linea/matching.hpp"

namespace linea {

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct EvalResult {
  std::map<int, double> sap;                  // threshold -> AP in [0, 100]
  std::map<int, std::vector<PrPoint>> pr;     // threshold -> curve
};

// Structural AP at squared-distance threshold theta. Endpoints are rescaled
// to a 128x128 frame; predictions across the whole dataset are swept in
// descending score order; a prediction is a true positive when the closest
// still-unmatched ground-truth line in its image is within theta of the
// summed squared endpoint distances (min over endpoint orderings). AP is the
// area under the interpolated precision-recall curve, times 100.
double sap(const std::vector<std::vector<Prediction>>& predictions,
           const std::vector<std::vector<LineSegment>>& truths, double theta);

// One (recall, precision) point per score-sorted prefix.
std::vector<PrPoint> pr_curve(const std::vector<std::vector<Prediction>>& predictions,
                              const std::vector<std::vector<LineSegment>>& truths, double theta);

EvalResult evaluate_sap(const std::vector<std::vector<Prediction>>& predictions,
                        const std::vector<std::vector<LineSegment>>& truths,
                        std::span<const int> thresholds);

// CSV with a `recall,precision` header, one row per curve point.
void write_pr_csv(const std::vector<PrPoint>& curve, const std::filesystem::path& path);
std::vector<PrPoint> read_pr_csv(const std::filesystem::path& path);

// Minimal static SVG of a precision-recall curve.
void write_pr_svg(const std::vector<PrPoint>& curve, const std::string& title,
                  const std::filesystem::path& path);

}  // namespace linea
