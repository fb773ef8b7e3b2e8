#include "linea/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "linea/errors.hpp"

namespace linea {

namespace {

constexpr double kFrame = 128.0;  // evaluation frame convention

double sq(double v) { return v * v; }

// Sum of squared endpoint distances in the 128x128 frame, min over orderings.
double structural_sqdist(const LineSegment& a, const LineSegment& b) {
  const double direct = sq((a.ep1.x - b.ep1.x) * kFrame) + sq((a.ep1.y - b.ep1.y) * kFrame) +
                        sq((a.ep2.x - b.ep2.x) * kFrame) + sq((a.ep2.y - b.ep2.y) * kFrame);
  const double swapped = sq((a.ep1.x - b.ep2.x) * kFrame) + sq((a.ep1.y - b.ep2.y) * kFrame) +
                         sq((a.ep2.x - b.ep1.x) * kFrame) + sq((a.ep2.y - b.ep1.y) * kFrame);
  return std::min(direct, swapped);
}

struct SweepEntry {
  double score;
  std::size_t image;
  std::size_t index;
};

// Shared TP/FP sweep for sap and pr_curve. Returns per-prefix TP flags in
// sweep order plus the total ground-truth count.
std::pair<std::vector<char>, std::size_t> sweep_matches(
    const std::vector<std::vector<Prediction>>& predictions,
    const std::vector<std::vector<LineSegment>>& truths, double theta,
    std::vector<SweepEntry>* order_out) {
  if (!(theta > 0.0)) throw DomainError("sap: theta must be positive");
  if (predictions.size() != truths.size()) {
    throw ShapeError("sap: prediction and truth image counts differ");
  }
  std::vector<SweepEntry> order;
  for (std::size_t img = 0; img < predictions.size(); ++img) {
    for (std::size_t i = 0; i < predictions[img].size(); ++i) {
      const double s = predictions[img][i].score;
      if (!std::isfinite(s)) throw DomainError("sap: non-finite score");
      order.push_back({s, img, i});
    }
  }
  std::sort(order.begin(), order.end(), [](const SweepEntry& a, const SweepEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image != b.image) return a.image < b.image;
    return a.index < b.index;
  });

  std::size_t total_gt = 0;
  std::vector<std::vector<char>> gt_used(truths.size());
  for (std::size_t img = 0; img < truths.size(); ++img) {
    gt_used[img].assign(truths[img].size(), 0);
    total_gt += truths[img].size();
  }

  std::vector<char> is_tp(order.size(), 0);
  for (std::size_t s = 0; s < order.size(); ++s) {
    const auto& e = order[s];
    const auto& gts = truths[e.image];
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (gt_used[e.image][j]) continue;
      const double d = structural_sqdist(predictions[e.image][e.index].line, gts[j]);
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    if (best <= theta) {
      is_tp[s] = 1;
      gt_used[e.image][best_j] = 1;
    }
  }
  if (order_out) *order_out = std::move(order);
  return {std::move(is_tp), total_gt};
}

double interpolated_ap(const std::vector<char>& is_tp, std::size_t total_gt) {
  if (total_gt == 0) return 0.0;
  std::vector<double> recall, precision;
  recall.reserve(is_tp.size() + 2);
  precision.reserve(is_tp.size() + 2);
  recall.push_back(0.0);
  precision.push_back(0.0);  // replaced by the envelope below
  std::size_t tp = 0, fp = 0;
  for (char t : is_tp) {
    t ? ++tp : ++fp;
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
  }
  recall.push_back(1.0);
  precision.push_back(0.0);
  for (std::size_t i = precision.size() - 1; i-- > 0;) {
    precision[i] = std::max(precision[i], precision[i + 1]);
  }
  double ap = 0.0;
  for (std::size_t i = 0; i + 1 < recall.size(); ++i) {
    ap += (recall[i + 1] - recall[i]) * precision[i + 1];
  }
  return ap * 100.0;
}

}  // namespace

double sap(const std::vector<std::vector<Prediction>>& predictions,
           const std::vector<std::vector<LineSegment>>& truths, double theta) {
  auto [is_tp, total_gt] = sweep_matches(predictions, truths, theta, nullptr);
  return interpolated_ap(is_tp, total_gt);
}

std::vector<PrPoint> pr_curve(const std::vector<std::vector<Prediction>>& predictions,
                              const std::vector<std::vector<LineSegment>>& truths, double theta) {
  auto [is_tp, total_gt] = sweep_matches(predictions, truths, theta, nullptr);
  std::vector<PrPoint> curve;
  curve.reserve(is_tp.size());
  std::size_t tp = 0, fp = 0;
  for (char t : is_tp) {
    t ? ++tp : ++fp;
    PrPoint pt;
    pt.recall = total_gt == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(total_gt);
    pt.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    curve.push_back(pt);
  }
  return curve;
}

EvalResult evaluate_sap(const std::vector<std::vector<Prediction>>& predictions,
                        const std::vector<std::vector<LineSegment>>& truths,
                        std::span<const int> thresholds) {
  EvalResult result;
  for (int theta : thresholds) {
    result.sap[theta] = sap(predictions, truths, theta);
    result.pr[theta] = pr_curve(predictions, truths, theta);
  }
  return result;
}

void write_pr_csv(const std::vector<PrPoint>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(IoError::Kind::NotFound, "cannot open " + path.string() + " for writing");
  out << "recall,precision\n";
  char buf[80];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g\n", p.recall, p.precision);
    out << buf;
  }
}

std::vector<PrPoint> read_pr_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoError::Kind::NotFound, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "recall,precision") {
    throw IoError(IoError::Kind::Malformed, path.string() + ": missing recall,precision header");
  }
  std::vector<PrPoint> curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    PrPoint p;
    if (std::sscanf(line.c_str(), "%lf,%lf", &p.recall, &p.precision) != 2) {
      throw IoError(IoError::Kind::Malformed, path.string() + ": bad row '" + line + "'");
    }
    curve.push_back(p);
  }
  return curve;
}

void write_pr_svg(const std::vector<PrPoint>& curve, const std::string& title,
                  const std::filesystem::path& path) {
  constexpr int size = 320, margin = 40;
  constexpr int plot = size - 2 * margin;
  std::ofstream out(path);
  if (!out) throw IoError(IoError::Kind::NotFound, "cannot open " + path.string() + " for writing");
  auto px = [&](double r) { return margin + r * plot; };
  auto py = [&](double p) { return size - margin - p * plot; };
  char buf[128];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
      << "\" viewBox=\"0 0 " << size << " " << size << "\">\n";
  out << "<rect width=\"" << size << "\" height=\"" << size << "\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"none\" "
                "stroke=\"black\"/>\n",
                margin, margin, plot, plot);
  out << buf;
  out << "<text x=\"" << size / 2 << "\" y=\"" << margin - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">" << title << "</text>\n";
  out << "<text x=\"" << size / 2 << "\" y=\"" << size - 8
      << "\" text-anchor=\"middle\" font-size=\"11\">recall</text>\n";
  out << "<text x=\"12\" y=\"" << size / 2
      << "\" text-anchor=\"middle\" font-size=\"11\" transform=\"rotate(-90 12 " << size / 2
      << ")\">precision</text>\n";
  if (!curve.empty()) {
    out << "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : curve) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(p.recall), py(p.precision));
      out << buf;
    }
    out << "\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace linea
