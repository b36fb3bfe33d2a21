#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ddl/detections.hpp"

namespace ddl {

struct EvalSample {
    std::string image_id;
    std::vector<BoundingBox> ground_truth;
    std::vector<ConsolidatedDetection> predictions;
};

// Single-class all-point interpolated average precision. Detections pool
// globally, sort by sigma descending (unscored predictions count as
// confidence 1 in stable input order) and match greedily to the highest-IoU
// unmatched ground truth of their image.
double average_precision(const std::vector<EvalSample>& samples, double iou_threshold);

struct CorrelationStat {
    double value = 0.0;
    double p_value = 1.0;
    std::string significance;  // ***, **, *, ns
};

struct ReliabilityBin {
    double lo = 0.0, hi = 0.0;
    int count = 0;
    double mean_confidence = 0.0;
    double mean_iou = 0.0;
    double ci_halfwidth = 0.0;  // 1.96 * s / sqrt(n)
};

struct CalibrationReport {
    int n = 0;
    double mean_iou = 0.0;
    double mean_sigma = 0.0;
    double std_sigma = 0.0;
    double mae = 0.0;
    std::optional<CorrelationStat> pearson, spearman, kendall;
    bool degenerate = false;  // all sigma and all iou identical
    std::vector<ReliabilityBin> bins;  // 10 equal intervals over [0, 1]
};

// pairs = (sigma, achieved IoU). Correlations are reported absent for fewer
// than 3 pairs; a fully constant input is flagged degenerate (r = 0, ns).
CalibrationReport calibration(const std::vector<std::pair<double, double>>& pairs);

// Max IoU of a detection against any ground truth of its image, 0 if none.
std::vector<std::pair<double, double>> sigma_iou_pairs(const std::vector<EvalSample>& samples);

enum class KdeSplit { None, Median };

struct KdeCurve {
    std::vector<double> grid;
    std::vector<double> density;
    double bandwidth = 0.0;
    std::string label;  // All / Good / Bad
};

// Gaussian-kernel density, bandwidth h = sample_std * n^(-1/5), on a
// 512-point grid over [min - 4h, max + 4h]. Median split additionally emits
// the top and bottom halves as Good/Bad curves.
std::vector<KdeCurve> kde(const std::vector<double>& scores, KdeSplit split);

struct MetricDelta {
    std::string name;
    double baseline = 0.0;
    double treated = 0.0;
    std::optional<double> delta_pct;  // absent when baseline <= 0
};

std::vector<MetricDelta> improvement_table(
    const std::vector<std::tuple<std::string, double, double>>& rows);

std::string render_delta(const MetricDelta& d);  // one decimal, "undefined" marker

}  // namespace ddl
