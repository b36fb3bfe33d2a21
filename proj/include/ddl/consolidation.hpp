#pragma once

#include <utility>
#include <vector>

#include "ddl/detections.hpp"

namespace ddl {

struct ConsensusConfig {
    double tau = 0.1;     // minimum IoU for a valid match
    double omega1 = 0.6;  // consensus (recurrence) weight
    double omega2 = 0.4;  // consistency (mean match IoU) weight
    int views = 7;        // M augmented views (evidence pool is M+1)
};

// Minimum-total-cost one-to-one assignment covering min(rows, cols) pairs.
// Ties between optimal assignments are broken toward the lowest (row, col)
// lexicographic pair list. Empty matrix yields an empty assignment.
std::vector<std::pair<int, int>> hungarian(const std::vector<std::vector<double>>& costs);

// Referenced Hungarian Consolidation: matches each view's back-projected
// boxes one-to-one against the reference anchors (cost 1 - IoU, matches
// below tau discarded) and scores every anchor with
//   sigma = omega1 * (1 + n_matched) / (M + 1) + omega2 * mean_match_iou.
std::vector<ConsolidatedDetection> rhc(const DetectionSet& anchors,
                                       const std::vector<DetectionSet>& views,
                                       const ConsensusConfig& cfg);

// Simple Average baseline: greedy grouping (IoU >= tau against a running
// centroid, reference boxes first) and per-group coordinate means. Unscored.
std::vector<ConsolidatedDetection> consolidate_sa(const std::vector<DetectionSet>& views_with_ref,
                                                  double tau = 0.1);

// Weighted Average: like rhc but the emitted box is the IoU-weighted mean of
// the anchor (weight 1) and its matched boxes.
std::vector<ConsolidatedDetection> consolidate_wa(const DetectionSet& anchors,
                                                  const std::vector<DetectionSet>& views,
                                                  const ConsensusConfig& cfg);

// DBSCAN over the pooled boxes with distance 1 - IoU; per cluster emits the
// coordinate-wise median box with confidence
//   0.5 * size / (M+1) + 0.5 * (1 - mean pairwise intra-cluster distance).
std::vector<ConsolidatedDetection> consolidate_dbscan(const std::vector<DetectionSet>& views_with_ref,
                                                      double eps = 0.9, int min_pts = 2);

}  // namespace ddl
