#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ddl/geometry.hpp"

namespace ddl {

struct Detection {
    BoundingBox box;
    std::string label;
};

// Labeled boxes produced by one model call on one view (0 = reference).
struct DetectionSet {
    std::vector<Detection> detections;
    int view_index = 0;
    std::string raw_response;
    int dropped = 0;  // degenerate boxes discarded while parsing/back-projecting
};

// An anchor box with its consensus reliability score. Strategies that do not
// produce a score (SA) leave sigma empty.
struct ConsolidatedDetection {
    BoundingBox box;
    std::optional<double> sigma;
    std::string label;
    int n_matched = 0;
    double mean_match_iou = 0.0;
};

}  // namespace ddl
