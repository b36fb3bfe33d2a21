#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "ddl/geometry.hpp"

namespace ddl {

// Ordered perturbation roster for one probing pass. Identical seed gives a
// bit-identical roster.
struct ViewRoster {
    std::vector<TransformSpec> specs;
    std::uint64_t seed = 0;
};

// For m = 7 returns the fixed family roster
//   [Rotate(+r), Rotate(-r), Scale(0.9), Scale(1.1), Translate, Translate, HFlip]
// with translation offsets drawn uniformly from [-20, 20] by the seeded
// generator; other m values cycle through the four families.
ViewRoster make_roster(std::uint64_t seed, int m = 7, double rotate_deg = 3.0);

struct RasterImage {
    cv::Mat pixels;
    std::string source;

    ImageDims dims() const { return {pixels.cols, pixels.rows}; }
};

RasterImage load_image(const std::string& path);

// Renders one transformed view: bilinear resampling for rotation/scale,
// black border fill; Scale rescales the canvas, all other kinds keep it.
RasterImage render_view(const RasterImage& img, const TransformSpec& t);

std::string encode_png_base64(const RasterImage& img);

}  // namespace ddl
