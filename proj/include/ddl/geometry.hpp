#pragma once

#include <array>
#include <cmath>
#include <string>

#include "ddl/errors.hpp"

namespace ddl {

struct ImageDims {
    int width = 0;
    int height = 0;

    ImageDims() = default;
    ImageDims(int w, int h) : width(w), height(h) {
        if (w <= 0 || h <= 0) throw Error("ImageDims must be positive");
    }
    bool operator==(const ImageDims&) const = default;
};

// Axis-aligned pixel-space box, origin top-left, real-valued coordinates.
// Zero-area boxes are rejected at construction.
struct BoundingBox {
    double x1, y1, x2, y2;

    BoundingBox(double ax1, double ay1, double ax2, double ay2)
        : x1(ax1), y1(ay1), x2(ax2), y2(ay2) {
        if (!(x1 < x2) || !(y1 < y2) || !std::isfinite(x1) || !std::isfinite(y1) ||
            !std::isfinite(x2) || !std::isfinite(y2))
            throw Error("invalid BoundingBox [" + std::to_string(ax1) + "," + std::to_string(ay1) +
                        "," + std::to_string(ax2) + "," + std::to_string(ay2) + "]");
    }

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    double cx() const { return 0.5 * (x1 + x2); }
    double cy() const { return 0.5 * (y1 + y2); }
    bool inside(const ImageDims& d) const {
        return x1 >= 0 && y1 >= 0 && x2 <= d.width && y2 <= d.height;
    }
    bool operator==(const BoundingBox&) const = default;
};

double iou(const BoundingBox& a, const BoundingBox& b);

enum class TransformKind { Identity, Rotate, Scale, Translate, HorizontalFlip };

// One invertible spatial perturbation. Rotation and scaling are centered on
// the image center; scaling also rescales the canvas so the coordinate map
// reduces to x' = s*x.
struct TransformSpec {
    TransformKind kind = TransformKind::Identity;
    double angle_deg = 0.0;  // Rotate
    double factor = 1.0;     // Scale
    double dx = 0.0, dy = 0.0;  // Translate

    static TransformSpec identity() { return {}; }
    static TransformSpec rotate(double deg) {
        TransformSpec t;
        t.kind = TransformKind::Rotate;
        t.angle_deg = deg;
        return t;
    }
    static TransformSpec scale(double f) {
        if (f <= 0) throw Error("scale factor must be positive");
        TransformSpec t;
        t.kind = TransformKind::Scale;
        t.factor = f;
        return t;
    }
    static TransformSpec translate(double ddx, double ddy) {
        TransformSpec t;
        t.kind = TransformKind::Translate;
        t.dx = ddx;
        t.dy = ddy;
        return t;
    }
    static TransformSpec hflip() {
        TransformSpec t;
        t.kind = TransformKind::HorizontalFlip;
        return t;
    }

    TransformSpec inverse() const;
    ImageDims output_dims(const ImageDims& in) const;
    std::string describe() const;
    bool operator==(const TransformSpec&) const = default;
};

// Row-major 2x3 affine [a b tx; c d ty] acting on column vectors (x, y).
struct Affine {
    double a = 1, b = 0, tx = 0;
    double c = 0, d = 1, ty = 0;

    std::array<double, 2> map(double x, double y) const {
        return {a * x + b * y + tx, c * x + d * y + ty};
    }
};

// Forward coordinate map of `t` from the frame of `in` into the transformed
// view's frame.
Affine affine_of(const TransformSpec& t, const ImageDims& in);

// Maps the box corners through t's affine map and returns the AABB of the
// result, clamped to the transformed frame. Throws DegenerateResult if the
// clamp collapses the box.
BoundingBox apply_transform(const BoundingBox& box, const TransformSpec& t, const ImageDims& dims);

// Maps a box from the transformed view's frame back into the original frame.
// Exact functional inverse of apply_transform: for rotation the AABB growth
// of the forward map is deflated analytically instead of re-boxing the
// rotated corners, so invert(apply(box)) == box for every transform kind.
BoundingBox invert_transform(const BoundingBox& box, const TransformSpec& t,
                             const ImageDims& dims_original);

}  // namespace ddl
