#include "ddl/viewgen.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "ddl/errors.hpp"
#include "ddl/rng.hpp"

namespace ddl {

namespace {

TransformSpec seeded_translate(std::mt19937_64& rng) {
    const double dx = uniform_in(rng, -20.0, 20.0);
    const double dy = uniform_in(rng, -20.0, 20.0);
    return TransformSpec::translate(dx, dy);
}

}  // namespace

ViewRoster make_roster(std::uint64_t seed, int m, double rotate_deg) {
    if (m < 1) throw InvalidCount("roster size must be at least 1");
    std::mt19937_64 rng(seed);
    ViewRoster roster;
    roster.seed = seed;
    if (m == 7) {
        roster.specs = {TransformSpec::rotate(rotate_deg), TransformSpec::rotate(-rotate_deg),
                        TransformSpec::scale(0.9),         TransformSpec::scale(1.1),
                        seeded_translate(rng),             seeded_translate(rng),
                        TransformSpec::hflip()};
        return roster;
    }
    // Cycle through the four families, alternating the paired parameters.
    int rotations = 0, scales = 0;
    for (int i = 0; i < m; ++i) {
        switch (i % 4) {
            case 0:
                roster.specs.push_back(
                    TransformSpec::rotate(rotations++ % 2 == 0 ? rotate_deg : -rotate_deg));
                break;
            case 1:
                roster.specs.push_back(TransformSpec::scale(scales++ % 2 == 0 ? 0.9 : 1.1));
                break;
            case 2:
                roster.specs.push_back(seeded_translate(rng));
                break;
            case 3:
                roster.specs.push_back(TransformSpec::hflip());
                break;
        }
    }
    return roster;
}

RasterImage load_image(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (m.empty()) throw UnsupportedImage("cannot read image: " + path);
    return {m, path};
}

RasterImage render_view(const RasterImage& img, const TransformSpec& t) {
    if (img.pixels.empty()) throw UnsupportedImage("empty image: " + img.source);
    const ImageDims in = img.dims();
    const ImageDims out_dims = t.output_dims(in);
    RasterImage out;
    out.source = img.source;
    switch (t.kind) {
        case TransformKind::Identity:
            out.pixels = img.pixels.clone();
            return out;
        case TransformKind::HorizontalFlip:
            cv::flip(img.pixels, out.pixels, 1);
            return out;
        default: {
            const Affine a = affine_of(t, in);
            const cv::Matx23d warp(a.a, a.b, a.tx, a.c, a.d, a.ty);
            cv::warpAffine(img.pixels, out.pixels, warp, cv::Size(out_dims.width, out_dims.height),
                           cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar::all(0));
            return out;
        }
    }
}

std::string encode_png_base64(const RasterImage& img) {
    std::vector<unsigned char> buf;
    if (!cv::imencode(".png", img.pixels, buf))
        throw UnsupportedImage("PNG encoding failed: " + img.source);
    static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((buf.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < buf.size(); i += 3) {
        std::uint32_t v = buf[i] << 16;
        if (i + 1 < buf.size()) v |= buf[i + 1] << 8;
        if (i + 2 < buf.size()) v |= buf[i + 2];
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out.push_back(i + 1 < buf.size() ? tbl[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < buf.size() ? tbl[v & 63] : '=');
    }
    return out;
}

}  // namespace ddl
