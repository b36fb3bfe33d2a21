#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddl/detections.hpp"
#include "ddl/viewgen.hpp"

namespace ddl {

struct ModelEndpoint {
    std::string base_url;
    std::string model;
    double timeout_s = 120.0;
    int max_retries = 3;
    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 1024;
    std::string api_key_env = "DDL_API_KEY";
};

enum class MetaPromptKind { Init, Contrastive, Exploitative };

// Tolerant extraction of detections from raw model text:
//   1. exact "no target" (case-insensitive, trimmed) -> empty set;
//   2. first well-formed JSON array of objects carrying a 4-number "bbox_2d"
//      field anywhere in the text (code fences included) -> detections, with
//      coordinates clamped to dims and degenerate boxes dropped (counted);
//   3. otherwise ParseError with the raw text attached.
DetectionSet parse_detections(const std::string& raw, const ImageDims& dims);

// Parses the Init completion: a JSON object with keys variant_1..variant_5.
std::vector<std::string> parse_init_variants(const std::string& completion);

// Extracts the trimmed payload of <IMPROVED_PROMPT>...</IMPROVED_PROMPT>.
std::string parse_improved_prompt(const std::string& completion);

// Chat-completions HTTP client (image contents as base64 data URIs).
class ChatClient {
public:
    explicit ChatClient(ModelEndpoint endpoint);

    // One text completion; retries transient transport failures with
    // exponential backoff. Throws TransportError / ModelRefusal.
    std::string complete(const std::string& user_text, const std::string& image_b64_png,
                         double temperature, double top_p) const;

    DetectionSet ground(const RasterImage& image, const std::string& prompt, int view_index = 0,
                        double temperature_override = -1.0) const;

    std::string complete_text(const std::string& prompt) const;

    const ModelEndpoint& endpoint() const { return endpoint_; }

private:
    ModelEndpoint endpoint_;
};

struct MockNoise {
    double jitter_px = 0.0;
    double hallucination_prob = 0.0;
    double miss_prob = 0.0;
    // When set, jitter is drawn once per image (from image_seed) in the
    // reference frame, so every view sees the same perturbed truth. Models a
    // stable perception error instead of per-view decoding noise.
    bool consistent_jitter = false;
};

// Deterministic LVLM stand-in: maps each truth box through `spec`, jitters
// it, drops it with miss_prob and appends a freshly placed hallucination with
// hallucination_prob. Hallucinations are never spatially consistent across
// views.
DetectionSet mock_ground(const std::vector<BoundingBox>& truth, const TransformSpec& spec,
                         const ImageDims& dims, const MockNoise& noise, std::uint64_t view_seed,
                         std::uint64_t image_seed, int view_index = 0);

}  // namespace ddl
