#include "ddl/lvlm_client.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ddl/errors.hpp"
#include "ddl/rng.hpp"

using nlohmann::json;

namespace ddl {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// Finds the end (exclusive) of the balanced JSON value starting at `start`
// ('[' or '{'), honoring string literals and escapes. npos when unbalanced.
std::size_t balanced_end(const std::string& s, std::size_t start) {
    int depth = 0;
    bool in_str = false;
    for (std::size_t i = start; i < s.size(); ++i) {
        const char c = s[i];
        if (in_str) {
            if (c == '\\')
                ++i;
            else if (c == '"')
                in_str = false;
            continue;
        }
        if (c == '"')
            in_str = true;
        else if (c == '[' || c == '{')
            ++depth;
        else if (c == ']' || c == '}') {
            if (--depth == 0) return i + 1;
            if (depth < 0) return std::string::npos;
        }
    }
    return std::string::npos;
}

bool is_bbox_object(const json& el) {
    if (!el.is_object() || !el.contains("bbox_2d")) return false;
    const auto& b = el["bbox_2d"];
    if (!b.is_array() || b.size() != 4) return false;
    return std::all_of(b.begin(), b.end(), [](const json& v) { return v.is_number(); });
}

}  // namespace

DetectionSet parse_detections(const std::string& raw, const ImageDims& dims) {
    DetectionSet out;
    out.raw_response = raw;
    const std::string trimmed = trim(raw);
    if (lower(trimmed) == "no target" || lower(trimmed) == "\"no target\"") return out;

    bool saw_empty_array = false;
    for (std::size_t i = raw.find('['); i != std::string::npos; i = raw.find('[', i + 1)) {
        const std::size_t end = balanced_end(raw, i);
        if (end == std::string::npos) continue;
        const json arr = json::parse(raw.substr(i, end - i), nullptr, false);
        if (arr.is_discarded() || !arr.is_array()) continue;
        if (arr.empty()) {
            saw_empty_array = true;
            continue;
        }
        if (!std::all_of(arr.begin(), arr.end(), is_bbox_object)) continue;
        for (const json& el : arr) {
            const auto& b = el["bbox_2d"];
            const double x1 = std::clamp(b[0].get<double>(), 0.0, static_cast<double>(dims.width));
            const double y1 = std::clamp(b[1].get<double>(), 0.0, static_cast<double>(dims.height));
            const double x2 = std::clamp(b[2].get<double>(), 0.0, static_cast<double>(dims.width));
            const double y2 = std::clamp(b[3].get<double>(), 0.0, static_cast<double>(dims.height));
            if (!(x1 < x2) || !(y1 < y2)) {
                ++out.dropped;
                continue;
            }
            out.detections.push_back({BoundingBox{x1, y1, x2, y2}, el.value("label", "")});
        }
        return out;
    }
    if (saw_empty_array) return out;
    throw ParseError("no detection array found in model output", raw);
}

std::vector<std::string> parse_init_variants(const std::string& completion) {
    for (std::size_t i = completion.find('{'); i != std::string::npos;
         i = completion.find('{', i + 1)) {
        const std::size_t end = balanced_end(completion, i);
        if (end == std::string::npos) continue;
        const json obj = json::parse(completion.substr(i, end - i), nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) continue;
        int variants_present = 0;
        for (const auto& [key, value] : obj.items())
            if (key.rfind("variant_", 0) == 0) ++variants_present;
        if (variants_present == 0) continue;
        std::vector<std::string> out;
        for (int v = 1; v <= 5; ++v) {
            const std::string key = "variant_" + std::to_string(v);
            if (obj.contains(key) && obj[key].is_string()) out.push_back(obj[key].get<std::string>());
        }
        if (variants_present != 5 || out.size() != 5)
            throw VariantCountMismatch("expected 5 variants, got " +
                                       std::to_string(variants_present));
        return out;
    }
    throw ParseError("no variants object found in meta completion", completion);
}

std::string parse_improved_prompt(const std::string& completion) {
    static const std::string open = "<IMPROVED_PROMPT>", close = "</IMPROVED_PROMPT>";
    const std::size_t b = completion.find(open);
    if (b == std::string::npos) throw TagMissing("missing <IMPROVED_PROMPT> tag");
    const std::size_t e = completion.find(close, b + open.size());
    if (e == std::string::npos) throw TagMissing("missing </IMPROVED_PROMPT> tag");
    return trim(completion.substr(b + open.size(), e - b - open.size()));
}

ChatClient::ChatClient(ModelEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    if (endpoint_.timeout_s <= 0) throw ConfigError("endpoint timeout must be positive");
}

std::string ChatClient::complete(const std::string& user_text, const std::string& image_b64_png,
                                 double temperature, double top_p) const {
    json content = json::array();
    if (!image_b64_png.empty())
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:image/png;base64," + image_b64_png}}}});
    content.push_back({{"type", "text"}, {"text", user_text}});
    const json body = {{"model", endpoint_.model},
                       {"messages", json::array({{{"role", "user"}, {"content", content}}})},
                       {"temperature", temperature},
                       {"top_p", top_p},
                       {"max_tokens", endpoint_.max_tokens}};

    httplib::Client cli(endpoint_.base_url);
    cli.set_read_timeout(static_cast<time_t>(endpoint_.timeout_s),
                         static_cast<time_t>(endpoint_.timeout_s * 1e6) % 1000000);
    cli.set_connection_timeout(static_cast<time_t>(endpoint_.timeout_s), 0);
    httplib::Headers headers;
    if (const char* key = std::getenv(endpoint_.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);

    std::string last_error;
    for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(
                std::chrono::milliseconds(static_cast<int>(250 * (1 << (attempt - 1)))));
        auto res = cli.Post("/v1/chat/completions", headers, body.dump(), "application/json");
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "server error " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw TransportError("chat completion failed with status " +
                                 std::to_string(res->status) + ": " + res->body);
        const json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty())
            throw ParseError("malformed chat completion response", res->body);
        const std::string text =
            reply["choices"][0].value("message", json::object()).value("content", "");
        if (trim(text).empty()) throw ModelRefusal("empty completion");
        return text;
    }
    throw TransportError("retries exhausted: " + last_error);
}

DetectionSet ChatClient::ground(const RasterImage& image, const std::string& prompt,
                                int view_index, double temperature_override) const {
    const double temp =
        temperature_override >= 0 ? temperature_override : endpoint_.temperature;
    const std::string text = complete(prompt, encode_png_base64(image), temp, endpoint_.top_p);
    DetectionSet out = parse_detections(text, image.dims());
    out.view_index = view_index;
    return out;
}

std::string ChatClient::complete_text(const std::string& prompt) const {
    return complete(prompt, {}, endpoint_.temperature, endpoint_.top_p);
}

DetectionSet mock_ground(const std::vector<BoundingBox>& truth, const TransformSpec& spec,
                         const ImageDims& dims, const MockNoise& noise, std::uint64_t view_seed,
                         std::uint64_t image_seed, int view_index) {
    std::mt19937_64 view_rng(view_seed);
    std::mt19937_64 jitter_rng(noise.consistent_jitter ? image_seed : view_seed ^ 0x6a09e667f3bcc909ULL);
    const ImageDims view_dims = spec.output_dims(dims);

    DetectionSet out;
    out.view_index = view_index;
    for (const auto& box : truth) {
        double j[4];
        for (double& v : j) v = uniform_in(jitter_rng, -noise.jitter_px, noise.jitter_px);
        const bool missed = uniform_unit(view_rng) < noise.miss_prob;
        try {
            BoundingBox mapped = [&] {
                if (noise.consistent_jitter) {
                    const BoundingBox jittered{box.x1 + j[0], box.y1 + j[1], box.x2 + j[2],
                                               box.y2 + j[3]};
                    return apply_transform(jittered, spec, dims);
                }
                const BoundingBox fwd = apply_transform(box, spec, dims);
                const double w = static_cast<double>(view_dims.width);
                const double h = static_cast<double>(view_dims.height);
                return BoundingBox{std::clamp(fwd.x1 + j[0], 0.0, w),
                                   std::clamp(fwd.y1 + j[1], 0.0, h),
                                   std::clamp(fwd.x2 + j[2], 0.0, w),
                                   std::clamp(fwd.y2 + j[3], 0.0, h)};
            }();
            if (!missed) out.detections.push_back({mapped, "lesion"});
        } catch (const Error&) {
            ++out.dropped;  // pushed outside the frame
        }
    }
    if (uniform_unit(view_rng) < noise.hallucination_prob) {
        const double w = uniform_in(view_rng, 0.10, 0.30) * view_dims.width;
        const double h = uniform_in(view_rng, 0.10, 0.30) * view_dims.height;
        const double x1 = uniform_in(view_rng, 0.0, view_dims.width - w);
        const double y1 = uniform_in(view_rng, 0.0, view_dims.height - h);
        out.detections.push_back({BoundingBox{x1, y1, x1 + w, y1 + h}, "hallucination"});
    }
    return out;
}

}  // namespace ddl
