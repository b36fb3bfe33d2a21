#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddl/consolidation.hpp"
#include "ddl/dape.hpp"
#include "ddl/evalcal.hpp"
#include "ddl/lvlm_client.hpp"
#include "ddl/viewgen.hpp"

namespace ddl {

struct ManifestEntry {
    std::string image_id;
    std::string image_path;
    std::string label;
    ImageDims dims{1, 1};
    bool has_dims = false;
    std::vector<BoundingBox> ground_truth;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
};

// Line-delimited JSON manifest: one {image_id?, image_path, width?, height?,
// ground_truth, label?} object per line. Validates every box, rejects
// duplicate ids. With require_files set, image paths must exist (dims are
// read from the file when absent).
DatasetManifest load_manifest(const std::string& path, bool require_files = false);
void write_manifest(const DatasetManifest& manifest, const std::string& path);

enum class Strategy { RHC, SA, WA, DBSCAN };
enum class UncertaintyMode { Visual, Linguistic };

Strategy strategy_from(const std::string& name);
std::string strategy_name(Strategy s);

struct RunConfig {
    ModelEndpoint target;
    ModelEndpoint meta;
    int views = 7;
    double tau = 0.1;
    double omega1 = 0.6;
    double omega2 = 0.4;
    std::uint64_t seed = 0;
    int max_generations = 10;
    Strategy strategy = Strategy::RHC;
    UncertaintyMode mode = UncertaintyMode::Visual;
    int parallelism = 32;
    std::string out_dir;
    bool mock = false;
    MockNoise noise;
    double dbscan_eps = 0.9;
    int dbscan_min_pts = 2;
    double rotate_deg = 3.0;
    bool score_full_pipeline = false;  // DAPE dev scoring through views + consolidation
    std::string vanilla_prompt;        // empty = built-in default

    ConsensusConfig consensus() const { return {tau, omega1, omega2, views}; }
    std::string resolved_vanilla() const;
};

nlohmann::json config_json(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

enum class RequestPurpose { DevScoring, Evaluation };

struct GroundRequest {
    const ManifestEntry* entry = nullptr;
    TransformSpec spec;
    int view_index = 0;  // 0 = reference
    std::string prompt;
    double temperature = 0.0;
    RequestPurpose purpose = RequestPurpose::Evaluation;
};

class GroundingBackend {
public:
    virtual ~GroundingBackend() = default;
    virtual DetectionSet ground(const GroundRequest& req) = 0;
};

// Deterministic simulator driven by the manifest's ground truth.
class MockBackend : public GroundingBackend {
public:
    MockBackend(MockNoise noise, std::uint64_t run_seed) : noise_(noise), run_seed_(run_seed) {}
    DetectionSet ground(const GroundRequest& req) override;

private:
    MockNoise noise_;
    std::uint64_t run_seed_;
};

// Real endpoint: renders the requested view and issues a vision chat call.
class HttpBackend : public GroundingBackend {
public:
    explicit HttpBackend(ModelEndpoint endpoint) : client_(std::move(endpoint)) {}
    DetectionSet ground(const GroundRequest& req) override;

private:
    ChatClient client_;
    std::mutex cache_mutex_;
    std::string cached_path_;
    RasterImage cached_image_;
};

// Test instrumentation: records every request before forwarding.
class CaptureBackend : public GroundingBackend {
public:
    struct Record {
        std::string image_id;
        int view_index;
        double temperature;
        RequestPurpose purpose;
        std::string prompt;
    };

    explicit CaptureBackend(GroundingBackend& inner) : inner_(inner) {}
    DetectionSet ground(const GroundRequest& req) override;
    std::vector<Record> records() const;

private:
    GroundingBackend& inner_;
    mutable std::mutex mutex_;
    std::vector<Record> records_;
};

struct ImagePrediction {
    std::string image_id;
    std::vector<ConsolidatedDetection> detections;
    int dropped_boxes = 0;  // degenerate boxes discarded during back-projection
};

struct ImageFailure {
    std::string image_id;
    std::string error;
};

struct RunArtifacts {
    std::vector<ImagePrediction> predictions;
    std::vector<ImageFailure> failures;
    PromptHistory history;
    PromptRecord best_prompt;
    nlohmann::json report;
    std::string config_hash;
};

// Reference + M view inferences for one image, back-projection, and the
// configured consolidation. Throws if the reference inference fails; a
// failed view contributes an empty DetectionSet.
ImagePrediction ground_one_image(const RunConfig& cfg, const ManifestEntry& entry,
                                 const std::string& prompt, GroundingBackend& backend,
                                 RequestPurpose purpose);

// DAPE on the dev split, grounding over the test split, evaluation report;
// artifacts are persisted to cfg.out_dir when set.
RunArtifacts run_ddl(const RunConfig& cfg, const DatasetManifest& dev, const DatasetManifest& test,
                     GroundingBackend& backend, MetaProposer& meta);

// Grounds + evaluates the test split in visual and linguistic mode with the
// same prompt; first report is visual, second linguistic.
std::pair<nlohmann::json, nlohmann::json> run_uncertainty_mode(const RunConfig& cfg,
                                                               const DatasetManifest& test,
                                                               GroundingBackend& backend,
                                                               const std::string& prompt);

nlohmann::json evaluate(const DatasetManifest& manifest,
                        const std::vector<ImagePrediction>& predictions,
                        std::size_t failed_count = 0);

void write_predictions_jsonl(const std::vector<ImagePrediction>& preds, const std::string& path);
std::vector<ImagePrediction> load_predictions_jsonl(const std::string& path);

void write_artifacts(const RunConfig& cfg, const RunArtifacts& artifacts);

// Synthetic manifest for mock runs: n images with one seeded truth box each.
DatasetManifest synthetic_manifest(int n, std::uint64_t seed, int width = 256, int height = 256,
                                   const std::string& id_prefix = "synthetic");

}  // namespace ddl
