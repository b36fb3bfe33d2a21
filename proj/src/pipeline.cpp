#include "ddl/pipeline.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "ddl/errors.hpp"
#include "ddl/prompts.hpp"
#include "ddl/rng.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace ddl {

namespace {

constexpr double kMapThresholds[] = {0.25, 0.50, 0.75};

void parallel_for(std::size_t n, int cap, const std::function<void(std::size_t)>& body) {
    const int workers = std::max(1, std::min<int>(cap, static_cast<int>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) body(i);
        });
    for (auto& t : pool) t.join();
}

json correlation_json(const std::optional<CorrelationStat>& c) {
    if (!c) return nullptr;
    return {{"value", c->value}, {"p_value", c->p_value}, {"significance", c->significance}};
}

json calibration_json(const CalibrationReport& rep) {
    json bins = json::array();
    for (const auto& b : rep.bins)
        bins.push_back({{"lo", b.lo},
                        {"hi", b.hi},
                        {"count", b.count},
                        {"mean_confidence", b.mean_confidence},
                        {"mean_iou", b.mean_iou},
                        {"ci_halfwidth", b.ci_halfwidth}});
    return {{"n", rep.n},
            {"mean_iou", rep.mean_iou},
            {"mean_sigma", rep.mean_sigma},
            {"std_sigma", rep.std_sigma},
            {"mae", rep.mae},
            {"pearson", correlation_json(rep.pearson)},
            {"spearman", correlation_json(rep.spearman)},
            {"kendall", correlation_json(rep.kendall)},
            {"degenerate", rep.degenerate},
            {"bins", bins}};
}

std::string threshold_key(double t) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.2f", t);
    return buf;
}

std::vector<EvalSample> to_samples(const DatasetManifest& manifest,
                                   const std::vector<ImagePrediction>& predictions) {
    std::vector<EvalSample> samples;
    for (const auto& pred : predictions) {
        const ManifestEntry* entry = nullptr;
        for (const auto& e : manifest.entries)
            if (e.image_id == pred.image_id) {
                entry = &e;
                break;
            }
        if (!entry) throw Error("prediction for unknown image id: " + pred.image_id);
        samples.push_back({pred.image_id, entry->ground_truth, pred.detections});
    }
    return samples;
}

}  // namespace

std::string RunConfig::resolved_vanilla() const {
    return vanilla_prompt.empty() ? std::string(prompts::kVanilla) : vanilla_prompt;
}

Strategy strategy_from(const std::string& name) {
    if (name == "RHC" || name == "rhc") return Strategy::RHC;
    if (name == "SA" || name == "sa") return Strategy::SA;
    if (name == "WA" || name == "wa") return Strategy::WA;
    if (name == "DBSCAN" || name == "dbscan") return Strategy::DBSCAN;
    throw ConfigError("unknown strategy: " + name);
}

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::RHC: return "RHC";
        case Strategy::SA: return "SA";
        case Strategy::WA: return "WA";
        case Strategy::DBSCAN: return "DBSCAN";
    }
    return "?";
}

json config_json(const RunConfig& cfg) {
    return {{"target", {{"base_url", cfg.target.base_url}, {"model", cfg.target.model},
                        {"max_tokens", cfg.target.max_tokens}}},
            {"meta", {{"base_url", cfg.meta.base_url}, {"model", cfg.meta.model}}},
            {"views", cfg.views},
            {"tau", cfg.tau},
            {"omega1", cfg.omega1},
            {"omega2", cfg.omega2},
            {"seed", cfg.seed},
            {"max_generations", cfg.max_generations},
            {"strategy", strategy_name(cfg.strategy)},
            {"mode", cfg.mode == UncertaintyMode::Visual ? "visual" : "linguistic"},
            {"parallelism", cfg.parallelism},
            {"mock", cfg.mock},
            {"noise",
             {{"jitter_px", cfg.noise.jitter_px},
              {"hallucination_prob", cfg.noise.hallucination_prob},
              {"miss_prob", cfg.noise.miss_prob},
              {"consistent_jitter", cfg.noise.consistent_jitter}}},
            {"dbscan_eps", cfg.dbscan_eps},
            {"dbscan_min_pts", cfg.dbscan_min_pts},
            {"rotate_deg", cfg.rotate_deg},
            {"score_full_pipeline", cfg.score_full_pipeline},
            {"vanilla_prompt", cfg.resolved_vanilla()}};
}

std::string config_hash(const RunConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(config_json(cfg).dump())));
    return buf;
}

DatasetManifest load_manifest(const std::string& path, bool require_files) {
    std::ifstream in(path);
    if (!in) throw ManifestError("cannot open manifest: " + path);
    DatasetManifest manifest;
    std::string line;
    int lineno = 0;
    std::vector<std::string> seen_ids;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw ManifestError("invalid JSON object", lineno);
        ManifestEntry entry;
        try {
            entry.image_path = j.at("image_path").get<std::string>();
            entry.image_id = j.value("image_id", entry.image_path);
            entry.label = j.value("label", "");
            if (j.contains("width") && j.contains("height")) {
                entry.dims = ImageDims(j["width"].get<int>(), j["height"].get<int>());
                entry.has_dims = true;
            }
            for (const auto& b : j.at("ground_truth")) {
                if (!b.is_array() || b.size() != 4)
                    throw Error("ground_truth entries must be 4-number arrays");
                entry.ground_truth.emplace_back(b[0].get<double>(), b[1].get<double>(),
                                                b[2].get<double>(), b[3].get<double>());
            }
        } catch (const std::exception& e) {
            throw ManifestError(e.what(), lineno);
        }
        if (std::find(seen_ids.begin(), seen_ids.end(), entry.image_id) != seen_ids.end())
            throw ManifestError("duplicate image id: " + entry.image_id, lineno);
        seen_ids.push_back(entry.image_id);
        if (require_files) {
            if (!fs::exists(entry.image_path))
                throw ManifestError("image not found: " + entry.image_path, lineno);
            if (!entry.has_dims) {
                entry.dims = load_image(entry.image_path).dims();
                entry.has_dims = true;
            }
        }
        if (entry.has_dims) {
            for (const auto& b : entry.ground_truth)
                if (!b.inside(entry.dims))
                    throw ManifestError("ground truth box outside image bounds", lineno);
        }
        manifest.entries.push_back(std::move(entry));
    }
    return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest: " + path);
    for (const auto& e : manifest.entries) {
        json boxes = json::array();
        for (const auto& b : e.ground_truth) boxes.push_back({b.x1, b.y1, b.x2, b.y2});
        json j = {{"image_id", e.image_id},
                  {"image_path", e.image_path},
                  {"label", e.label},
                  {"ground_truth", boxes}};
        if (e.has_dims) {
            j["width"] = e.dims.width;
            j["height"] = e.dims.height;
        }
        out << j.dump() << "\n";
    }
}

DetectionSet MockBackend::ground(const GroundRequest& req) {
    const std::uint64_t image_seed = derive_seed(run_seed_, req.entry->image_id, 0x1111);
    const std::uint64_t view_seed =
        derive_seed(run_seed_, req.entry->image_id, 0x2222 + static_cast<std::uint64_t>(req.view_index));
    MockNoise noise = noise_;
    // High-temperature sampling re-draws the whole response: a perception
    // error that is stable across renders of the same image is still
    // re-sampled per call, so consistent jitter does not apply there.
    if (req.temperature >= 0.5) noise.consistent_jitter = false;
    return mock_ground(req.entry->ground_truth, req.spec, req.entry->dims, noise, view_seed,
                       image_seed, req.view_index);
}

DetectionSet HttpBackend::ground(const GroundRequest& req) {
    RasterImage base;
    {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        if (cached_path_ != req.entry->image_path) {
            cached_image_ = load_image(req.entry->image_path);
            cached_path_ = req.entry->image_path;
        }
        base = cached_image_;
    }
    const RasterImage view = render_view(base, req.spec);
    return client_.ground(view, req.prompt, req.view_index, req.temperature);
}

DetectionSet CaptureBackend::ground(const GroundRequest& req) {
    {
        std::lock_guard<std::mutex> lock(mutex_);
        records_.push_back(
            {req.entry->image_id, req.view_index, req.temperature, req.purpose, req.prompt});
    }
    return inner_.ground(req);
}

std::vector<CaptureBackend::Record> CaptureBackend::records() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return records_;
}

ImagePrediction ground_one_image(const RunConfig& cfg, const ManifestEntry& entry,
                                 const std::string& prompt, GroundingBackend& backend,
                                 RequestPurpose purpose) {
    const bool visual = cfg.mode == UncertaintyMode::Visual;
    std::vector<TransformSpec> specs;
    if (visual) {
        specs = make_roster(derive_seed(cfg.seed, entry.image_id, 0x3333), cfg.views,
                            cfg.rotate_deg)
                    .specs;
    } else {
        specs.assign(cfg.views, TransformSpec::identity());
    }

    // Reference inference; failures here fail the whole image.
    DetectionSet reference =
        backend.ground({&entry, TransformSpec::identity(), 0, prompt, cfg.target.temperature,
                        purpose});
    int dropped = reference.dropped;

    std::vector<DetectionSet> views(specs.size());
    for (std::size_t m = 0; m < specs.size(); ++m) {
        const double temperature = visual ? cfg.target.temperature : 1.0;
        DetectionSet raw;
        try {
            raw = backend.ground({&entry, specs[m], static_cast<int>(m) + 1, prompt, temperature,
                                  purpose});
        } catch (const Error&) {
            // A failed view contributes an empty set so the M+1 evidence
            // pool keeps its denominator.
            raw.view_index = static_cast<int>(m) + 1;
        }
        dropped += raw.dropped;
        DetectionSet projected;
        projected.view_index = raw.view_index;
        for (const auto& det : raw.detections) {
            if (!visual) {
                projected.detections.push_back(det);
                continue;
            }
            try {
                projected.detections.push_back(
                    {invert_transform(det.box, specs[m], entry.dims), det.label});
            } catch (const DegenerateResult&) {
                ++dropped;
            }
        }
        views[m] = std::move(projected);
    }

    ImagePrediction pred;
    pred.image_id = entry.image_id;
    pred.dropped_boxes = dropped;
    switch (cfg.strategy) {
        case Strategy::RHC:
            pred.detections = rhc(reference, views, cfg.consensus());
            break;
        case Strategy::WA:
            pred.detections = consolidate_wa(reference, views, cfg.consensus());
            break;
        case Strategy::SA: {
            std::vector<DetectionSet> all;
            all.push_back(reference);
            all.insert(all.end(), views.begin(), views.end());
            pred.detections = consolidate_sa(all, cfg.tau);
            break;
        }
        case Strategy::DBSCAN: {
            std::vector<DetectionSet> all;
            all.push_back(reference);
            all.insert(all.end(), views.begin(), views.end());
            pred.detections = consolidate_dbscan(all, cfg.dbscan_eps, cfg.dbscan_min_pts);
            break;
        }
    }
    return pred;
}

json evaluate(const DatasetManifest& manifest, const std::vector<ImagePrediction>& predictions,
              std::size_t failed_count) {
    const auto samples = to_samples(manifest, predictions);
    json map_json;
    for (double t : kMapThresholds) map_json[threshold_key(t)] = average_precision(samples, t);
    int dropped = 0;
    for (const auto& p : predictions) dropped += p.dropped_boxes;
    json report = {{"map", map_json},
                   {"evaluated", predictions.size()},
                   {"failed", failed_count},
                   {"dropped_boxes", dropped}};
    const auto pairs = sigma_iou_pairs(samples);
    if (!pairs.empty()) report["calibration"] = calibration_json(calibration(pairs));
    return report;
}

RunArtifacts run_ddl(const RunConfig& cfg, const DatasetManifest& dev, const DatasetManifest& test,
                     GroundingBackend& backend, MetaProposer& meta) {
    RunArtifacts artifacts;
    artifacts.config_hash = config_hash(cfg);

    // Phase 1: DAPE over the dev split.
    const auto score_prompt = [&](const std::string& prompt) {
        std::vector<EvalSample> samples(dev.entries.size());
        std::atomic<bool> failed{false};
        parallel_for(dev.entries.size(), cfg.parallelism, [&](std::size_t i) {
            const auto& entry = dev.entries[i];
            EvalSample sample{entry.image_id, entry.ground_truth, {}};
            try {
                if (cfg.score_full_pipeline) {
                    sample.predictions =
                        ground_one_image(cfg, entry, prompt, backend, RequestPurpose::DevScoring)
                            .detections;
                } else {
                    const DetectionSet set = backend.ground(
                        {&entry, TransformSpec::identity(), 0, prompt, cfg.target.temperature,
                         RequestPurpose::DevScoring});
                    for (const auto& d : set.detections)
                        sample.predictions.push_back({d.box, std::nullopt, d.label, 0, 0.0});
                }
            } catch (const Error&) {
                failed = true;  // unscorable image counts as zero detections
            }
            samples[i] = std::move(sample);
        });
        (void)failed;
        double sum = 0;
        for (double t : kMapThresholds) sum += average_precision(samples, t);
        return sum / std::size(kMapThresholds);
    };

    artifacts.history = seed_population(cfg.resolved_vanilla(), meta);
    EvolveOptions evolve_opts;
    evolve_opts.max_generations = cfg.max_generations;
    artifacts.best_prompt = evolve(artifacts.history, meta, score_prompt, evolve_opts);

    // Phase 2: grounding over the test split.
    std::vector<std::optional<ImagePrediction>> results(test.entries.size());
    std::vector<std::optional<ImageFailure>> failures(test.entries.size());
    parallel_for(test.entries.size(), cfg.parallelism, [&](std::size_t i) {
        try {
            results[i] = ground_one_image(cfg, test.entries[i], artifacts.best_prompt.text,
                                          backend, RequestPurpose::Evaluation);
        } catch (const std::exception& e) {
            failures[i] = ImageFailure{test.entries[i].image_id, e.what()};
        }
    });
    for (auto& r : results)
        if (r) artifacts.predictions.push_back(std::move(*r));
    for (auto& f : failures)
        if (f) artifacts.failures.push_back(std::move(*f));

    // Phase 3: evaluation.
    artifacts.report = evaluate(test, artifacts.predictions, artifacts.failures.size());
    artifacts.report["best_prompt"] = artifacts.best_prompt.text;
    artifacts.report["best_prompt_score"] = artifacts.best_prompt.score;
    artifacts.report["seed"] = cfg.seed;
    artifacts.report["config_hash"] = artifacts.config_hash;

    if (!cfg.out_dir.empty()) write_artifacts(cfg, artifacts);
    return artifacts;
}

std::pair<json, json> run_uncertainty_mode(const RunConfig& cfg, const DatasetManifest& test,
                                           GroundingBackend& backend, const std::string& prompt) {
    auto run_mode = [&](UncertaintyMode mode) {
        RunConfig local = cfg;
        local.mode = mode;
        std::vector<ImagePrediction> predictions;
        std::size_t failed = 0;
        for (const auto& entry : test.entries) {
            try {
                predictions.push_back(
                    ground_one_image(local, entry, prompt, backend, RequestPurpose::Evaluation));
            } catch (const std::exception&) {
                ++failed;
            }
        }
        json report = evaluate(test, predictions, failed);
        report["mode"] = mode == UncertaintyMode::Visual ? "visual" : "linguistic";
        return report;
    };
    return {run_mode(UncertaintyMode::Visual), run_mode(UncertaintyMode::Linguistic)};
}

void write_predictions_jsonl(const std::vector<ImagePrediction>& preds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write predictions: " + path);
    for (const auto& p : preds) {
        json dets = json::array();
        for (const auto& d : p.detections) {
            json det = {{"bbox", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}},
                        {"label", d.label},
                        {"n_matched", d.n_matched},
                        {"mean_match_iou", d.mean_match_iou}};
            det["sigma"] = d.sigma ? json(*d.sigma) : json(nullptr);
            dets.push_back(std::move(det));
        }
        out << json{{"image_id", p.image_id},
                    {"detections", dets},
                    {"dropped_boxes", p.dropped_boxes}}
                   .dump()
            << "\n";
    }
}

std::vector<ImagePrediction> load_predictions_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read predictions: " + path);
    std::vector<ImagePrediction> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        ImagePrediction p;
        p.image_id = j.at("image_id").get<std::string>();
        p.dropped_boxes = j.value("dropped_boxes", 0);
        for (const auto& det : j.at("detections")) {
            const auto& b = det.at("bbox");
            ConsolidatedDetection d{BoundingBox(b[0].get<double>(), b[1].get<double>(),
                                                b[2].get<double>(), b[3].get<double>()),
                                    std::nullopt, det.value("label", ""),
                                    det.value("n_matched", 0), det.value("mean_match_iou", 0.0)};
            if (det.contains("sigma") && !det["sigma"].is_null())
                d.sigma = det["sigma"].get<double>();
            p.detections.push_back(std::move(d));
        }
        out.push_back(std::move(p));
    }
    return out;
}

void write_artifacts(const RunConfig& cfg, const RunArtifacts& artifacts) {
    fs::create_directories(cfg.out_dir);
    const fs::path dir(cfg.out_dir);
    {
        json cj = config_json(cfg);
        cj["config_hash"] = artifacts.config_hash;
        std::ofstream out(dir / "config.json");
        out << cj.dump(2) << "\n";
    }
    write_history_jsonl(artifacts.history, (dir / "dape_history.jsonl").string());
    write_predictions_jsonl(artifacts.predictions, (dir / "predictions.jsonl").string());
    {
        std::ofstream out(dir / "report.json");
        out << artifacts.report.dump(2) << "\n";
    }
    {
        std::ofstream out(dir / "failures.jsonl");
        for (const auto& f : artifacts.failures)
            out << json{{"image_id", f.image_id}, {"error", f.error}}.dump() << "\n";
    }
}

DatasetManifest synthetic_manifest(int n, std::uint64_t seed, int width, int height,
                                   const std::string& id_prefix) {
    DatasetManifest manifest;
    std::mt19937_64 rng(seed);
    for (int i = 0; i < n; ++i) {
        ManifestEntry entry;
        entry.image_id = id_prefix + "-" + std::to_string(i);
        entry.image_path = entry.image_id + ".png";
        entry.label = "lesion";
        entry.dims = ImageDims(width, height);
        entry.has_dims = true;
        const double w = uniform_in(rng, 40.0, 80.0);
        const double h = uniform_in(rng, 40.0, 80.0);
        const double x1 = uniform_in(rng, 30.0, width - w - 30.0);
        const double y1 = uniform_in(rng, 30.0, height - h - 30.0);
        entry.ground_truth.emplace_back(x1, y1, x1 + w, y1 + h);
        manifest.entries.push_back(std::move(entry));
    }
    return manifest;
}

}  // namespace ddl
