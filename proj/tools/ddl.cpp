#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ddl/errors.hpp"
#include "ddl/pipeline.hpp"
#include "ddl/prompts.hpp"

using nlohmann::json;

namespace {

struct CommonOpts {
    ddl::RunConfig cfg;
    std::string strategy = "RHC";
    std::string mode = "visual";
    bool seed_set = false;
};

void add_run_flags(CLI::App* app, CommonOpts& o) {
    app->set_config("--config", "", "JSON/INI config file; CLI flags win");
    app->add_option("--target-url", o.cfg.target.base_url, "Grounding model base URL");
    app->add_option("--target-model", o.cfg.target.model, "Grounding model name");
    app->add_option("--meta-url", o.cfg.meta.base_url, "Meta-optimizer base URL");
    app->add_option("--meta-model", o.cfg.meta.model, "Meta-optimizer model name");
    app->add_option("--views,-M", o.cfg.views, "Number of perturbed views")->capture_default_str();
    app->add_option("--tau", o.cfg.tau, "Match IoU threshold")->capture_default_str();
    app->add_option("--omega1", o.cfg.omega1, "Consensus weight")->capture_default_str();
    app->add_option("--omega2", o.cfg.omega2, "Consistency weight")->capture_default_str();
    app->add_option("--seed", o.cfg.seed, "Run seed")->each([&o](const std::string&) {
        o.seed_set = true;
    });
    app->add_option("--generations,-G", o.cfg.max_generations, "DAPE generation budget")
        ->capture_default_str();
    app->add_option("--strategy", o.strategy, "Consolidation strategy: RHC|SA|WA|DBSCAN")
        ->capture_default_str();
    app->add_option("--uncertainty", o.mode, "visual|linguistic|both")->capture_default_str();
    app->add_option("--parallelism", o.cfg.parallelism, "Concurrent image cap")
        ->capture_default_str();
    app->add_option("--out", o.cfg.out_dir, "Artifacts directory");
    app->add_flag("--mock", o.cfg.mock, "Use the deterministic mock model");
    app->add_option("--mock-jitter", o.cfg.noise.jitter_px, "Mock jitter in pixels");
    app->add_option("--mock-hallucination", o.cfg.noise.hallucination_prob,
                    "Mock hallucination probability");
    app->add_option("--mock-miss", o.cfg.noise.miss_prob, "Mock miss probability");
    app->add_flag("--mock-consistent-jitter", o.cfg.noise.consistent_jitter,
                  "Draw mock jitter once per image instead of per view");
    app->add_option("--dbscan-eps", o.cfg.dbscan_eps, "DBSCAN eps on 1-IoU")
        ->capture_default_str();
    app->add_option("--dbscan-min-pts", o.cfg.dbscan_min_pts, "DBSCAN min points")
        ->capture_default_str();
    app->add_option("--rotate-deg", o.cfg.rotate_deg, "Roster rotation magnitude")
        ->capture_default_str();
    app->add_flag("--score-full-pipeline", o.cfg.score_full_pipeline,
                  "Score DAPE candidates through views + consolidation");
    app->add_option("--vanilla-prompt-file", [&o](const std::vector<std::string>& paths) {
        std::ifstream in(paths.back());
        if (!in) return false;
        o.cfg.vanilla_prompt.assign(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
        return true;
    }, "File holding the vanilla instruction");
}

void finalize(CommonOpts& o) {
    o.cfg.strategy = ddl::strategy_from(o.strategy);
    if (o.mode == "linguistic") o.cfg.mode = ddl::UncertaintyMode::Linguistic;
    if (o.cfg.mock && !o.seed_set)
        throw CLI::ValidationError("--seed", "--seed is mandatory in mock mode");
    if (!o.cfg.mock && o.cfg.target.base_url.empty())
        throw CLI::ValidationError("--target-url", "required outside mock mode");
    o.cfg.meta.temperature = 0.7;
    o.cfg.meta.top_p = 0.9;
}

std::unique_ptr<ddl::GroundingBackend> make_backend(const ddl::RunConfig& cfg) {
    if (cfg.mock) return std::make_unique<ddl::MockBackend>(cfg.noise, cfg.seed);
    return std::make_unique<ddl::HttpBackend>(cfg.target);
}

std::unique_ptr<ddl::MetaProposer> make_meta(const ddl::RunConfig& cfg) {
    if (cfg.mock) return std::make_unique<ddl::ScriptedMetaProposer>();
    if (cfg.meta.base_url.empty()) throw ddl::ConfigError("--meta-url required outside mock mode");
    return std::make_unique<ddl::HttpMetaProposer>(cfg.meta);
}

void print_map(const json& report) {
    for (const auto& [key, value] : report.at("map").items())
        std::cout << "mAP@" << key << " = " << value.get<double>() << "\n";
    std::cout << "evaluated=" << report.at("evaluated") << " failed=" << report.at("failed")
              << " dropped_boxes=" << report.at("dropped_boxes") << "\n";
}

int cmd_evolve(CommonOpts& o, const std::string& dev_path) {
    finalize(o);
    const auto dev = ddl::load_manifest(dev_path, !o.cfg.mock);
    auto backend = make_backend(o.cfg);
    auto meta = make_meta(o.cfg);
    // Reuse the run pipeline with an empty test split; it persists history.
    auto artifacts = ddl::run_ddl(o.cfg, dev, ddl::DatasetManifest{}, *backend, *meta);
    std::cout << "best prompt (score " << artifacts.best_prompt.score << "):\n"
              << artifacts.best_prompt.text << "\n";
    return 0;
}

int cmd_ground(CommonOpts& o, const std::string& manifest_path, const std::string& dev_path,
               const std::string& prompt_file) {
    finalize(o);
    const auto test = ddl::load_manifest(manifest_path, !o.cfg.mock);
    auto backend = make_backend(o.cfg);

    if (o.mode == "both") {
        std::string prompt = o.cfg.resolved_vanilla();
        auto [visual, linguistic] = ddl::run_uncertainty_mode(o.cfg, test, *backend, prompt);
        json paired = {{"visual", visual}, {"linguistic", linguistic}};
        if (!o.cfg.out_dir.empty()) {
            std::filesystem::create_directories(o.cfg.out_dir);
            std::ofstream out(std::filesystem::path(o.cfg.out_dir) / "uncertainty_reports.json");
            out << paired.dump(2) << "\n";
        }
        std::cout << paired.dump(2) << "\n";
        return 0;
    }

    if (!dev_path.empty()) {
        const auto dev = ddl::load_manifest(dev_path, !o.cfg.mock);
        auto meta = make_meta(o.cfg);
        const auto artifacts = ddl::run_ddl(o.cfg, dev, test, *backend, *meta);
        print_map(artifacts.report);
        return 0;
    }

    // No dev split: ground with a fixed prompt (file or vanilla).
    std::string prompt = o.cfg.resolved_vanilla();
    if (!prompt_file.empty()) {
        std::ifstream in(prompt_file);
        if (!in) throw ddl::Error("cannot read prompt file: " + prompt_file);
        prompt.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    std::vector<ddl::ImagePrediction> predictions;
    std::vector<ddl::ImageFailure> failures;
    for (const auto& entry : test.entries) {
        try {
            predictions.push_back(ddl::ground_one_image(o.cfg, entry, prompt, *backend,
                                                        ddl::RequestPurpose::Evaluation));
        } catch (const std::exception& e) {
            failures.push_back({entry.image_id, e.what()});
        }
    }
    json report = ddl::evaluate(test, predictions, failures.size());
    if (!o.cfg.out_dir.empty()) {
        ddl::RunArtifacts artifacts;
        artifacts.predictions = predictions;
        artifacts.failures = failures;
        artifacts.history.records.push_back({prompt, 0.0, 0, ddl::PromptOrigin::Vanilla, true});
        artifacts.report = report;
        artifacts.config_hash = ddl::config_hash(o.cfg);
        ddl::write_artifacts(o.cfg, artifacts);
    }
    print_map(report);
    return 0;
}

int cmd_eval(const std::string& predictions_path, const std::string& manifest_path,
             const std::string& out_path) {
    const auto manifest = ddl::load_manifest(manifest_path);
    const auto predictions = ddl::load_predictions_jsonl(predictions_path);
    const json report = ddl::evaluate(manifest, predictions);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << report.dump(2) << "\n";
    }
    print_map(report);
    return 0;
}

int cmd_report(const std::string& predictions_path, const std::string& manifest_path,
               const std::string& history_path, const std::string& out_path) {
    const auto manifest = ddl::load_manifest(manifest_path);
    const auto predictions = ddl::load_predictions_jsonl(predictions_path);
    json report = ddl::evaluate(manifest, predictions);
    if (!history_path.empty()) {
        const auto history = ddl::load_history_jsonl(history_path);
        std::vector<double> scores;
        for (const auto& r : history.records) scores.push_back(r.score);
        try {
            json curves = json::array();
            for (const auto& c : ddl::kde(scores, ddl::KdeSplit::Median))
                curves.push_back({{"label", c.label},
                                  {"bandwidth", c.bandwidth},
                                  {"grid", c.grid},
                                  {"density", c.density}});
            report["prompt_score_kde"] = curves;
        } catch (const ddl::Error& e) {
            report["prompt_score_kde_error"] = e.what();
        }
    }
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << report.dump(2) << "\n";
    }
    std::cout << report.dump(2) << "\n";
    return 0;
}

int cmd_mock_demo(CommonOpts& o, int n_images) {
    o.cfg.mock = true;
    finalize(o);
    if (o.cfg.out_dir.empty()) o.cfg.out_dir = "mock-demo-artifacts";
    const auto dev = ddl::synthetic_manifest(std::max(2, n_images / 4), o.cfg.seed + 1, 256, 256,
                                             "dev");
    const auto test = ddl::synthetic_manifest(n_images, o.cfg.seed, 256, 256, "test");
    std::filesystem::create_directories(o.cfg.out_dir);
    ddl::write_manifest(dev, (std::filesystem::path(o.cfg.out_dir) / "dev_manifest.jsonl").string());
    ddl::write_manifest(test,
                        (std::filesystem::path(o.cfg.out_dir) / "test_manifest.jsonl").string());
    auto backend = make_backend(o.cfg);
    auto meta = make_meta(o.cfg);
    const auto artifacts = ddl::run_ddl(o.cfg, dev, test, *backend, *meta);
    print_map(artifacts.report);
    std::cout << "artifacts in " << o.cfg.out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Test-time verification for abnormality grounding with frozen VLMs"};
    app.require_subcommand(1);

    CommonOpts evolve_opts, ground_opts, demo_opts;
    std::string dev_path, manifest_path, predictions_path, history_path, out_path, prompt_file;
    int n_images = 10;

    auto* evolve = app.add_subcommand("evolve", "Run DAPE only and emit the best prompt");
    add_run_flags(evolve, evolve_opts);
    evolve->add_option("--dev-manifest", dev_path, "Development split manifest")->required();

    auto* ground = app.add_subcommand("ground", "Inference + consolidation over a manifest");
    add_run_flags(ground, ground_opts);
    ground->add_option("--manifest", manifest_path, "Test manifest")->required();
    ground->add_option("--dev-manifest", dev_path, "Optional dev split (enables DAPE)");
    ground->add_option("--prompt-file", prompt_file, "Fixed instruction file (skips DAPE)");

    auto* eval = app.add_subcommand("eval", "Metrics from prediction records + manifest");
    eval->add_option("--predictions", predictions_path)->required();
    eval->add_option("--manifest", manifest_path)->required();
    eval->add_option("--out", out_path, "Report JSON path");

    auto* report = app.add_subcommand("report", "Calibration + KDE report from artifacts");
    report->add_option("--predictions", predictions_path)->required();
    report->add_option("--manifest", manifest_path)->required();
    report->add_option("--history", history_path, "DAPE history JSONL for the KDE analysis");
    report->add_option("--out", out_path, "Report JSON path");

    auto* demo = app.add_subcommand("mock-demo", "Self-contained synthetic end-to-end run");
    add_run_flags(demo, demo_opts);
    demo->add_option("--images", n_images, "Synthetic test images")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (evolve->parsed()) return cmd_evolve(evolve_opts, dev_path);
        if (ground->parsed()) return cmd_ground(ground_opts, manifest_path, dev_path, prompt_file);
        if (eval->parsed()) return cmd_eval(predictions_path, manifest_path, out_path);
        if (report->parsed())
            return cmd_report(predictions_path, manifest_path, history_path, out_path);
        if (demo->parsed()) return cmd_mock_demo(demo_opts, n_images);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
