#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "ddl/errors.hpp"
#include "ddl/pipeline.hpp"

using namespace ddl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / name; }

RunConfig mock_config(std::uint64_t seed) {
    RunConfig cfg;
    cfg.mock = true;
    cfg.seed = seed;
    cfg.max_generations = 0;
    cfg.parallelism = 4;
    return cfg;
}

}  // namespace

TEST_CASE("manifest parsing and validation") {
    const auto path = temp_file("ddl_manifest_ok.jsonl");
    {
        std::ofstream out(path);
        out << R"({"image_id": "a", "image_path": "a.png", "width": 100, "height": 100, "ground_truth": [[10,10,40,40]]})"
            << "\n";
        out << "\n";  // blank lines are skipped
        out << R"({"image_id": "b", "image_path": "b.png", "width": 64, "height": 64, "ground_truth": []})"
            << "\n";
    }
    const auto m = load_manifest(path.string());
    REQUIRE(m.entries.size() == 2);
    CHECK(m.entries[0].image_id == "a");
    CHECK(m.entries[0].ground_truth.size() == 1);
    CHECK(m.entries[1].ground_truth.empty());

    SUBCASE("degenerate box carries its line number") {
        const auto bad = temp_file("ddl_manifest_badbox.jsonl");
        std::ofstream out(bad);
        out << R"({"image_id": "a", "image_path": "a.png", "width": 100, "height": 100, "ground_truth": [[10,10,10,40]]})"
            << "\n";
        out.close();
        try {
            load_manifest(bad.string());
            FAIL("expected ManifestError");
        } catch (const ManifestError& e) {
            CHECK(e.line == 1);
        }
        fs::remove(bad);
    }
    SUBCASE("duplicate ids are rejected by name") {
        const auto dup = temp_file("ddl_manifest_dup.jsonl");
        std::ofstream out(dup);
        for (int i = 0; i < 2; ++i)
            out << R"({"image_id": "same", "image_path": "x.png", "width": 10, "height": 10, "ground_truth": []})"
                << "\n";
        out.close();
        try {
            load_manifest(dup.string());
            FAIL("expected ManifestError");
        } catch (const ManifestError& e) {
            CHECK(std::string(e.what()).find("same") != std::string::npos);
        }
        fs::remove(dup);
    }
    SUBCASE("boxes must fit the declared dims") {
        const auto bad = temp_file("ddl_manifest_oob.jsonl");
        std::ofstream out(bad);
        out << R"({"image_id": "a", "image_path": "a.png", "width": 32, "height": 32, "ground_truth": [[0,0,64,64]]})"
            << "\n";
        out.close();
        CHECK_THROWS_AS(load_manifest(bad.string()), ManifestError);
        fs::remove(bad);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_manifest("/no/such/file.jsonl"), ManifestError); }

    fs::remove(path);
}

TEST_CASE("manifest round trip") {
    const auto m = synthetic_manifest(5, 99);
    const auto path = temp_file("ddl_manifest_rt.jsonl");
    write_manifest(m, path.string());
    const auto loaded = load_manifest(path.string());
    REQUIRE(loaded.entries.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(loaded.entries[i].image_id == m.entries[i].image_id);
        CHECK(loaded.entries[i].ground_truth == m.entries[i].ground_truth);
    }
    fs::remove(path);
}

TEST_CASE("noiseless mock run is perfect") {
    const auto cfg = mock_config(5);
    const auto dev = synthetic_manifest(4, 51, 256, 256, "dev");
    const auto test = synthetic_manifest(10, 52, 256, 256, "test");
    MockBackend backend(cfg.noise, cfg.seed);
    ScriptedMetaProposer meta;
    const auto artifacts = run_ddl(cfg, dev, test, backend, meta);

    CHECK(artifacts.failures.empty());
    REQUIRE(artifacts.predictions.size() == 10);
    for (const auto& p : artifacts.predictions) {
        REQUIRE(p.detections.size() == 1);
        CHECK(p.detections[0].sigma.value() == doctest::Approx(1.0).epsilon(1e-9));
    }
    for (const char* key : {"0.25", "0.50", "0.75"})
        CHECK(artifacts.report.at("map").at(key).get<double>() == doctest::Approx(1.0));
    CHECK(artifacts.report.at("evaluated").get<int>() == 10);
    CHECK(artifacts.report.at("failed").get<int>() == 0);
}

TEST_CASE("mock runs are byte-identical under a fixed seed") {
    auto cfg = mock_config(77);
    cfg.noise.jitter_px = 3.0;
    cfg.noise.hallucination_prob = 0.3;
    const auto dev = synthetic_manifest(3, 61, 256, 256, "dev");
    const auto test = synthetic_manifest(8, 62, 256, 256, "test");
    ScriptedMetaProposer meta;

    const auto pa = temp_file("ddl_pred_a.jsonl"), pb = temp_file("ddl_pred_b.jsonl");
    for (const auto& path : {pa, pb}) {
        MockBackend backend(cfg.noise, cfg.seed);
        const auto artifacts = run_ddl(cfg, dev, test, backend, meta);
        write_predictions_jsonl(artifacts.predictions, path.string());
    }
    CHECK(slurp(pa) == slurp(pb));
    CHECK_FALSE(slurp(pa).empty());

    // a different seed must actually change the predictions
    auto cfg2 = cfg;
    cfg2.seed = 78;
    MockBackend backend(cfg2.noise, cfg2.seed);
    const auto other = run_ddl(cfg2, dev, test, backend, meta);
    const auto pc = temp_file("ddl_pred_c.jsonl");
    write_predictions_jsonl(other.predictions, pc.string());
    CHECK(slurp(pa) != slurp(pc));

    for (const auto& p : {pa, pb, pc}) fs::remove(p);
}

TEST_CASE("predictions round trip through jsonl") {
    auto cfg = mock_config(31);
    cfg.noise.jitter_px = 2.0;
    const auto test = synthetic_manifest(4, 63, 256, 256, "t");
    MockBackend backend(cfg.noise, cfg.seed);
    ScriptedMetaProposer meta;
    const auto artifacts = run_ddl(cfg, synthetic_manifest(2, 64, 256, 256, "d"), test, backend, meta);

    const auto path = temp_file("ddl_pred_rt.jsonl");
    write_predictions_jsonl(artifacts.predictions, path.string());
    const auto loaded = load_predictions_jsonl(path.string());
    REQUIRE(loaded.size() == artifacts.predictions.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].image_id == artifacts.predictions[i].image_id);
        REQUIRE(loaded[i].detections.size() == artifacts.predictions[i].detections.size());
        for (std::size_t j = 0; j < loaded[i].detections.size(); ++j)
            CHECK(loaded[i].detections[j].sigma.value() ==
                  doctest::Approx(artifacts.predictions[i].detections[j].sigma.value()));
    }
    fs::remove(path);
}

TEST_CASE("request budget and dev/test isolation") {
    auto cfg = mock_config(41);
    cfg.max_generations = 2;
    const auto dev = synthetic_manifest(3, 71, 256, 256, "dev");
    const auto test = synthetic_manifest(5, 72, 256, 256, "test");
    MockBackend inner(cfg.noise, cfg.seed);
    CaptureBackend capture(inner);
    ScriptedMetaProposer meta;
    run_ddl(cfg, dev, test, capture, meta);

    int eval_calls = 0;
    std::set<std::string> dev_scored_ids;
    for (const auto& r : capture.records()) {
        if (r.purpose == RequestPurpose::Evaluation) {
            ++eval_calls;
            CHECK(r.image_id.rfind("test", 0) == 0);
        } else {
            dev_scored_ids.insert(r.image_id);
        }
    }
    // visual mode: exactly n * (M+1) evaluation calls
    CHECK(eval_calls == 5 * 8);
    for (const auto& id : dev_scored_ids) CHECK(id.rfind("dev", 0) == 0);
    CHECK_FALSE(dev_scored_ids.empty());
}

TEST_CASE("failed images are excluded but accounted") {
    // backend that refuses the reference call for one image id
    class Failing : public GroundingBackend {
    public:
        Failing(MockNoise noise, std::uint64_t seed) : inner_(noise, seed) {}
        DetectionSet ground(const GroundRequest& req) override {
            if (req.entry->image_id == "test-2" && req.view_index == 0)
                throw TransportError("synthetic outage");
            return inner_.ground(req);
        }

    private:
        MockBackend inner_;
    };

    const auto cfg = mock_config(43);
    const auto test = synthetic_manifest(6, 73, 256, 256, "test");
    Failing backend(cfg.noise, cfg.seed);
    ScriptedMetaProposer meta;
    const auto artifacts = run_ddl(cfg, synthetic_manifest(2, 74, 256, 256, "dev"), test, backend, meta);

    REQUIRE(artifacts.failures.size() == 1);
    CHECK(artifacts.failures[0].image_id == "test-2");
    CHECK(artifacts.failures[0].error.find("outage") != std::string::npos);
    CHECK(artifacts.predictions.size() == 5);
    CHECK(artifacts.report.at("evaluated").get<int>() +
              artifacts.report.at("failed").get<int>() ==
          6);
}

TEST_CASE("rhc beats the simple average under jitter") {
    // Table-3 direction: moderate jitter + hallucinations, 10 seeds
    double rhc_total = 0, sa_total = 0;
    for (int s = 0; s < 10; ++s) {
        auto cfg = mock_config(1000 + s);
        cfg.noise.jitter_px = 4.0;
        cfg.noise.hallucination_prob = 0.2;
        const auto test = synthetic_manifest(12, 2000 + s, 256, 256, "t");
        ScriptedMetaProposer meta;

        MockBackend b1(cfg.noise, cfg.seed);
        cfg.strategy = Strategy::RHC;
        rhc_total += run_ddl(cfg, synthetic_manifest(2, 3000 + s, 256, 256, "d"), test, b1, meta)
                         .report.at("map").at("0.75")
                         .get<double>();

        MockBackend b2(cfg.noise, cfg.seed);
        cfg.strategy = Strategy::SA;
        sa_total += run_ddl(cfg, synthetic_manifest(2, 3000 + s, 256, 256, "d"), test, b2, meta)
                        .report.at("map").at("0.75")
                        .get<double>();
    }
    CHECK(rhc_total >= sa_total);
}

TEST_CASE("uncertainty modes: visual consensus is tighter than linguistic") {
    // Spatially consistent perception error: V-PUP sees the same displaced box
    // in every view; linguistic sampling re-draws the jitter per call.
    int visual_wins = 0;
    const int seeds = 100;
    for (int s = 0; s < seeds; ++s) {
        auto cfg = mock_config(5000 + s);
        cfg.noise.jitter_px = 5.0;
        cfg.noise.consistent_jitter = true;
        const auto test = synthetic_manifest(3, 6000 + s, 256, 256, "t");
        MockBackend backend(cfg.noise, cfg.seed);
        const auto [visual, linguistic] =
            run_uncertainty_mode(cfg, test, backend, cfg.resolved_vanilla());
        const double v = visual.at("calibration").at("mean_sigma").get<double>();
        const double l = linguistic.at("calibration").at("mean_sigma").get<double>();
        if (v >= l) ++visual_wins;
    }
    CHECK(visual_wins * 2 > seeds);  // visual wins on average
}

TEST_CASE("linguistic requests carry temperature one and skip transforms") {
    auto cfg = mock_config(47);
    cfg.mode = UncertaintyMode::Linguistic;
    const auto test = synthetic_manifest(2, 81, 256, 256, "t");
    MockBackend inner(cfg.noise, cfg.seed);
    CaptureBackend capture(inner);
    run_uncertainty_mode(cfg, test, capture, cfg.resolved_vanilla());

    int linguistic_calls = 0;
    for (const auto& r : capture.records())
        if (r.temperature == 1.0) ++linguistic_calls;
    // linguistic pass: per image 1 reference (T=0) + M sampled calls (T=1)
    CHECK(linguistic_calls == 2 * 7);
    // both passes issue M+1 calls per image
    CHECK(capture.records().size() == 2u * 2 * 8);
}

TEST_CASE("config hash tracks semantic changes") {
    const auto a = mock_config(1);
    auto b = a;
    CHECK(config_hash(a) == config_hash(b));
    b.tau = 0.2;
    CHECK(config_hash(a) != config_hash(b));
    auto c = a;
    c.strategy = Strategy::DBSCAN;
    CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("artifacts land in the output directory") {
    auto cfg = mock_config(53);
    cfg.out_dir = (fs::temp_directory_path() / "ddl_artifacts_test").string();
    fs::remove_all(cfg.out_dir);
    const auto dev = synthetic_manifest(2, 91, 256, 256, "dev");
    const auto test = synthetic_manifest(3, 92, 256, 256, "test");
    MockBackend backend(cfg.noise, cfg.seed);
    ScriptedMetaProposer meta;
    const auto artifacts = run_ddl(cfg, dev, test, backend, meta);

    for (const char* name :
         {"config.json", "dape_history.jsonl", "predictions.jsonl", "report.json", "failures.jsonl"})
        CHECK(fs::exists(fs::path(cfg.out_dir) / name));

    const auto report = nlohmann::json::parse(slurp(fs::path(cfg.out_dir) / "report.json"));
    CHECK(report.at("config_hash").get<std::string>() == artifacts.config_hash);
    CHECK(report.at("seed").get<std::uint64_t>() == 53);
    fs::remove_all(cfg.out_dir);
}
