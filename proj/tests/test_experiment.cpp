#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "core/common.hpp"
#include "core/experiment.hpp"

using namespace longtail;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// tiny but fully banded: counts 24, 13, 7, 4 with thresholds 15/8
const char* kTinyConfig = R"json({
  "dataset": {
    "num_classes": 4,
    "n_max": 24,
    "n_min": 4,
    "feature_dim": 6,
    "intra_class_sigma": 0.3,
    "confuser_pairs": [],
    "test_per_class": 6,
    "seed": 501
  },
  "model": {"hidden_dim": 0, "seed": 900},
  "train": {
    "epochs": 4,
    "batch_size": 12,
    "lr": 0.05,
    "momentum": 0.9,
    "weight_decay": 0.0,
    "seed": 10,
    "loss": {"kind": "ala", "scale": 30.0}
  },
  "losses_to_compare": [{"kind": "ce"}, {"kind": "ala"}],
  "repeats": 2,
  "partition": {"many_threshold": 15, "few_threshold": 8}
})json";

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ExperimentConfig tiny_config(const std::string& out_dir) {
    auto cfg = experiment_config_from_json_text(kTinyConfig);
    cfg.output_dir = out_dir;
    return cfg;
}

}  // namespace

TEST_CASE("gen-data writes a loadable, reproducible dataset") {
    TempDir tmp("longtail_exp_gen");
    const auto cfg = tiny_config(tmp.path.string());
    const auto summary = json::parse(cmd_gen_data(cfg));

    const std::string dir = summary["dir"];
    for (const char* f : {"train.csv", "train.json", "test.csv", "test.json"})
        CHECK(fs::exists(fs::path(dir) / f));
    CHECK(summary["num_classes"] == 4);
    CHECK(summary["counts"] == json::array({24, 13, 7, 4}));
    CHECK(summary["partition_sizes"]["many"] == 1);
    CHECK(summary["partition_sizes"]["medium"] == 1);
    CHECK(summary["partition_sizes"]["few"] == 2);

    // round-trip: loading equals regenerating
    const auto loaded = load_dataset(dir + "/train.csv", dir + "/train.json");
    const auto [regen_train, regen_test] = generate(*cfg.dataset_spec);
    CHECK(loaded.features.data() == regen_train.features.data());

    // regeneration into the same directory is byte-stable
    const auto bytes_before = read_text_file(dir + "/train.csv");
    cmd_gen_data(cfg);
    CHECK(read_text_file(dir + "/train.csv") == bytes_before);
}

TEST_CASE("cmd_train writes one run per repeat with derived seeds") {
    TempDir tmp("longtail_exp_train");
    const auto cfg = tiny_config(tmp.path.string());
    const auto summary = json::parse(cmd_train(cfg));

    REQUIRE(summary["runs"].size() == 2);
    CHECK(summary["runs"][0]["seed"] == 10);
    CHECK(summary["runs"][1]["seed"] == 11);
    for (const auto& run : summary["runs"]) {
        const std::string dir = run["dir"];
        for (const char* f : {"checkpoint.json", "trace.csv", "metrics.json"})
            CHECK(fs::exists(fs::path(dir) / f));
        const auto metrics = json::parse(read_text_file(dir + "/metrics.json"));
        CHECK(metrics["config_hash"] == run["config_hash"]);
        CHECK(metrics["dataset_hash"] == summary["dataset_hash"]);
    }
    CHECK(summary["runs"][0]["config_hash"] != summary["runs"][1]["config_hash"]);
}

TEST_CASE("cmd_train is idempotent byte for byte") {
    TempDir tmp("longtail_exp_idem");
    const auto cfg = tiny_config(tmp.path.string());
    cmd_train(cfg);
    const std::string run_dir = tmp.path.string() + "/runs/ala-seed10";
    const auto trace_before = read_text_file(run_dir + "/trace.csv");
    const auto ckpt_before = read_text_file(run_dir + "/checkpoint.json");
    const auto metrics_before = read_text_file(run_dir + "/metrics.json");

    cmd_train(cfg);
    CHECK(read_text_file(run_dir + "/trace.csv") == trace_before);
    CHECK(read_text_file(run_dir + "/checkpoint.json") == ckpt_before);
    CHECK(read_text_file(run_dir + "/metrics.json") == metrics_before);
}

TEST_CASE("two losses on the same data record the same dataset hash") {
    TempDir tmp("longtail_exp_twoloss");
    auto cfg = tiny_config(tmp.path.string());
    cfg.train.loss.kind = LossKind::ce;
    const auto ce_summary = json::parse(cmd_train(cfg));
    cfg.train.loss.kind = LossKind::ala;
    const auto ala_summary = json::parse(cmd_train(cfg));

    CHECK(fs::exists(tmp.path / "runs/ce-seed10/metrics.json"));
    CHECK(fs::exists(tmp.path / "runs/ala-seed10/metrics.json"));
    CHECK(ce_summary["dataset_hash"] == ala_summary["dataset_hash"]);
    CHECK(ce_summary["runs"][0]["config_hash"] != ala_summary["runs"][0]["config_hash"]);
}

TEST_CASE("compare assembles rows in config order with matching means") {
    TempDir tmp("longtail_exp_compare");
    const auto cfg = tiny_config(tmp.path.string());
    const auto table = cmd_compare(cfg, /*table_only=*/false);

    CHECK(table.find("| Method |") == 0);
    const auto ce_pos = table.find("| ce |");
    const auto ala_pos = table.find("| ala |");
    REQUIRE(ce_pos != std::string::npos);
    REQUIRE(ala_pos != std::string::npos);
    CHECK(ce_pos < ala_pos);

    // means equal the hand-average of the per-run metrics files
    const auto compare = json::parse(read_text_file(tmp.path.string() + "/compare.json"));
    for (const auto& row : compare["rows"]) {
        const std::string kind = row["loss"];
        double sum = 0.0;
        for (std::uint64_t seed : {10, 11}) {
            const auto m = json::parse(read_text_file(
                tmp.path.string() + "/runs/" + kind + "-seed" + std::to_string(seed) + "/metrics.json"));
            sum += m["subset_accuracy"]["all"].get<double>();
        }
        CHECK(row["all"]["mean"].get<double>() == doctest::Approx(sum / 2.0).epsilon(1e-12));
    }

    // single-loss, single-repeat: std pinned to zero
    auto solo = cfg;
    solo.repeats = 1;
    solo.losses_to_compare = {solo.train.loss};
    cmd_compare(solo, false);
    const auto solo_json = json::parse(read_text_file(tmp.path.string() + "/compare.json"));
    REQUIRE(solo_json["rows"].size() == 1);
    CHECK(solo_json["rows"][0]["all"]["std"].get<double>() == 0.0);
}

TEST_CASE("table-only compare lists missing runs") {
    TempDir tmp("longtail_exp_missing");
    const auto cfg = tiny_config(tmp.path.string());
    try {
        cmd_compare(cfg, /*table_only=*/true);
        FAIL("expected MissingArtifactError");
    } catch (const MissingArtifactError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("ce-seed10") != std::string::npos);
        CHECK(msg.find("ala-seed11") != std::string::npos);
    }
}

TEST_CASE("train on a dataset path requires the artifacts") {
    TempDir tmp("longtail_exp_nodata");
    auto cfg = tiny_config(tmp.path.string());
    cfg.dataset_spec.reset();
    cfg.dataset_path = tmp.path.string() + "/nowhere";
    CHECK_THROWS_AS(cmd_train(cfg), MissingArtifactError);
}

TEST_CASE("cmd_trace exports curves from a finished run") {
    TempDir tmp("longtail_exp_trace");
    const auto cfg = tiny_config(tmp.path.string());
    cmd_train(cfg);
    const std::string run_dir = tmp.path.string() + "/runs/ala-seed10";
    const auto summary = json::parse(cmd_trace(run_dir, ""));
    for (const auto& f : summary["files"]) {
        CHECK(fs::exists(fs::path(run_dir) / f.get<std::string>()));
    }
    const auto svg = read_text_file(run_dir + "/trace_adjust.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);

    CHECK_THROWS_AS(cmd_trace(tmp.path.string() + "/runs/none", ""), MissingArtifactError);
}

TEST_CASE("config hash tracks semantic identity only") {
    const auto cfg_a = tiny_config("/tmp/out_a");
    const auto cfg_b = tiny_config("/tmp/out_b");
    const auto hash_of = [](const ExperimentConfig& c) {
        return run_config_hash(c, c.train.loss, c.train.seed, c.model_seed,
                               dataset_hash_of_spec(*c.dataset_spec));
    };
    CHECK(hash_of(cfg_a) == hash_of(cfg_b));  // output dir is not identity

    auto cfg_c = tiny_config("/tmp/out_a");
    cfg_c.train.lr = 0.123;
    CHECK(hash_of(cfg_a) != hash_of(cfg_c));

    auto cfg_d = tiny_config("/tmp/out_a");
    cfg_d.dataset_spec->seed = 999;
    CHECK(hash_of(cfg_a) != hash_of(cfg_d));
}

TEST_CASE("experiment config validation") {
    CHECK_THROWS_AS(experiment_config_from_json_text("{}"), InvalidSpecError);
    CHECK_THROWS_AS(experiment_config_from_json_text("not json"), InvalidSpecError);

    auto cfg = tiny_config("/tmp/out");
    cfg.repeats = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidSpecError);

    auto cfg2 = tiny_config("/tmp/out");
    cfg2.losses_to_compare.clear();
    CHECK_THROWS_AS(cmd_compare(cfg2, false), InvalidSpecError);
}

TEST_CASE("repeat parallelism honors the env cap") {
    const char* saved = std::getenv("LONGTAIL_LAB_THREADS");
    setenv("LONGTAIL_LAB_THREADS", "2", 1);
    CHECK(repeat_parallelism(8) == 2);
    CHECK(repeat_parallelism(1) == 1);
    setenv("LONGTAIL_LAB_THREADS", "1", 1);
    CHECK(repeat_parallelism(8) == 1);
    if (saved)
        setenv("LONGTAIL_LAB_THREADS", saved, 1);
    else
        unsetenv("LONGTAIL_LAB_THREADS");
}
