// longtail-lab: command-line front end for the longtail shared library.
// Subcommands: gen-data, train, eval, compare, trace.
//
// Exit codes: 0 success, 2 config error, 3 divergence, 4 missing artifact,
// 1 anything else.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "longtail/longtail.h"

namespace {

using nlohmann::json;

// Desk-scale reference experiment; used when --config is not given.
const char* kDefaultConfig = R"json({
  "dataset": {
    "num_classes": 20,
    "n_max": 500,
    "n_min": 5,
    "feature_dim": 16,
    "intra_class_sigma": 0.55,
    "confuser_pairs": [[0, 1, 0.35], [2, 3, 0.35]],
    "test_per_class": 50,
    "seed": 20240501
  },
  "model": {"hidden_dim": 0, "seed": 7000},
  "train": {
    "epochs": 40,
    "batch_size": 64,
    "lr": 0.05,
    "momentum": 0.9,
    "weight_decay": 0.0,
    "seed": 1,
    "loss": {"kind": "ala", "scale": 30.0},
    "lr_decay": [{"epoch": 30, "factor": 0.1}]
  },
  "losses_to_compare": [
    {"kind": "ce"}, {"kind": "ldam"}, {"kind": "df"}, {"kind": "qf"},
    {"kind": "df-ldam"}, {"kind": "ala"}
  ],
  "repeats": 5,
  "partition": {"many_threshold": 100, "few_threshold": 20}
})json";

int exit_code_of(lt_status st) {
    switch (st) {
        case LT_OK: return 0;
        case LT_ERR_INVALID_ARG:
        case LT_ERR_INVALID_SPEC:
        case LT_ERR_NUMERIC: return 2;
        case LT_ERR_DIVERGENCE: return 3;
        case LT_ERR_MISSING_ARTIFACT: return 4;
        default: return 1;
    }
}

int fail(lt_status st) {
    std::cerr << "error: " << lt_last_error() << "\n";
    return exit_code_of(st);
}

json load_config(const std::string& config_path) {
    if (config_path.empty()) return json::parse(kDefaultConfig);
    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "error: cannot open config " << config_path << "\n";
        std::exit(2);
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        std::cerr << "error: malformed config " << config_path << ": " << e.what() << "\n";
        std::exit(2);
    }
}

// --set a.b.c=value, value parsed as JSON when possible
void apply_override(json& cfg, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
        std::cerr << "error: --set expects key=value, got: " << kv << "\n";
        std::exit(2);
    }
    const std::string path = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;  // plain string
    }
    json* node = &cfg;
    std::size_t start = 0;
    for (;;) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

struct CommonFlags {
    std::string config_path;
    std::string out_dir = "out";
    std::vector<std::string> overrides;
    std::string loss;
    double scale = 0.0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    long repeats = 0;
};

json build_config(const CommonFlags& f, bool seed_targets_dataset) {
    json cfg = load_config(f.config_path);
    if (f.seed_set) {
        if (seed_targets_dataset)
            cfg["dataset"]["seed"] = f.seed;
        else
            cfg["train"]["seed"] = f.seed;
    }
    if (!f.loss.empty()) cfg["train"]["loss"]["kind"] = f.loss;
    if (f.scale > 0.0) cfg["train"]["loss"]["scale"] = f.scale;
    if (f.repeats > 0) cfg["repeats"] = f.repeats;
    for (const auto& kv : f.overrides) apply_override(cfg, kv);
    return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& f, bool with_loss = true) {
    cmd->add_option("--config", f.config_path, "experiment config JSON (default: built-in reference)");
    cmd->add_option("--out", f.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--set", f.overrides, "config override key.path=value (repeatable)");
    cmd->add_option("--seed", f.seed, "seed override")->each([&](const std::string&) { f.seed_set = true; });
    if (with_loss) {
        cmd->add_option("--loss", f.loss, "loss kind: ce|qf|df|ldam|df-ldam|ala|focal");
        cmd->add_option("--scale", f.scale, "softmax scale s");
        cmd->add_option("--repeats", f.repeats, "number of repeated runs (seeds s, s+1, ...)");
    }
}

int run_gen_data(const CommonFlags& f) {
    const json cfg = build_config(f, /*seed_targets_dataset=*/true);
    char* summary = nullptr;
    const lt_status st = lt_cmd_gen_data(cfg.dump().c_str(), f.out_dir.c_str(), &summary);
    if (st != LT_OK) return fail(st);
    const json s = json::parse(summary);
    lt_string_free(summary);
    const auto& counts = s["counts"];
    std::cout << "dataset written to " << s["dir"].get<std::string>() << "\n"
              << "  classes: " << s["num_classes"] << ", feature dim: " << s["feature_dim"] << "\n"
              << "  counts: " << counts.front() << " .. " << counts.back()
              << " (train rows: " << s["train_rows"] << ", test rows: " << s["test_rows"] << ")\n"
              << "  partition: many=" << s["partition_sizes"]["many"]
              << " medium=" << s["partition_sizes"]["medium"]
              << " few=" << s["partition_sizes"]["few"] << "\n"
              << "  dataset hash: " << s["dataset_hash"].get<std::string>() << "\n";
    return 0;
}

std::string pct(const json& v) {
    if (v.is_null()) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v.get<double>() * 100.0);
    return buf;
}

int run_train(const CommonFlags& f) {
    const json cfg = build_config(f, /*seed_targets_dataset=*/false);
    char* summary = nullptr;
    const lt_status st = lt_cmd_train(cfg.dump().c_str(), f.out_dir.c_str(), &summary);
    if (st != LT_OK) return fail(st);
    const json s = json::parse(summary);
    lt_string_free(summary);
    std::cout << "loss " << s["loss"].get<std::string>() << ", dataset "
              << s["dataset_hash"].get<std::string>() << "\n";
    for (const auto& r : s["runs"]) {
        const auto& acc = r["subset_accuracy"];
        std::cout << "  seed " << r["seed"] << " -> many " << pct(acc["many"]) << "  medium "
                  << pct(acc["medium"]) << "  few " << pct(acc["few"]) << "  all "
                  << pct(acc["all"]) << "   (" << r["dir"].get<std::string>() << ")\n";
    }
    return 0;
}

int run_eval(const std::string& checkpoint, const std::string& data_dir, const CommonFlags& f) {
    json loss;
    loss["kind"] = f.loss.empty() ? "ce" : f.loss;
    if (f.scale > 0.0) loss["scale"] = f.scale;
    char* metrics = nullptr;
    const lt_status st = lt_cmd_eval(checkpoint.c_str(), data_dir.c_str(), loss.dump().c_str(),
                                     f.out_dir.c_str(), &metrics);
    if (st != LT_OK) return fail(st);
    const json m = json::parse(metrics);
    lt_string_free(metrics);
    const auto& acc = m["subset_accuracy"];
    std::cout << "| Many | Medium | Few | All |\n|---|---|---|---|\n| " << pct(acc["many"])
              << " | " << pct(acc["medium"]) << " | " << pct(acc["few"]) << " | "
              << pct(acc["all"]) << " |\n";
    return 0;
}

int run_compare(const CommonFlags& f, bool table_only) {
    const json cfg = build_config(f, /*seed_targets_dataset=*/false);
    char* table = nullptr;
    const lt_status st =
        lt_cmd_compare(cfg.dump().c_str(), f.out_dir.c_str(), table_only ? 1 : 0, &table);
    if (st != LT_OK) return fail(st);
    std::cout << table;
    lt_string_free(table);
    std::cout << "(written to " << f.out_dir << "/compare.md and compare.json)\n";
    return 0;
}

int run_trace(const std::string& run_dir, const std::string& out_dir) {
    char* summary = nullptr;
    const lt_status st =
        lt_cmd_trace(run_dir.c_str(), out_dir.empty() ? nullptr : out_dir.c_str(), &summary);
    if (st != LT_OK) return fail(st);
    const json s = json::parse(summary);
    lt_string_free(summary);
    std::cout << "trace artifacts in " << s["out_dir"].get<std::string>() << ":\n";
    for (const auto& file : s["files"]) std::cout << "  " << file.get<std::string>() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string("longtail-lab ") + lt_version() +
                 " - adaptive logit adjustment losses on synthetic long-tailed data"};
    app.require_subcommand(1);

    CommonFlags gen_flags, train_flags, compare_flags, eval_flags;
    std::string checkpoint, data_dir, run_dir, trace_out;
    bool table_only = false;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic long-tailed dataset");
    add_common(gen, gen_flags, /*with_loss=*/false);

    auto* train = app.add_subcommand("train", "train one loss, with repeats");
    add_common(train, train_flags);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset directory");
    eval->add_option("--checkpoint", checkpoint, "checkpoint JSON path")->required();
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--loss", eval_flags.loss, "loss kind for the probability scale");
    eval->add_option("--scale", eval_flags.scale, "softmax scale s");
    eval->add_option("--out", eval_flags.out_dir, "output directory")->capture_default_str();

    auto* compare = app.add_subcommand("compare", "train and tabulate the loss ablation matrix");
    add_common(compare, compare_flags);
    compare->add_flag("--table-only", table_only, "assemble from existing runs, never train");

    auto* trace = app.add_subcommand("trace", "export trace curves and probability curves");
    trace->add_option("--run", run_dir, "run directory (with trace.csv and metrics.json)")
        ->required();
    trace->add_option("--out", trace_out, "output directory (default: the run directory)");

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) return run_gen_data(gen_flags);
    if (train->parsed()) return run_train(train_flags);
    if (eval->parsed()) return run_eval(checkpoint, data_dir, eval_flags);
    if (compare->parsed()) return run_compare(compare_flags, table_only);
    if (trace->parsed()) return run_trace(run_dir, trace_out);
    return 2;
}
