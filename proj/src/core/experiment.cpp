#include "core/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace longtail {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentConfig::validate() const {
    if (!dataset_spec && dataset_path.empty())
        throw InvalidSpecError("config needs a dataset recipe or a dataset path");
    if (dataset_spec) dataset_spec->validate();
    if (repeats < 1) throw InvalidSpecError("repeats must be >= 1");
    train.loss.validate();
    for (const auto& l : losses_to_compare) l.validate();
    if (thresholds.few > thresholds.many)
        throw InvalidSpecError("few_threshold must not exceed many_threshold");
}

ExperimentConfig experiment_config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidSpecError(std::string("malformed experiment config json: ") + e.what());
    }
    ExperimentConfig cfg;
    try {
        const auto& ds = j.at("dataset");
        if (ds.contains("path"))
            cfg.dataset_path = ds.at("path").get<std::string>();
        else
            cfg.dataset_spec = spec_from_json_text(ds.dump());
        if (j.contains("model")) {
            if (j["model"].contains("hidden_dim"))
                cfg.hidden_dim = j["model"]["hidden_dim"].get<std::size_t>();
            if (j["model"].contains("seed")) cfg.model_seed = j["model"]["seed"].get<std::uint64_t>();
        }
        if (j.contains("train")) cfg.train = train_config_from_json_text(j.at("train").dump());
        if (j.contains("losses_to_compare"))
            for (const auto& l : j.at("losses_to_compare"))
                cfg.losses_to_compare.push_back(loss_spec_from_json_text(l.dump()));
        if (j.contains("repeats")) cfg.repeats = j.at("repeats").get<std::size_t>();
        if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
        if (j.contains("partition")) {
            const auto& p = j.at("partition");
            if (p.contains("many_threshold"))
                cfg.thresholds.many = p.at("many_threshold").get<std::int64_t>();
            if (p.contains("few_threshold"))
                cfg.thresholds.few = p.at("few_threshold").get<std::int64_t>();
        }
    } catch (const json::exception& e) {
        throw InvalidSpecError(std::string("malformed experiment config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

namespace {

std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct ResolvedDataset {
    Dataset train;
    Dataset test;
    SubsetPartition partition;
    std::string hash;
    std::string dir;  // where it lives on disk, empty if memory-only
};

std::string sidecar_hash(const std::string& sidecar_path) {
    const json side = json::parse(read_text_file(sidecar_path));
    return side.value("dataset_hash", "");
}

void save_dataset_dir(const ResolvedDataset& rd, const LongTailSpec& spec, const std::string& dir) {
    save_dataset_csv(rd.train, dir + "/train.csv");
    write_text_file(dir + "/train.json", dataset_sidecar_json(rd.train, spec, rd.partition, "train"));
    save_dataset_csv(rd.test, dir + "/test.csv");
    write_text_file(dir + "/test.json", dataset_sidecar_json(rd.test, spec, rd.partition, "test"));
}

ResolvedDataset load_dataset_dir(const std::string& dir) {
    for (const char* f : {"train.csv", "train.json", "test.csv", "test.json"})
        if (!fs::exists(fs::path(dir) / f))
            throw MissingArtifactError("dataset artifact missing: " + (fs::path(dir) / f).string());
    ResolvedDataset rd;
    rd.train = load_dataset(dir + "/train.csv", dir + "/train.json");
    rd.test = load_dataset(dir + "/test.csv", dir + "/test.json");
    rd.partition = partition_from_sidecar(dir + "/train.json");
    rd.hash = sidecar_hash(dir + "/train.json");
    rd.dir = dir;
    return rd;
}

// Inline recipes are materialized under <out>/dataset once and reused while
// the stored hash still matches the recipe.
ResolvedDataset resolve_dataset(const ExperimentConfig& cfg) {
    if (!cfg.dataset_path.empty()) return load_dataset_dir(cfg.dataset_path);

    const std::string dir = cfg.output_dir + "/dataset";
    const std::string want_hash = dataset_hash_of_spec(*cfg.dataset_spec);
    if (fs::exists(fs::path(dir) / "train.json")) {
        if (sidecar_hash(dir + "/train.json") == want_hash) return load_dataset_dir(dir);
    }
    ResolvedDataset rd;
    auto pair = generate(*cfg.dataset_spec);
    rd.train = std::move(pair.first);
    rd.test = std::move(pair.second);
    rd.partition = partition_by_count(rd.train.counts, cfg.thresholds.many, cfg.thresholds.few);
    rd.hash = want_hash;
    rd.dir = dir;
    save_dataset_dir(rd, *cfg.dataset_spec, dir);
    return rd;
}

std::string run_id(const LossSpec& loss, std::uint64_t run_seed) {
    return loss_kind_to_string(loss.kind) + "-seed" + std::to_string(run_seed);
}

struct RunOutput {
    std::string dir;
    std::uint64_t seed = 0;
    std::string config_hash;
    MetricsReport metrics;
};

// Trains one repeat and writes checkpoint.json, trace.csv and metrics.json.
// A run directory whose metrics carry the same config hash is reused as-is.
RunOutput execute_run(const ExperimentConfig& cfg, const ResolvedDataset& ds, const LossSpec& loss,
                      std::size_t repeat_index, bool reuse_existing) {
    RunOutput out;
    out.seed = cfg.train.seed + repeat_index;
    const std::uint64_t model_seed = cfg.model_seed + repeat_index;
    out.config_hash = run_config_hash(cfg, loss, out.seed, model_seed, ds.hash);
    out.dir = cfg.output_dir + "/runs/" + run_id(loss, out.seed);

    const std::string metrics_path = out.dir + "/metrics.json";
    if (reuse_existing && fs::exists(metrics_path)) {
        const json m = json::parse(read_text_file(metrics_path));
        if (m.value("config_hash", "") == out.config_hash) {
            out.metrics = MetricsReport::from_json(read_text_file(metrics_path));
            return out;
        }
    }

    TrainConfig tc = cfg.train;
    tc.loss = loss;
    tc.seed = out.seed;

    ModelDims dims{ds.train.feature_dim(), ds.train.num_classes(), cfg.hidden_dim};
    auto model = CosineClassifier::init(dims, model_seed);
    const auto trace = train(ds.train, ds.partition, model, tc);
    const auto eval = evaluate(model, ds.test, loss);
    out.metrics = report(eval.predictions, eval.target_probability, ds.test.labels, ds.partition);

    json ck = json::parse(model.to_checkpoint_json());
    ck["config_hash"] = out.config_hash;
    ck["train_seed"] = out.seed;
    write_text_file(out.dir + "/checkpoint.json", ck.dump(2) + "\n");

    write_text_file(out.dir + "/trace.csv",
                    trace.to_csv("config_hash=" + out.config_hash + " seed=" + std::to_string(out.seed)));

    json extra;
    extra["loss"] = loss_kind_to_string(loss.kind);
    extra["seed"] = out.seed;
    extra["config_hash"] = out.config_hash;
    extra["dataset_hash"] = ds.hash;
    write_text_file(metrics_path, out.metrics.to_json(extra.dump()));
    return out;
}

// Runs the given repeat indices, at most repeat_parallelism() at a time.
std::vector<RunOutput> execute_repeats(const ExperimentConfig& cfg, const ResolvedDataset& ds,
                                       const LossSpec& loss, bool reuse_existing) {
    std::vector<RunOutput> outputs(cfg.repeats);
    const std::size_t workers = repeat_parallelism(cfg.repeats);
    if (workers <= 1) {
        for (std::size_t k = 0; k < cfg.repeats; ++k)
            outputs[k] = execute_run(cfg, ds, loss, k, reuse_existing);
        return outputs;
    }

    std::mutex mu;
    std::size_t next = 0;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            std::size_t k;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= cfg.repeats || first_error) return;
                k = next++;
            }
            try {
                auto r = execute_run(cfg, ds, loss, k, reuse_existing);
                std::lock_guard<std::mutex> lock(mu);
                outputs[k] = std::move(r);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return outputs;
}

struct Aggregate {
    std::optional<double> mean;
    std::optional<double> stddev;  // population
};

Aggregate aggregate_band(const std::vector<RunOutput>& runs, std::size_t band) {
    std::vector<double> vals;
    for (const auto& r : runs) {
        if (!r.metrics.subset_accuracy[band]) return {};  // undefined anywhere -> undefined
        vals.push_back(*r.metrics.subset_accuracy[band]);
    }
    Aggregate a;
    double sum = 0.0;
    for (double v : vals) sum += v;
    const double mean = sum / static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    a.mean = mean;
    a.stddev = std::sqrt(var / static_cast<double>(vals.size()));
    return a;
}

std::string pct_cell(const Aggregate& a) {
    if (!a.mean) return "-";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f ± %.1f", *a.mean * 100.0, *a.stddev * 100.0);
    return buf;
}

}  // namespace

std::string dataset_hash_of_spec(const LongTailSpec& spec) {
    // canonical form: nlohmann objects are key-sorted, dump() is stable
    const json j = json::parse(spec_to_json_text(spec));
    return hex64(fnv1a64(j.dump()));
}

std::string run_config_hash(const ExperimentConfig& cfg, const LossSpec& loss,
                            std::uint64_t run_seed, std::uint64_t run_model_seed,
                            const std::string& dataset_hash) {
    TrainConfig tc = cfg.train;
    tc.loss = loss;
    tc.seed = run_seed;
    json j;
    j["dataset_hash"] = dataset_hash;
    j["model"] = {{"hidden_dim", cfg.hidden_dim}, {"seed", run_model_seed}};
    j["train"] = json::parse(train_config_to_json_text(tc));
    j["partition"] = {{"many_threshold", cfg.thresholds.many}, {"few_threshold", cfg.thresholds.few}};
    return hex64(fnv1a64(j.dump()));
}

std::string cmd_gen_data(const ExperimentConfig& cfg) {
    cfg.validate();
    if (!cfg.dataset_spec)
        throw InvalidSpecError("gen-data needs an inline dataset recipe, not a path");
    const auto rd = resolve_dataset(cfg);

    json j;
    j["dir"] = rd.dir;
    j["dataset_hash"] = rd.hash;
    j["num_classes"] = rd.train.num_classes();
    j["feature_dim"] = rd.train.feature_dim();
    j["counts"] = rd.train.counts;
    j["train_rows"] = rd.train.num_samples();
    j["test_rows"] = rd.test.num_samples();
    j["partition_sizes"] = {{"many", rd.partition.many.size()},
                            {"medium", rd.partition.medium.size()},
                            {"few", rd.partition.few.size()}};
    return j.dump(2) + "\n";
}

std::string cmd_train(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto ds = resolve_dataset(cfg);
    const auto runs = execute_repeats(cfg, ds, cfg.train.loss, /*reuse_existing=*/false);

    json j;
    j["loss"] = loss_kind_to_string(cfg.train.loss.kind);
    j["dataset_hash"] = ds.hash;
    json arr = json::array();
    for (const auto& r : runs) {
        json e;
        e["dir"] = r.dir;
        e["seed"] = r.seed;
        e["config_hash"] = r.config_hash;
        for (std::size_t b = 0; b < 4; ++b)
            e["subset_accuracy"][kReportBandNames[b]] =
                r.metrics.subset_accuracy[b] ? json(*r.metrics.subset_accuracy[b]) : json(nullptr);
        arr.push_back(e);
    }
    j["runs"] = arr;
    return j.dump(2) + "\n";
}

std::string cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
                     const LossSpec& loss, const std::string& out_dir) {
    if (!fs::exists(checkpoint_path))
        throw MissingArtifactError("checkpoint not found: " + checkpoint_path);
    const auto model = CosineClassifier::from_checkpoint_json(read_text_file(checkpoint_path));
    const auto ds = load_dataset_dir(data_dir);
    const auto eval = evaluate(model, ds.test, loss);
    const auto rep = report(eval.predictions, eval.target_probability, ds.test.labels, ds.partition);

    json extra;
    extra["loss"] = loss_kind_to_string(loss.kind);
    extra["dataset_hash"] = ds.hash;
    extra["checkpoint"] = fs::path(checkpoint_path).filename().string();
    const std::string out = rep.to_json(extra.dump());
    if (!out_dir.empty()) {
        write_text_file(out_dir + "/metrics.json", out);
        write_text_file(out_dir + "/metrics.md",
                        rep.to_markdown_table(loss_kind_to_string(loss.kind)));
    }
    return out;
}

std::string cmd_compare(const ExperimentConfig& cfg, bool table_only) {
    cfg.validate();
    if (cfg.losses_to_compare.empty())
        throw InvalidSpecError("compare needs a non-empty losses_to_compare list");
    const auto ds = resolve_dataset(cfg);

    // collect or train the full matrix
    std::vector<std::pair<LossSpec, std::vector<RunOutput>>> matrix;
    std::vector<std::string> missing;
    for (const auto& loss : cfg.losses_to_compare) {
        if (table_only) {
            std::vector<RunOutput> runs;
            for (std::size_t k = 0; k < cfg.repeats; ++k) {
                const std::uint64_t seed = cfg.train.seed + k;
                const std::string dir = cfg.output_dir + "/runs/" + run_id(loss, seed);
                if (!fs::exists(dir + "/metrics.json")) {
                    missing.push_back(run_id(loss, seed));
                    continue;
                }
                RunOutput r;
                r.dir = dir;
                r.seed = seed;
                r.metrics = MetricsReport::from_json(read_text_file(dir + "/metrics.json"));
                runs.push_back(std::move(r));
            }
            matrix.emplace_back(loss, std::move(runs));
        } else {
            matrix.emplace_back(loss, execute_repeats(cfg, ds, loss, /*reuse_existing=*/true));
        }
    }
    if (!missing.empty()) {
        std::string ids;
        for (const auto& m : missing) ids += (ids.empty() ? "" : ", ") + m;
        throw MissingArtifactError("missing runs: " + ids);
    }

    std::ostringstream md;
    md << "| Method | Many | Medium | Few | All |\n|---|---|---|---|---|\n";
    json rows = json::array();
    for (const auto& [loss, runs] : matrix) {
        json row;
        row["loss"] = loss_kind_to_string(loss.kind);
        json seeds = json::array();
        for (const auto& r : runs) seeds.push_back(r.seed);
        row["seeds"] = seeds;
        md << "| " << loss_kind_to_string(loss.kind);
        for (std::size_t b = 0; b < 4; ++b) {
            const auto agg = aggregate_band(runs, b);
            md << " | " << pct_cell(agg);
            row[kReportBandNames[b]] = agg.mean
                                           ? json{{"mean", *agg.mean}, {"std", *agg.stddev}}
                                           : json(nullptr);
        }
        md << " |\n";
        rows.push_back(row);
    }

    json j;
    j["format"] = "longtail.compare/1";
    j["dataset_hash"] = ds.hash;
    j["repeats"] = cfg.repeats;
    j["rows"] = rows;
    write_text_file(cfg.output_dir + "/compare.json", j.dump(2) + "\n");
    write_text_file(cfg.output_dir + "/compare.md", md.str());
    return md.str();
}

namespace {

// Minimal self-contained SVG line chart.
std::string svg_chart(const std::string& title, const std::vector<std::string>& names,
                      const std::vector<std::vector<double>>& series) {
    const int w = 640, h = 400, ml = 60, mr = 20, mt = 40, mb = 40;
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};

    double lo = 0.0, hi = 1e-12;
    std::size_t max_len = 1;
    for (const auto& s : series)
        for (double v : s)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    for (const auto& s : series) max_len = std::max(max_len, s.size());
    if (hi <= lo) hi = lo + 1.0;

    auto sx = [&](double i) {
        return ml + (w - ml - mr) * (max_len > 1 ? i / static_cast<double>(max_len - 1) : 0.5);
    };
    auto sy = [&](double v) { return h - mb - (h - mt - mb) * (v - lo) / (hi - lo); };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"14\">"
        << title << "</text>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
        << h - mb << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
        << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = lo + (hi - lo) * t / 4.0;
        out << "<text x=\"" << ml - 6 << "\" y=\"" << sy(v) + 4
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
            << format_double(std::round(v * 1000.0) / 1000.0) << "</text>\n";
    }
    for (std::size_t s = 0; s < series.size(); ++s) {
        out << "<polyline fill=\"none\" stroke=\"" << colors[s % 5] << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < series[s].size(); ++i) {
            if (!std::isfinite(series[s][i])) continue;
            out << sx(static_cast<double>(i)) << ',' << sy(series[s][i]) << ' ';
        }
        out << "\"/>\n";
        out << "<text x=\"" << w - mr - 100 << "\" y=\"" << mt + 14 * (s + 1)
            << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << colors[s % 5] << "\">"
            << names[s] << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace

std::string cmd_trace(const std::string& run_dir, const std::string& out_dir) {
    const std::string trace_path = run_dir + "/trace.csv";
    const std::string metrics_path = run_dir + "/metrics.json";
    if (!fs::exists(trace_path)) throw MissingArtifactError("trace not found: " + trace_path);
    if (!fs::exists(metrics_path)) throw MissingArtifactError("metrics not found: " + metrics_path);

    const auto trace = TraceLog::from_csv(read_text_file(trace_path));
    const auto metrics = MetricsReport::from_json(read_text_file(metrics_path));
    const std::string dst = out_dir.empty() ? run_dir : out_dir;

    auto column = [&](double TraceRow::*field) {
        std::vector<double> v;
        for (const auto& r : trace.rows) v.push_back(r.*field);
        return v;
    };

    write_text_file(dst + "/trace_adjust.svg",
                    svg_chart("mean adjusting term per subset", {"many", "medium", "few"},
                              {column(&TraceRow::adj_many), column(&TraceRow::adj_medium),
                               column(&TraceRow::adj_few)}));
    write_text_file(dst + "/trace_df.svg",
                    svg_chart("mean difficulty factor per subset", {"many", "medium", "few", "all"},
                              {column(&TraceRow::df_many), column(&TraceRow::df_medium),
                               column(&TraceRow::df_few), column(&TraceRow::df_all)}));

    std::vector<std::string> names;
    std::vector<std::vector<double>> curves;
    for (std::size_t b = 0; b < 4; ++b) {
        std::ostringstream csv;
        csv << "rank,probability\n";
        for (std::size_t i = 0; i < metrics.probability_curve[b].size(); ++i)
            csv << i << ',' << format_double(metrics.probability_curve[b][i]) << '\n';
        write_text_file(dst + "/prob_curve_" + kReportBandNames[b] + ".csv", csv.str());
        names.push_back(kReportBandNames[b]);
        curves.push_back(metrics.probability_curve[b]);
    }
    write_text_file(dst + "/prob_curves.svg",
                    svg_chart("target probability, sorted descending", names, curves));

    json j;
    j["run_dir"] = run_dir;
    j["out_dir"] = dst;
    j["files"] = {"trace_adjust.svg", "trace_df.svg",     "prob_curves.svg",
                  "prob_curve_many.csv", "prob_curve_medium.csv", "prob_curve_few.csv",
                  "prob_curve_all.csv"};
    return j.dump(2) + "\n";
}

std::size_t repeat_parallelism(std::size_t runs) {
    std::size_t cap = std::thread::hardware_concurrency();
    if (cap == 0) cap = 1;
    if (const char* env = std::getenv("LONGTAIL_LAB_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) cap = static_cast<std::size_t>(v);
    }
    return std::min(cap, std::max<std::size_t>(1, runs));
}

}  // namespace longtail
