#include "longtail/longtail.h"

#include <cstring>
#include <string>

#include <json.hpp>

#include "core/data.hpp"
#include "core/experiment.hpp"
#include "core/losses.hpp"
#include "core/metrics.hpp"
#include "core/model.hpp"
#include "core/train.hpp"

struct lt_dataset {
    longtail::Dataset ds;
    longtail::LongTailSpec spec;
    longtail::SubsetPartition partition;
    std::string kind;
};

struct lt_model {
    longtail::CosineClassifier model;
};

namespace {

thread_local std::string g_last_error;

lt_status status_of(const longtail::Error& e) {
    using longtail::ErrorCode;
    switch (e.code()) {
        case ErrorCode::invalid_arg: return LT_ERR_INVALID_ARG;
        case ErrorCode::invalid_spec: return LT_ERR_INVALID_SPEC;
        case ErrorCode::numeric_input: return LT_ERR_NUMERIC;
        case ErrorCode::degenerate_norm: return LT_ERR_DEGENERATE_NORM;
        case ErrorCode::divergence: return LT_ERR_DIVERGENCE;
        case ErrorCode::io: return LT_ERR_IO;
        case ErrorCode::missing_artifact: return LT_ERR_MISSING_ARTIFACT;
    }
    return LT_ERR_INTERNAL;
}

template <typename Fn>
lt_status guarded(Fn&& fn) {
    try {
        fn();
        return LT_OK;
    } catch (const longtail::Error& e) {
        g_last_error = e.what();
        return status_of(e);
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return LT_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return LT_ERR_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void require(bool cond, const char* msg) {
    if (!cond) throw longtail::InvalidArgError(msg);
}

longtail::ExperimentConfig parse_config(const char* config_json, const char* out_dir) {
    require(config_json != nullptr, "config_json is NULL");
    auto cfg = longtail::experiment_config_from_json_text(config_json);
    if (out_dir != nullptr && out_dir[0] != '\0') cfg.output_dir = out_dir;
    return cfg;
}

}  // namespace

extern "C" {

const char* lt_version(void) { return "0.1.0"; }

const char* lt_last_error(void) { return g_last_error.c_str(); }

void lt_string_free(char* s) { std::free(s); }

/* ---- datasets -------------------------------------------------------- */

lt_status lt_dataset_generate(const char* spec_json, int64_t many_threshold,
                              int64_t few_threshold, lt_dataset** train_out,
                              lt_dataset** test_out) {
    return guarded([&] {
        require(spec_json && train_out && test_out, "NULL argument");
        const auto spec = longtail::spec_from_json_text(spec_json);
        auto pair = longtail::generate(spec);
        const auto partition = longtail::partition_by_count(
            pair.first.counts, many_threshold > 0 ? many_threshold : 100,
            few_threshold > 0 ? few_threshold : 20);
        *train_out = new lt_dataset{std::move(pair.first), spec, partition, "train"};
        *test_out = new lt_dataset{std::move(pair.second), spec, partition, "test"};
    });
}

lt_status lt_dataset_load(const char* csv_path, const char* sidecar_path, lt_dataset** out) {
    return guarded([&] {
        require(csv_path && sidecar_path && out, "NULL argument");
        auto ds = longtail::load_dataset(csv_path, sidecar_path);
        auto partition = longtail::partition_from_sidecar(sidecar_path);
        auto spec = longtail::spec_from_json_text(
            nlohmann::json::parse(longtail::read_text_file(sidecar_path)).at("spec").dump());
        *out = new lt_dataset{std::move(ds), std::move(spec), std::move(partition), "loaded"};
    });
}

lt_status lt_dataset_save(const lt_dataset* ds, const char* csv_path, const char* sidecar_path) {
    return guarded([&] {
        require(ds && csv_path && sidecar_path, "NULL argument");
        longtail::save_dataset_csv(ds->ds, csv_path);
        longtail::write_text_file(
            sidecar_path, longtail::dataset_sidecar_json(ds->ds, ds->spec, ds->partition, ds->kind));
    });
}

lt_status lt_dataset_num_samples(const lt_dataset* ds, size_t* out) {
    return guarded([&] {
        require(ds && out, "NULL argument");
        *out = ds->ds.num_samples();
    });
}

lt_status lt_dataset_num_classes(const lt_dataset* ds, size_t* out) {
    return guarded([&] {
        require(ds && out, "NULL argument");
        *out = ds->ds.num_classes();
    });
}

lt_status lt_dataset_feature_dim(const lt_dataset* ds, size_t* out) {
    return guarded([&] {
        require(ds && out, "NULL argument");
        *out = ds->ds.feature_dim();
    });
}

lt_status lt_dataset_counts(const lt_dataset* ds, int64_t* counts_out) {
    return guarded([&] {
        require(ds && counts_out, "NULL argument");
        for (std::size_t j = 0; j < ds->ds.counts.size(); ++j) counts_out[j] = ds->ds.counts[j];
    });
}

lt_status lt_dataset_info(const lt_dataset* ds, char** json_out) {
    return guarded([&] {
        require(ds && json_out, "NULL argument");
        nlohmann::json j;
        j["kind"] = ds->kind;
        j["num_samples"] = ds->ds.num_samples();
        j["num_classes"] = ds->ds.num_classes();
        j["feature_dim"] = ds->ds.feature_dim();
        j["counts"] = ds->ds.counts;
        j["partition"] = {{"many", ds->partition.many},
                          {"medium", ds->partition.medium},
                          {"few", ds->partition.few}};
        j["dataset_hash"] = longtail::dataset_hash_of_spec(ds->spec);
        *json_out = dup_string(j.dump(2) + "\n");
    });
}

void lt_dataset_free(lt_dataset* ds) { delete ds; }

/* ---- loss kernels ----------------------------------------------------- */

lt_status lt_quantity_factor(const int64_t* counts, size_t num_classes, double* qf_out) {
    return guarded([&] {
        require(counts && qf_out && num_classes > 0, "NULL or empty counts");
        const auto qf = longtail::quantity_factor({counts, num_classes});
        std::memcpy(qf_out, qf.data(), num_classes * sizeof(double));
    });
}

lt_status lt_difficulty_factor(double cos_target, double* df_out) {
    return guarded([&] {
        require(df_out != nullptr, "NULL output");
        *df_out = longtail::difficulty_factor(cos_target);
    });
}

lt_status lt_ala_adjust(double cos_target, double qf_target, double* out) {
    return guarded([&] {
        require(out != nullptr, "NULL output");
        *out = longtail::ala_adjust(cos_target, qf_target);
    });
}

lt_status lt_ldam_adjust(const int64_t* counts, size_t num_classes, double max_margin,
                         double* a_out) {
    return guarded([&] {
        require(counts && a_out && num_classes > 0, "NULL or empty counts");
        const auto a = longtail::ldam_adjust({counts, num_classes}, max_margin);
        std::memcpy(a_out, a.data(), num_classes * sizeof(double));
    });
}

lt_status lt_loss_eval(const char* loss_json, const double* logits, size_t num_classes,
                       size_t target, const int64_t* counts, double* loss_out, double* grad_out,
                       double* adjusting_out) {
    return guarded([&] {
        require(loss_json && logits && loss_out && num_classes > 0, "NULL argument");
        const auto spec = longtail::loss_spec_from_json_text(loss_json);
        std::span<const int64_t> counts_span =
            counts ? std::span<const int64_t>{counts, num_classes} : std::span<const int64_t>{};
        const auto res = longtail::eval_loss(spec, {logits, num_classes}, target, counts_span);
        *loss_out = res.loss;
        if (grad_out) std::memcpy(grad_out, res.grad_logits.data(), num_classes * sizeof(double));
        if (adjusting_out) *adjusting_out = res.adjusting_term;
    });
}

/* ---- model ------------------------------------------------------------ */

lt_status lt_model_init(size_t feature_dim, size_t num_classes, size_t hidden_dim, uint64_t seed,
                        lt_model** out) {
    return guarded([&] {
        require(out != nullptr, "NULL output");
        longtail::ModelDims dims{feature_dim, num_classes, hidden_dim};
        *out = new lt_model{longtail::CosineClassifier::init(dims, seed)};
    });
}

lt_status lt_model_forward(const lt_model* model, const double* x, size_t dim,
                           double* logits_out) {
    return guarded([&] {
        require(model && x && logits_out, "NULL argument");
        const auto logits = model->model.forward({x, dim});
        std::memcpy(logits_out, logits.data(), logits.size() * sizeof(double));
    });
}

lt_status lt_model_backward(const lt_model* model, const double* x, size_t dim,
                            const double* upstream, size_t num_classes, double* grad_class_out,
                            double* grad_embed_out) {
    return guarded([&] {
        require(model && x && upstream && grad_class_out, "NULL argument");
        const auto g = model->model.backward({x, dim}, {upstream, num_classes});
        std::memcpy(grad_class_out, g.class_weights.data().data(),
                    g.class_weights.data().size() * sizeof(double));
        if (!g.embed_weights.empty()) {
            require(grad_embed_out != nullptr, "model has an embedding; grad_embed_out is NULL");
            std::memcpy(grad_embed_out, g.embed_weights.data().data(),
                        g.embed_weights.data().size() * sizeof(double));
        }
    });
}

lt_status lt_model_save(const lt_model* model, const char* path) {
    return guarded([&] {
        require(model && path, "NULL argument");
        longtail::write_text_file(path, model->model.to_checkpoint_json());
    });
}

lt_status lt_model_load(const char* path, lt_model** out) {
    return guarded([&] {
        require(path && out, "NULL argument");
        *out = new lt_model{
            longtail::CosineClassifier::from_checkpoint_json(longtail::read_text_file(path))};
    });
}

void lt_model_free(lt_model* model) { delete model; }

/* ---- training and evaluation ------------------------------------------ */

lt_status lt_train(lt_model* model, const lt_dataset* train_set, const char* train_config_json,
                   char** trace_csv_out) {
    return guarded([&] {
        require(model && train_set && train_config_json, "NULL argument");
        const auto cfg = longtail::train_config_from_json_text(train_config_json);
        const auto trace =
            longtail::train(train_set->ds, train_set->partition, model->model, cfg);
        if (trace_csv_out) *trace_csv_out = dup_string(trace.to_csv());
    });
}

lt_status lt_evaluate(const lt_model* model, const lt_dataset* test_set, const char* loss_json,
                      char** metrics_json_out) {
    return guarded([&] {
        require(model && test_set && loss_json && metrics_json_out, "NULL argument");
        const auto spec = longtail::loss_spec_from_json_text(loss_json);
        const auto eval = longtail::evaluate(model->model, test_set->ds, spec);
        const auto rep = longtail::report(eval.predictions, eval.target_probability,
                                          test_set->ds.labels, test_set->partition);
        *metrics_json_out = dup_string(rep.to_json());
    });
}

/* ---- experiment commands ----------------------------------------------- */

lt_status lt_cmd_gen_data(const char* config_json, const char* out_dir, char** summary_json_out) {
    return guarded([&] {
        const auto summary = longtail::cmd_gen_data(parse_config(config_json, out_dir));
        if (summary_json_out) *summary_json_out = dup_string(summary);
    });
}

lt_status lt_cmd_train(const char* config_json, const char* out_dir, char** summary_json_out) {
    return guarded([&] {
        const auto summary = longtail::cmd_train(parse_config(config_json, out_dir));
        if (summary_json_out) *summary_json_out = dup_string(summary);
    });
}

lt_status lt_cmd_eval(const char* checkpoint_path, const char* data_dir, const char* loss_json,
                      const char* out_dir, char** metrics_json_out) {
    return guarded([&] {
        require(checkpoint_path && data_dir, "NULL argument");
        longtail::LossSpec loss;
        if (loss_json && loss_json[0] != '\0')
            loss = longtail::loss_spec_from_json_text(loss_json);
        const auto metrics = longtail::cmd_eval(checkpoint_path, data_dir, loss,
                                                out_dir ? out_dir : "");
        if (metrics_json_out) *metrics_json_out = dup_string(metrics);
    });
}

lt_status lt_cmd_compare(const char* config_json, const char* out_dir, int table_only,
                         char** table_markdown_out) {
    return guarded([&] {
        const auto table = longtail::cmd_compare(parse_config(config_json, out_dir), table_only != 0);
        if (table_markdown_out) *table_markdown_out = dup_string(table);
    });
}

lt_status lt_cmd_trace(const char* run_dir, const char* out_dir, char** summary_json_out) {
    return guarded([&] {
        require(run_dir != nullptr, "NULL run_dir");
        const auto summary = longtail::cmd_trace(run_dir, out_dir ? out_dir : "");
        if (summary_json_out) *summary_json_out = dup_string(summary);
    });
}

}  // extern "C"
