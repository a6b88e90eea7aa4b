#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/losses.hpp"
#include "core/metrics.hpp"
#include "core/model.hpp"
#include "core/train.hpp"

namespace longtail {

struct PartitionThresholds {
    std::int64_t many = 100;
    std::int64_t few = 20;
};

// One experiment: a dataset (inline recipe or a saved directory), a model
// shape, a training recipe, and the loss rows of the comparison matrix.
// Repeat k runs with train seed + k and model seed + k.
struct ExperimentConfig {
    std::optional<LongTailSpec> dataset_spec;  // inline recipe
    std::string dataset_path;                  // or a directory produced by gen-data
    std::size_t hidden_dim = 0;
    std::uint64_t model_seed = 0;
    TrainConfig train;
    std::vector<LossSpec> losses_to_compare;
    std::size_t repeats = 1;
    std::string output_dir = "out";
    PartitionThresholds thresholds;

    void validate() const;
};

ExperimentConfig experiment_config_from_json_text(const std::string& text);

// Semantic identity of a run: dataset hash + model shape/seed + train recipe
// with the run's loss and seed. Output location and repeat count are
// deliberately excluded.
std::string run_config_hash(const ExperimentConfig& cfg, const LossSpec& loss,
                            std::uint64_t run_seed, std::uint64_t run_model_seed,
                            const std::string& dataset_hash);

std::string dataset_hash_of_spec(const LongTailSpec& spec);

// Writes train/test CSVs + JSON sidecars into <out>/dataset (or out itself
// for an explicit directory). Returns a summary JSON string.
std::string cmd_gen_data(const ExperimentConfig& cfg);

// One run per repeat: checkpoint.json, trace.csv, metrics.json under
// <out>/runs/<loss>-seed<N>/. Returns a summary JSON string. Existing
// artifacts with a matching config hash are reused.
std::string cmd_train(const ExperimentConfig& cfg);

// Re-evaluates a checkpoint against a dataset directory.
std::string cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
                     const LossSpec& loss, const std::string& out_dir);

// Assembles the Many/Medium/Few/All mean +- std table over repeats for every
// loss in losses_to_compare, training any missing runs first (unless
// table_only, in which case missing runs are an error). Writes compare.md and
// compare.json; returns the markdown table.
std::string cmd_compare(const ExperimentConfig& cfg, bool table_only);

// Exports plot-ready artifacts from a finished run directory: adjusting-term
// and difficulty traces plus per-subset probability curves, as CSV and SVG.
std::string cmd_trace(const std::string& run_dir, const std::string& out_dir);

// Parallelism cap for repeats: LONGTAIL_LAB_THREADS if set, else hardware
// concurrency, never more than the number of runs.
std::size_t repeat_parallelism(std::size_t runs);

}  // namespace longtail
