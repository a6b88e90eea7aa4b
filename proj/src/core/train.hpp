#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/losses.hpp"
#include "core/model.hpp"

namespace longtail {

struct LrDecayPoint {
    std::size_t epoch = 0;
    double factor = 0.1;
};

struct TrainConfig {
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    double lr = 0.1;
    double momentum = 0.0;
    double weight_decay = 0.0;
    LossSpec loss;
    std::uint64_t seed = 0;
    std::vector<LrDecayPoint> lr_decay;

    void validate(std::size_t train_size) const;
};

// Per-epoch record: mean loss and train accuracy plus subset means of the
// applied adjusting term and of the target-cosine difficulty. Empty subsets
// carry NaN.
struct TraceRow {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
    double adj_many = 0.0;
    double adj_medium = 0.0;
    double adj_few = 0.0;
    double df_many = 0.0;
    double df_medium = 0.0;
    double df_few = 0.0;
    double df_all = 0.0;
};

struct TraceLog {
    std::vector<TraceRow> rows;

    // First six columns are the trace contract (epoch, loss, acc, adj_many,
    // adj_medium, adj_few); the df_* columns extend it with the
    // difficulty-factor curves. `header` becomes a leading '#' comment line.
    std::string to_csv(const std::string& header = "") const;
    static TraceLog from_csv(const std::string& text);
};

struct EvalResult {
    std::vector<std::size_t> predictions;   // argmax of raw cosine logits
    std::vector<double> target_probability; // softmax(s * logits)[label]
};

// Shuffled mini-batch SGD with momentum and weight decay; mean reduction over
// each batch, last partial batch kept. Shuffling is driven solely by
// cfg.seed, so identical inputs give bit-identical trained weights. A
// non-finite loss aborts with the offending epoch/batch.
TraceLog train(const Dataset& train_set, const SubsetPartition& partition, CosineClassifier& model,
               const TrainConfig& cfg);

// Inference applies no adjustment: the adjusting term is a training-time
// regularizer and depends on the (unknown) target.
EvalResult evaluate(const CosineClassifier& model, const Dataset& test_set, const LossSpec& loss);

TrainConfig train_config_from_json_text(const std::string& text);
std::string train_config_to_json_text(const TrainConfig& cfg);

}  // namespace longtail
