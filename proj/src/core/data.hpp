#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "core/common.hpp"

namespace longtail {

// One forced angular separation between two class prototypes.
struct ConfuserPair {
    std::size_t first = 0;
    std::size_t second = 0;
    double angle = 0.0;  // radians, (0, pi]
};

// Recipe for a synthetic long-tailed dataset. Class counts fall
// geometrically from n_max to n_min; per-class difficulty is steered by
// prototype geometry (confuser pairs) and per-class cluster spread.
struct LongTailSpec {
    std::size_t num_classes = 0;
    std::int64_t n_max = 0;
    std::int64_t n_min = 0;
    std::size_t feature_dim = 0;
    std::vector<double> intra_class_sigma;  // size 1 (broadcast) or num_classes
    std::vector<ConfuserPair> confuser_pairs;
    std::int64_t test_per_class = 0;
    std::uint64_t seed = 0;

    void validate() const;
    // sigma for class j after broadcast
    double sigma_for(std::size_t j) const;
};

struct Dataset {
    Matrix features;                   // one row per sample
    std::vector<std::size_t> labels;   // in [0, C)
    std::vector<std::int64_t> counts;  // per-class rows in this dataset, head -> tail
    Matrix prototypes;                 // C unit rows

    std::size_t num_samples() const { return labels.size(); }
    std::size_t num_classes() const { return counts.size(); }
    std::size_t feature_dim() const { return features.cols(); }

    void validate() const;
};

struct SubsetPartition {
    std::set<std::size_t> many;
    std::set<std::size_t> medium;
    std::set<std::size_t> few;

    enum class Band { many, medium, few };
    Band band_of(std::size_t cls) const;
};

// counts[j] = round(n_max * (n_min/n_max)^(j/(C-1))), the standard
// exponential imbalance profile; endpoints land exactly on n_max / n_min.
std::vector<std::int64_t> class_counts(const LongTailSpec& spec);

// Seeded generation of a (train, test) pair: prototypes uniform on the unit
// sphere, confuser pairs rotated in-plane to their requested angle, samples
// prototype + isotropic Gaussian noise. Same spec + seed => bit-identical
// output. Test side is balanced at test_per_class rows per class.
std::pair<Dataset, Dataset> generate(const LongTailSpec& spec);

// Many-shot: counts > many_threshold; few-shot: counts <= few_threshold;
// medium: everything between.
SubsetPartition partition_by_count(const std::vector<std::int64_t>& counts,
                                   std::int64_t many_threshold = 100,
                                   std::int64_t few_threshold = 20);

// CSV format: one row per sample, feature_dim feature columns then the label
// column. The JSON sidecar carries spec, counts, prototypes and partition.
void save_dataset_csv(const Dataset& ds, const std::string& csv_path);
std::string dataset_sidecar_json(const Dataset& ds, const LongTailSpec& spec,
                                 const SubsetPartition& partition, const std::string& kind);
Dataset load_dataset(const std::string& csv_path, const std::string& sidecar_path);
SubsetPartition partition_from_sidecar(const std::string& sidecar_path);
LongTailSpec spec_from_json_text(const std::string& text);
std::string spec_to_json_text(const LongTailSpec& spec);

}  // namespace longtail
