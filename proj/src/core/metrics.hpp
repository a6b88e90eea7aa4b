#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "core/data.hpp"

namespace longtail {

// Indexing for the four reporting bands; `all` spans every sample.
enum class ReportBand { many = 0, medium = 1, few = 2, all = 3 };

inline constexpr std::array<const char*, 4> kReportBandNames = {"many", "medium", "few", "all"};

struct MetricsReport {
    // nullopt where a class has no samples
    std::vector<std::optional<double>> per_class_accuracy;
    // nullopt where a subset is empty (undefined, never silently zero)
    std::array<std::optional<double>, 4> subset_accuracy;
    // strict thresholds: hard < 0.2, easy > 0.8
    std::array<std::size_t, 4> hard_count{};
    std::array<std::size_t, 4> easy_count{};
    // target probabilities per subset, sorted descending
    std::array<std::vector<double>, 4> probability_curve;

    std::string to_json(const std::string& extra_json = "") const;
    std::string to_markdown_row(const std::string& label) const;
    std::string to_markdown_table(const std::string& label) const;
    static MetricsReport from_json(const std::string& text);
};

// Top-1 accuracy per class and per Many/Medium/Few/All subset (subset
// accuracy is the micro average over the subset's samples), plus hard/easy
// sample counts and the sorted probability curves.
MetricsReport report(const std::vector<std::size_t>& predictions,
                     const std::vector<double>& probabilities,
                     const std::vector<std::size_t>& labels, const SubsetPartition& partition);

}  // namespace longtail
