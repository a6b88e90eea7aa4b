#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace longtail {

using nlohmann::json;

MetricsReport report(const std::vector<std::size_t>& predictions,
                     const std::vector<double>& probabilities,
                     const std::vector<std::size_t>& labels, const SubsetPartition& partition) {
    if (predictions.size() != labels.size() || probabilities.size() != labels.size())
        throw InvalidArgError("predictions/probabilities/labels length mismatch");

    std::size_t num_classes = 0;
    for (auto s : partition.many) num_classes = std::max(num_classes, s + 1);
    for (auto s : partition.medium) num_classes = std::max(num_classes, s + 1);
    for (auto s : partition.few) num_classes = std::max(num_classes, s + 1);
    for (auto l : labels) {
        if (l >= num_classes) throw InvalidArgError("label outside partition classes");
    }

    std::vector<std::size_t> total(num_classes, 0), correct(num_classes, 0);
    std::array<std::size_t, 4> band_total{}, band_correct{};
    MetricsReport rep;

    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::size_t y = labels[i];
        const bool ok = predictions[i] == y;
        ++total[y];
        if (ok) ++correct[y];

        const auto band = static_cast<std::size_t>(partition.band_of(y));
        for (std::size_t b : {band, static_cast<std::size_t>(ReportBand::all)}) {
            ++band_total[b];
            if (ok) ++band_correct[b];
            if (probabilities[i] < 0.2) ++rep.hard_count[b];
            if (probabilities[i] > 0.8) ++rep.easy_count[b];
            rep.probability_curve[b].push_back(probabilities[i]);
        }
    }

    rep.per_class_accuracy.resize(num_classes);
    for (std::size_t j = 0; j < num_classes; ++j)
        if (total[j] > 0)
            rep.per_class_accuracy[j] = static_cast<double>(correct[j]) / static_cast<double>(total[j]);

    for (std::size_t b = 0; b < 4; ++b) {
        if (band_total[b] > 0)
            rep.subset_accuracy[b] =
                static_cast<double>(band_correct[b]) / static_cast<double>(band_total[b]);
        std::sort(rep.probability_curve[b].begin(), rep.probability_curve[b].end(),
                  std::greater<double>());
    }
    return rep;
}

std::string MetricsReport::to_json(const std::string& extra_json) const {
    json j;
    j["format"] = "longtail.metrics/1";
    json pca = json::array();
    for (const auto& a : per_class_accuracy)
        pca.push_back(a ? json(*a) : json(nullptr));
    j["per_class_accuracy"] = pca;
    for (std::size_t b = 0; b < 4; ++b) {
        const char* name = kReportBandNames[b];
        j["subset_accuracy"][name] = subset_accuracy[b] ? json(*subset_accuracy[b]) : json(nullptr);
        j["hard_count"][name] = hard_count[b];
        j["easy_count"][name] = easy_count[b];
        j["probability_curve"][name] = probability_curve[b];
    }
    if (!extra_json.empty()) {
        const json extra = json::parse(extra_json);
        for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    }
    return j.dump(2) + "\n";
}

namespace {

std::string cell(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", *v * 100.0);
    return buf;
}

}  // namespace

std::string MetricsReport::to_markdown_row(const std::string& label) const {
    std::ostringstream out;
    out << "| " << label << " | " << cell(subset_accuracy[0]) << " | " << cell(subset_accuracy[1])
        << " | " << cell(subset_accuracy[2]) << " | " << cell(subset_accuracy[3]) << " |";
    return out.str();
}

std::string MetricsReport::to_markdown_table(const std::string& label) const {
    std::ostringstream out;
    out << "| Method | Many | Medium | Few | All |\n";
    out << "|---|---|---|---|---|\n";
    out << to_markdown_row(label) << '\n';
    return out.str();
}

MetricsReport MetricsReport::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed metrics json: ") + e.what());
    }
    MetricsReport rep;
    try {
        for (const auto& v : j.at("per_class_accuracy"))
            rep.per_class_accuracy.push_back(v.is_null() ? std::nullopt
                                                         : std::optional<double>(v.get<double>()));
        for (std::size_t b = 0; b < 4; ++b) {
            const char* name = kReportBandNames[b];
            const auto& acc = j.at("subset_accuracy").at(name);
            if (!acc.is_null()) rep.subset_accuracy[b] = acc.get<double>();
            rep.hard_count[b] = j.at("hard_count").at(name).get<std::size_t>();
            rep.easy_count[b] = j.at("easy_count").at(name).get<std::size_t>();
            rep.probability_curve[b] =
                j.at("probability_curve").at(name).get<std::vector<double>>();
        }
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed metrics json: ") + e.what());
    }
    return rep;
}

}  // namespace longtail
