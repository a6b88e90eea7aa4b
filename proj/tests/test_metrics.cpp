#include <doctest.h>

#include <cmath>

#include "core/common.hpp"
#include "core/metrics.hpp"

using namespace longtail;

namespace {

SubsetPartition three_band_partition() {
    SubsetPartition p;
    p.many = {0};
    p.medium = {1};
    p.few = {2};
    return p;
}

constexpr auto kMany = static_cast<std::size_t>(ReportBand::many);
constexpr auto kMedium = static_cast<std::size_t>(ReportBand::medium);
constexpr auto kFew = static_cast<std::size_t>(ReportBand::few);
constexpr auto kAll = static_cast<std::size_t>(ReportBand::all);

}  // namespace

TEST_CASE("perfect classifier scores 1.0 everywhere") {
    const std::vector<std::size_t> labels{0, 0, 1, 1, 2, 2};
    const std::vector<double> probs{0.9, 0.95, 0.99, 0.85, 0.9, 0.97};
    const auto rep = report(labels, probs, labels, three_band_partition());

    for (std::size_t b = 0; b < 4; ++b) {
        REQUIRE(rep.subset_accuracy[b].has_value());
        CHECK(*rep.subset_accuracy[b] == 1.0);
        CHECK(rep.hard_count[b] == 0);
    }
    CHECK(rep.easy_count[kAll] == 6);
    for (const auto& acc : rep.per_class_accuracy) {
        REQUIRE(acc.has_value());
        CHECK(*acc == 1.0);
    }
}

TEST_CASE("constant predictor on a balanced probe") {
    // always predicts class 0 on a balanced 3-class set
    const std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2};
    const std::vector<std::size_t> preds{0, 0, 0, 0, 0, 0};
    const std::vector<double> probs(6, 0.5);
    const auto rep = report(preds, probs, labels, three_band_partition());
    CHECK(*rep.subset_accuracy[kAll] == doctest::Approx(1.0 / 3.0));
    CHECK(*rep.per_class_accuracy[0] == 1.0);
    CHECK(*rep.per_class_accuracy[1] == 0.0);
    CHECK(*rep.per_class_accuracy[2] == 0.0);
}

TEST_CASE("hand-counted golden report on the 12-sample fixture") {
    // 3 classes, 4 test samples each; correctness and probabilities chosen
    // by hand:
    //   class 0 (many):   correct, correct, wrong, correct -> 3/4
    //   class 1 (medium): correct, wrong, wrong, correct   -> 2/4
    //   class 2 (few):    wrong, correct, wrong, wrong     -> 1/4
    const std::vector<std::size_t> labels{0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2};
    const std::vector<std::size_t> preds {0, 0, 1, 0, 1, 0, 2, 1, 0, 2, 1, 1};
    //   hard (< 0.2): samples 2, 6, 8, 11; easy (> 0.8): samples 0, 3, 4;
    //   0.2 and 0.8 exactly are neither (strict thresholds)
    const std::vector<double> probs{0.9, 0.6, 0.1, 0.85, 0.95, 0.2, 0.15, 0.5, 0.05, 0.4, 0.8, 0.19};

    const auto rep = report(preds, probs, labels, three_band_partition());

    CHECK(*rep.per_class_accuracy[0] == doctest::Approx(0.75));
    CHECK(*rep.per_class_accuracy[1] == doctest::Approx(0.5));
    CHECK(*rep.per_class_accuracy[2] == doctest::Approx(0.25));
    CHECK(*rep.subset_accuracy[kMany] == doctest::Approx(0.75));
    CHECK(*rep.subset_accuracy[kMedium] == doctest::Approx(0.5));
    CHECK(*rep.subset_accuracy[kFew] == doctest::Approx(0.25));
    CHECK(*rep.subset_accuracy[kAll] == doctest::Approx(0.5));

    CHECK(rep.hard_count[kMany] == 1);
    CHECK(rep.hard_count[kMedium] == 1);
    CHECK(rep.hard_count[kFew] == 2);
    CHECK(rep.hard_count[kAll] == 4);
    CHECK(rep.easy_count[kMany] == 2);
    CHECK(rep.easy_count[kMedium] == 1);
    CHECK(rep.easy_count[kFew] == 0);
    CHECK(rep.easy_count[kAll] == 3);

    CHECK(rep.probability_curve[kMany] == std::vector<double>{0.9, 0.85, 0.6, 0.1});
    CHECK(rep.probability_curve[kFew] == std::vector<double>{0.8, 0.4, 0.19, 0.05});
    CHECK(rep.hard_count[kAll] + rep.easy_count[kAll] <= labels.size());
}

TEST_CASE("empty subset reports the undefined marker, not zero") {
    SubsetPartition p;
    p.many = {0, 1};
    p.medium = {};
    p.few = {2};
    const std::vector<std::size_t> labels{0, 1};
    const std::vector<std::size_t> preds{0, 0};
    const std::vector<double> probs{0.9, 0.4};
    const auto rep = report(preds, probs, labels, p);

    CHECK_FALSE(rep.subset_accuracy[kMedium].has_value());
    CHECK_FALSE(rep.subset_accuracy[kFew].has_value());  // no class-2 samples
    CHECK(rep.subset_accuracy[kMany].has_value());
    CHECK_FALSE(rep.per_class_accuracy[2].has_value());

    const auto j = rep.to_json();
    CHECK(j.find("\"medium\": null") != std::string::npos);

    const auto md = rep.to_markdown_row("ce");
    CHECK(md.find("| - |") != std::string::npos);
}

TEST_CASE("subset accuracies recompose into the total") {
    Rng rng(61);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t c = 3 + rng.next_below(5);
        SubsetPartition p;
        for (std::size_t j = 0; j < c; ++j) {
            const auto band = rng.next_below(3);
            if (band == 0) p.many.insert(j);
            if (band == 1) p.medium.insert(j);
            if (band == 2) p.few.insert(j);
        }
        const std::size_t n = 20 + rng.next_below(40);
        std::vector<std::size_t> labels(n), preds(n);
        std::vector<double> probs(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = rng.next_below(c);
            preds[i] = rng.next_below(c);
            probs[i] = rng.next_unit();
        }
        const auto rep = report(preds, probs, labels, p);

        // correct counts recompose
        double weighted = 0.0;
        std::size_t total_correct = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (preds[i] == labels[i]) ++total_correct;
        for (std::size_t b = 0; b < 3; ++b)
            if (rep.subset_accuracy[b])
                weighted += *rep.subset_accuracy[b] *
                            static_cast<double>(rep.probability_curve[b].size());
        CHECK(weighted == doctest::Approx(static_cast<double>(total_correct)).epsilon(1e-9));

        // all-accuracy equals the count-weighted mean of per-class accuracies
        double per_class_weighted = 0.0;
        std::vector<std::size_t> class_total(c, 0);
        for (auto l : labels) ++class_total[l];
        for (std::size_t j = 0; j < c; ++j)
            if (rep.per_class_accuracy[j])
                per_class_weighted += *rep.per_class_accuracy[j] * static_cast<double>(class_total[j]);
        CHECK(*rep.subset_accuracy[kAll] ==
              doctest::Approx(per_class_weighted / static_cast<double>(n)).epsilon(1e-12));

        // curves sorted descending
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t i = 1; i < rep.probability_curve[b].size(); ++i)
                CHECK(rep.probability_curve[b][i - 1] >= rep.probability_curve[b][i]);
    }
}

TEST_CASE("metrics json round-trip") {
    const std::vector<std::size_t> labels{0, 1, 2, 2};
    const std::vector<std::size_t> preds{0, 1, 2, 0};
    const std::vector<double> probs{0.9, 0.5, 0.3, 0.1};
    const auto rep = report(preds, probs, labels, three_band_partition());
    const auto back = MetricsReport::from_json(rep.to_json());
    CHECK(back.subset_accuracy == rep.subset_accuracy);
    CHECK(back.hard_count == rep.hard_count);
    CHECK(back.easy_count == rep.easy_count);
    CHECK(back.probability_curve == rep.probability_curve);
    CHECK(back.per_class_accuracy == rep.per_class_accuracy);
}

TEST_CASE("report validates input lengths") {
    const std::vector<std::size_t> labels{0, 1};
    const std::vector<std::size_t> preds{0};
    const std::vector<double> probs{0.5, 0.5};
    CHECK_THROWS_AS(report(preds, probs, labels, three_band_partition()), InvalidArgError);
}
