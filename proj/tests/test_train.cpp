#include <doctest.h>

#include <cmath>
#include <numeric>

#include "core/common.hpp"
#include "core/data.hpp"
#include "core/losses.hpp"
#include "core/model.hpp"
#include "core/train.hpp"

using namespace longtail;

namespace {

LongTailSpec small_spec() {
    LongTailSpec spec;
    spec.num_classes = 4;
    spec.n_max = 30;
    spec.n_min = 5;
    spec.feature_dim = 6;
    spec.intra_class_sigma = {0.2};
    spec.test_per_class = 8;
    spec.seed = 77;
    return spec;
}

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.lr = 0.05;
    cfg.momentum = 0.9;
    cfg.seed = 5;
    cfg.loss.kind = LossKind::ala;
    return cfg;
}

}  // namespace

TEST_CASE("zero learning rate leaves weights untouched") {
    const auto [train_set, test_set] = generate(small_spec());
    const auto partition = partition_by_count(train_set.counts, 20, 8);
    auto model = CosineClassifier::init({6, 4, 0}, 3);
    const auto before = model.class_weights().data();

    auto cfg = small_config();
    cfg.lr = 0.0;
    train(train_set, partition, model, cfg);
    CHECK(model.class_weights().data() == before);
}

TEST_CASE("single full-batch step matches the hand-stepped oracle") {
    const auto [train_set, test_set] = generate(small_spec());
    const auto partition = partition_by_count(train_set.counts, 20, 8);

    TrainConfig cfg = small_config();
    cfg.epochs = 1;
    cfg.batch_size = train_set.num_samples();
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    cfg.lr = 0.1;
    cfg.loss.kind = LossKind::ce;

    const auto initial = CosineClassifier::init({6, 4, 0}, 9);

    // oracle: mean full-batch gradient accumulated sample by sample
    ModelGrads expected = initial.zero_grads();
    for (std::size_t i = 0; i < train_set.num_samples(); ++i) {
        const auto logits = initial.forward(train_set.features.row(i));
        const auto res = eval_loss(cfg.loss, logits, train_set.labels[i],
                                   {train_set.counts.data(), train_set.counts.size()});
        expected.add_scaled(initial.backward(train_set.features.row(i), res.grad_logits), 1.0);
    }
    expected.scale(1.0 / static_cast<double>(train_set.num_samples()));

    auto model = initial;
    train(train_set, partition, model, cfg);

    for (std::size_t i = 0; i < model.class_weights().data().size(); ++i) {
        const double want = initial.class_weights().data()[i] - cfg.lr * expected.class_weights.data()[i];
        CHECK(model.class_weights().data()[i] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("training is deterministic end to end") {
    const auto [train_set, test_set] = generate(small_spec());
    const auto partition = partition_by_count(train_set.counts, 20, 8);
    const auto cfg = small_config();

    auto model_a = CosineClassifier::init({6, 4, 0}, 3);
    const auto trace_a = train(train_set, partition, model_a, cfg);
    auto model_b = CosineClassifier::init({6, 4, 0}, 3);
    const auto trace_b = train(train_set, partition, model_b, cfg);

    CHECK(model_a.class_weights().data() == model_b.class_weights().data());
    CHECK(trace_a.to_csv() == trace_b.to_csv());

    auto cfg2 = cfg;
    cfg2.seed = 6;
    auto model_c = CosineClassifier::init({6, 4, 0}, 3);
    train(train_set, partition, model_c, cfg2);
    CHECK(model_a.class_weights().data() != model_c.class_weights().data());
}

TEST_CASE("trace rows carry per-subset adjusting means") {
    const auto [train_set, test_set] = generate(small_spec());
    // thresholds sized so every band is populated: counts are 30, 17, 9, 5
    const auto partition = partition_by_count(train_set.counts, 20, 8);
    REQUIRE(!partition.many.empty());
    REQUIRE(!partition.medium.empty());
    REQUIRE(!partition.few.empty());

    auto model = CosineClassifier::init({6, 4, 0}, 3);
    const auto cfg = small_config();
    const auto trace = train(train_set, partition, model, cfg);

    CHECK(trace.rows.size() == cfg.epochs);
    for (const auto& r : trace.rows) {
        CHECK(r.adj_many >= 0.0);
        CHECK(r.adj_medium >= 0.0);
        CHECK(r.adj_few >= 0.0);
        CHECK(r.df_all >= 0.0);
        CHECK(r.df_all <= 1.0);
        CHECK(r.train_accuracy >= 0.0);
        CHECK(r.train_accuracy <= 1.0);
    }
    // quantity factor dominates before training differentiates the cosines
    CHECK(trace.rows[0].adj_few >= trace.rows[0].adj_many);
}

TEST_CASE("divergence is reported with its location") {
    auto [train_set, test_set] = generate(small_spec());
    const auto partition = partition_by_count(train_set.counts, 20, 8);
    train_set.features(0, 0) = std::nan("");

    auto model = CosineClassifier::init({6, 4, 0}, 3);
    auto cfg = small_config();
    cfg.batch_size = train_set.num_samples();
    try {
        train(train_set, partition, model, cfg);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
    }
}

TEST_CASE("config validation") {
    const auto [train_set, test_set] = generate(small_spec());
    const auto partition = partition_by_count(train_set.counts, 20, 8);
    auto model = CosineClassifier::init({6, 4, 0}, 3);

    auto cfg = small_config();
    cfg.batch_size = train_set.num_samples() + 1;
    CHECK_THROWS_AS(train(train_set, partition, model, cfg), InvalidSpecError);

    cfg = small_config();
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(train(train_set, partition, model, cfg), InvalidSpecError);

    cfg = small_config();
    auto wrong_model = CosineClassifier::init({7, 4, 0}, 3);
    CHECK_THROWS_AS(train(train_set, partition, wrong_model, cfg), InvalidSpecError);
}

TEST_CASE("ce reaches full train accuracy on a separable balanced problem") {
    LongTailSpec spec;
    spec.num_classes = 2;
    spec.n_max = 40;
    spec.n_min = 40;
    spec.feature_dim = 4;
    spec.intra_class_sigma = {0.05};
    spec.confuser_pairs = {{0, 1, M_PI / 2.0}};
    spec.test_per_class = 5;
    spec.seed = 11;
    const auto [train_set, test_set] = generate(spec);
    const auto partition = partition_by_count(train_set.counts);

    auto model = CosineClassifier::init({4, 2, 0}, 21);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 16;
    cfg.lr = 0.05;
    cfg.momentum = 0.9;
    cfg.seed = 2;
    cfg.loss.kind = LossKind::ce;
    const auto trace = train(train_set, partition, model, cfg);
    CHECK(trace.rows.back().train_accuracy == 1.0);
}

TEST_CASE("lr decay shrinks the step") {
    const auto [train_set, test_set] = generate(small_spec());
    const auto partition = partition_by_count(train_set.counts, 20, 8);

    auto cfg = small_config();
    cfg.epochs = 2;
    cfg.momentum = 0.0;
    cfg.lr_decay = {{1, 0.0}};  // epoch 1 onward: lr 0

    auto model = CosineClassifier::init({6, 4, 0}, 3);
    train(train_set, partition, model, cfg);
    const auto after_decayed = model.class_weights().data();

    // the second epoch contributed nothing; one epoch alone gives the same weights
    auto model_one = CosineClassifier::init({6, 4, 0}, 3);
    auto cfg_one = cfg;
    cfg_one.epochs = 1;
    cfg_one.lr_decay.clear();
    train(train_set, partition, model_one, cfg_one);
    CHECK(model_one.class_weights().data() == after_decayed);
}

TEST_CASE("evaluate predicts by raw cosine argmax") {
    const auto [train_set, test_set] = generate(small_spec());
    auto model = CosineClassifier::init({6, 4, 0}, 3);
    // plant each class weight on its prototype: perfect geometry
    for (std::size_t j = 0; j < 4; ++j) {
        const auto p = test_set.prototypes.row(j);
        for (std::size_t k = 0; k < 6; ++k) model.class_weights()(j, k) = p[k];
    }
    LossSpec loss;
    loss.kind = LossKind::ala;
    const auto eval = evaluate(model, test_set, loss);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_set.num_samples(); ++i)
        if (eval.predictions[i] == test_set.labels[i]) ++correct;
    CHECK(static_cast<double>(correct) / test_set.num_samples() > 0.9);

    // independent argmax pass
    for (std::size_t i = 0; i < test_set.num_samples(); ++i) {
        const auto logits = model.forward(test_set.features.row(i));
        std::size_t arg = 0;
        for (std::size_t j = 1; j < logits.size(); ++j)
            if (logits[j] > logits[arg]) arg = j;
        CHECK(eval.predictions[i] == arg);
        CHECK(eval.target_probability[i] >= 0.0);
        CHECK(eval.target_probability[i] <= 1.0);
    }
}

TEST_CASE("uniform logits give target probability 1/C") {
    auto model = CosineClassifier::init({3, 4, 0}, 5);
    // all weight rows identical: every cosine equal
    for (std::size_t j = 1; j < 4; ++j)
        for (std::size_t k = 0; k < 3; ++k) model.class_weights()(j, k) = model.class_weights()(0, k);

    Dataset probe;
    probe.features = Matrix(4, 3);
    for (std::size_t i = 0; i < 4; ++i) {
        probe.features(i, 0) = 0.5 + 0.1 * static_cast<double>(i);
        probe.features(i, 1) = -0.3;
        probe.features(i, 2) = 0.2;
        probe.labels.push_back(i);
    }
    probe.counts = {1, 1, 1, 1};
    probe.prototypes = Matrix(4, 3);
    for (std::size_t j = 0; j < 4; ++j) probe.prototypes(j, 0) = 1.0;

    LossSpec loss;
    const auto eval = evaluate(model, probe, loss);
    for (double p : eval.target_probability) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("trace csv round-trips") {
    TraceLog log;
    TraceRow r;
    r.epoch = 0;
    r.mean_loss = 1.25;
    r.train_accuracy = 0.5;
    r.adj_many = 0.125;
    r.adj_medium = std::numeric_limits<double>::quiet_NaN();
    r.adj_few = 1.0 / 3.0;
    r.df_many = 0.5;
    r.df_medium = 0.25;
    r.df_few = 0.75;
    r.df_all = 0.5;
    log.rows.push_back(r);

    const auto text = log.to_csv("config_hash=abc seed=1");
    const auto back = TraceLog::from_csv(text);
    REQUIRE(back.rows.size() == 1);
    CHECK(back.rows[0].mean_loss == 1.25);
    CHECK(std::isnan(back.rows[0].adj_medium));
    CHECK(back.rows[0].adj_few == 1.0 / 3.0);
    CHECK(text.find("# config_hash=abc seed=1") == 0);
}

TEST_CASE("train config json round-trip") {
    TrainConfig cfg;
    cfg.epochs = 7;
    cfg.batch_size = 3;
    cfg.lr = 0.25;
    cfg.momentum = 0.5;
    cfg.weight_decay = 1e-4;
    cfg.seed = 99;
    cfg.loss.kind = LossKind::focal;
    cfg.lr_decay = {{5, 0.1}, {6, 0.5}};
    const auto back = train_config_from_json_text(train_config_to_json_text(cfg));
    CHECK(back.epochs == 7);
    CHECK(back.batch_size == 3);
    CHECK(back.lr == 0.25);
    CHECK(back.momentum == 0.5);
    CHECK(back.weight_decay == 1e-4);
    CHECK(back.seed == 99);
    CHECK(back.loss.kind == LossKind::focal);
    REQUIRE(back.lr_decay.size() == 2);
    CHECK(back.lr_decay[1].epoch == 6);
    CHECK(back.lr_decay[1].factor == 0.5);
}
