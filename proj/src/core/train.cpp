#include "core/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace longtail {

using nlohmann::json;

void TrainConfig::validate(std::size_t train_size) const {
    if (epochs < 1) throw InvalidSpecError("epochs must be >= 1");
    if (batch_size < 1) throw InvalidSpecError("batch_size must be >= 1");
    if (batch_size > train_size) throw InvalidSpecError("batch_size exceeds train set size");
    // lr = 0 is allowed: it pins the no-update contract
    if (!(lr >= 0.0)) throw InvalidSpecError("lr must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidSpecError("momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw InvalidSpecError("weight_decay must be >= 0");
    loss.validate();
}

namespace {

struct SubsetAccumulator {
    double sum = 0.0;
    std::size_t n = 0;

    void add(double v) {
        sum += v;
        ++n;
    }
    double mean() const { return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n); }
};

void sgd_update(Matrix& w, Matrix& velocity, const Matrix& grad, double lr, double momentum,
                double weight_decay) {
    auto& wv = w.data();
    auto& vv = velocity.data();
    const auto& gv = grad.data();
    for (std::size_t i = 0; i < wv.size(); ++i) {
        const double g = gv[i] + weight_decay * wv[i];
        vv[i] = momentum * vv[i] + g;
        wv[i] -= lr * vv[i];
    }
}

}  // namespace

TraceLog train(const Dataset& train_set, const SubsetPartition& partition, CosineClassifier& model,
               const TrainConfig& cfg) {
    cfg.validate(train_set.num_samples());
    const std::size_t in_dim = model.dims().feature_dim;
    if (train_set.feature_dim() != in_dim)
        throw InvalidSpecError("dataset feature_dim does not match model");
    if (train_set.num_classes() != model.dims().num_classes)
        throw InvalidSpecError("dataset num_classes does not match model");

    const std::size_t n = train_set.num_samples();
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    ModelGrads velocity = model.zero_grads();
    TraceLog trace;
    trace.rows.reserve(cfg.epochs);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cfg.lr;
        for (const auto& dp : cfg.lr_decay)
            if (epoch >= dp.epoch) lr *= dp.factor;

        shuffle(order, shuffle_rng);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        SubsetAccumulator adj[3], df[3];
        double df_all_sum = 0.0;

        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            const double batch_n = static_cast<double>(end - start);
            ModelGrads batch_grads = model.zero_grads();

            for (std::size_t b = start; b < end; ++b) {
                const std::size_t idx = order[b];
                const auto x = train_set.features.row(idx);
                const std::size_t y = train_set.labels[idx];
                const std::string where = "epoch " + std::to_string(epoch) + ", batch " +
                                          std::to_string(start / cfg.batch_size);

                std::vector<double> logits;
                LossResult res;
                try {
                    logits = model.forward(x);
                    res = eval_loss(cfg.loss, logits, y,
                                    {train_set.counts.data(), train_set.counts.size()});
                } catch (const NumericInputError& e) {
                    throw DivergenceError("training diverged at " + where + ": " + e.what());
                } catch (const DegenerateNormError& e) {
                    throw DivergenceError("training diverged at " + where + ": " + e.what());
                }
                if (!std::isfinite(res.loss))
                    throw DivergenceError("non-finite loss at " + where);

                loss_sum += res.loss;
                const std::size_t pred =
                    std::max_element(logits.begin(), logits.end()) - logits.begin();
                if (pred == y) ++correct;

                const auto band = static_cast<int>(partition.band_of(y));
                adj[band].add(res.adjusting_term);
                const double sample_df = difficulty_factor(std::clamp(logits[y], -1.0, 1.0));
                df[band].add(sample_df);
                df_all_sum += sample_df;

                const auto g = model.backward(x, res.grad_logits);
                batch_grads.add_scaled(g, 1.0);
            }

            batch_grads.scale(1.0 / batch_n);
            sgd_update(model.class_weights(), velocity.class_weights, batch_grads.class_weights, lr,
                       cfg.momentum, cfg.weight_decay);
            if (model.has_embedding())
                sgd_update(model.embed_weights(), velocity.embed_weights, batch_grads.embed_weights,
                           lr, cfg.momentum, cfg.weight_decay);
        }

        TraceRow row;
        row.epoch = epoch;
        row.mean_loss = loss_sum / static_cast<double>(n);
        row.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
        row.adj_many = adj[0].mean();
        row.adj_medium = adj[1].mean();
        row.adj_few = adj[2].mean();
        row.df_many = df[0].mean();
        row.df_medium = df[1].mean();
        row.df_few = df[2].mean();
        row.df_all = df_all_sum / static_cast<double>(n);
        trace.rows.push_back(row);
    }
    return trace;
}

EvalResult evaluate(const CosineClassifier& model, const Dataset& test_set, const LossSpec& loss) {
    loss.validate();
    if (test_set.feature_dim() != model.dims().feature_dim)
        throw InvalidSpecError("dataset feature_dim does not match model");
    if (test_set.num_classes() != model.dims().num_classes)
        throw InvalidSpecError("dataset num_classes does not match model");

    EvalResult out;
    out.predictions.reserve(test_set.num_samples());
    out.target_probability.reserve(test_set.num_samples());
    for (std::size_t i = 0; i < test_set.num_samples(); ++i) {
        const auto logits = model.forward(test_set.features.row(i));
        out.predictions.push_back(std::max_element(logits.begin(), logits.end()) - logits.begin());
        const auto ce = ce_loss(logits, test_set.labels[i], loss.scale_s);
        out.target_probability.push_back(std::exp(-ce.loss));
    }
    return out;
}

std::string TraceLog::to_csv(const std::string& header) const {
    std::ostringstream out;
    if (!header.empty()) out << "# " << header << '\n';
    out << "epoch,loss,acc,adj_many,adj_medium,adj_few,df_many,df_medium,df_few,df_all\n";
    for (const auto& r : rows) {
        out << r.epoch << ',' << format_double(r.mean_loss) << ',' << format_double(r.train_accuracy)
            << ',' << format_double(r.adj_many) << ',' << format_double(r.adj_medium) << ','
            << format_double(r.adj_few) << ',' << format_double(r.df_many) << ','
            << format_double(r.df_medium) << ',' << format_double(r.df_few) << ','
            << format_double(r.df_all) << '\n';
    }
    return out.str();
}

TraceLog TraceLog::from_csv(const std::string& text) {
    TraceLog log;
    std::istringstream in(text);
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;  // column header
            continue;
        }
        std::istringstream ls(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ls, cell, ',')) vals.push_back(std::strtod(cell.c_str(), nullptr));
        if (vals.size() != 10) throw IoError("trace csv row has wrong column count");
        TraceRow r;
        r.epoch = static_cast<std::size_t>(vals[0]);
        r.mean_loss = vals[1];
        r.train_accuracy = vals[2];
        r.adj_many = vals[3];
        r.adj_medium = vals[4];
        r.adj_few = vals[5];
        r.df_many = vals[6];
        r.df_medium = vals[7];
        r.df_few = vals[8];
        r.df_all = vals[9];
        log.rows.push_back(r);
    }
    return log;
}

TrainConfig train_config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidSpecError(std::string("malformed train config json: ") + e.what());
    }
    TrainConfig cfg;
    try {
        cfg.epochs = j.at("epochs").get<std::size_t>();
        cfg.batch_size = j.at("batch_size").get<std::size_t>();
        cfg.lr = j.at("lr").get<double>();
        if (j.contains("momentum")) cfg.momentum = j.at("momentum").get<double>();
        if (j.contains("weight_decay")) cfg.weight_decay = j.at("weight_decay").get<double>();
        if (j.contains("loss")) cfg.loss = loss_spec_from_json_text(j.at("loss").dump());
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("lr_decay"))
            for (const auto& dp : j.at("lr_decay"))
                cfg.lr_decay.push_back(
                    {dp.at("epoch").get<std::size_t>(), dp.at("factor").get<double>()});
    } catch (const json::exception& e) {
        throw InvalidSpecError(std::string("malformed train config: ") + e.what());
    }
    return cfg;
}

std::string train_config_to_json_text(const TrainConfig& cfg) {
    json j;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["lr"] = cfg.lr;
    j["momentum"] = cfg.momentum;
    j["weight_decay"] = cfg.weight_decay;
    j["loss"] = json::parse(loss_spec_to_json_text(cfg.loss));
    j["seed"] = cfg.seed;
    json decay = json::array();
    for (const auto& dp : cfg.lr_decay) decay.push_back({{"epoch", dp.epoch}, {"factor", dp.factor}});
    j["lr_decay"] = decay;
    return j.dump();
}

}  // namespace longtail
