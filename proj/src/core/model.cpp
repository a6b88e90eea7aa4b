#include "core/model.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace longtail {

using nlohmann::json;

void ModelDims::validate() const {
    if (feature_dim < 1) throw InvalidSpecError("feature_dim must be >= 1");
    if (num_classes < 1) throw InvalidSpecError("num_classes must be >= 1");
}

void ModelGrads::add_scaled(const ModelGrads& other, double scale) {
    for (std::size_t i = 0; i < class_weights.data().size(); ++i)
        class_weights.data()[i] += scale * other.class_weights.data()[i];
    for (std::size_t i = 0; i < embed_weights.data().size(); ++i)
        embed_weights.data()[i] += scale * other.embed_weights.data()[i];
}

void ModelGrads::scale(double s) {
    for (auto& v : class_weights.data()) v *= s;
    for (auto& v : embed_weights.data()) v *= s;
}

namespace {

void fill_uniform_rows(Matrix& m, double bound, Rng& rng) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        do {
            for (auto& v : row) v = rng.next_uniform(-bound, bound);
        } while (norm2(row) == 0.0);
    }
}

}  // namespace

CosineClassifier CosineClassifier::init(const ModelDims& dims, std::uint64_t seed) {
    dims.validate();
    CosineClassifier m;
    m.dims_ = dims;
    m.seed_ = seed;
    Rng rng(seed);
    if (dims.hidden_dim > 0) {
        m.embed_weights_ = Matrix(dims.hidden_dim, dims.feature_dim);
        fill_uniform_rows(m.embed_weights_, 1.0 / std::sqrt(static_cast<double>(dims.feature_dim)), rng);
        m.class_weights_ = Matrix(dims.num_classes, dims.hidden_dim);
        fill_uniform_rows(m.class_weights_, 1.0 / std::sqrt(static_cast<double>(dims.hidden_dim)), rng);
    } else {
        m.class_weights_ = Matrix(dims.num_classes, dims.feature_dim);
        fill_uniform_rows(m.class_weights_, 1.0 / std::sqrt(static_cast<double>(dims.feature_dim)), rng);
    }
    return m;
}

std::vector<double> CosineClassifier::embed(std::span<const double> x) const {
    if (x.size() != dims_.feature_dim) throw InvalidArgError("input dim mismatch");
    if (!has_embedding()) return {x.begin(), x.end()};
    std::vector<double> z(dims_.hidden_dim);
    for (std::size_t h = 0; h < dims_.hidden_dim; ++h) {
        const double pre = dot(embed_weights_.row(h), x);
        z[h] = pre > 0.0 ? pre : 0.0;
    }
    return z;
}

std::vector<double> CosineClassifier::forward(std::span<const double> x) const {
    const auto z = embed(x);
    const double nz = norm2(z);
    if (nz == 0.0) throw DegenerateNormError("embedded input has zero norm");
    std::vector<double> logits(dims_.num_classes);
    for (std::size_t j = 0; j < dims_.num_classes; ++j) {
        const auto w = class_weights_.row(j);
        const double nw = norm2(w);
        if (nw == 0.0) throw DegenerateNormError("class weight row has zero norm");
        logits[j] = dot({z.data(), z.size()}, w) / (nz * nw);
    }
    return logits;
}

ModelGrads CosineClassifier::backward(std::span<const double> x, std::span<const double> upstream) const {
    if (upstream.size() != dims_.num_classes) throw InvalidArgError("upstream dim mismatch");
    const auto z = embed(x);
    const std::size_t zd = z.size();
    const double nz = norm2(z);
    if (nz == 0.0) throw DegenerateNormError("embedded input has zero norm");

    std::vector<double> z_hat(zd);
    for (std::size_t k = 0; k < zd; ++k) z_hat[k] = z[k] / nz;

    ModelGrads g = zero_grads();
    // accumulated d(sum upstream_j logit_j)/dz, needed only with an embedding
    std::vector<double> g_z(has_embedding() ? zd : 0, 0.0);

    for (std::size_t j = 0; j < dims_.num_classes; ++j) {
        const auto w = class_weights_.row(j);
        const double nw = norm2(w);
        if (nw == 0.0) throw DegenerateNormError("class weight row has zero norm");
        const double u = upstream[j];
        double cosj = 0.0;
        for (std::size_t k = 0; k < zd; ++k) cosj += z_hat[k] * w[k] / nw;

        // d logit_j / d W_j = (z_hat - cos_j * w_hat) / ||W_j||
        auto gw = g.class_weights.row(j);
        for (std::size_t k = 0; k < zd; ++k) {
            const double w_hat_k = w[k] / nw;
            gw[k] = u * (z_hat[k] - cosj * w_hat_k) / nw;
        }

        if (!g_z.empty()) {
            // d logit_j / d z = (w_hat - cos_j * z_hat) / ||z||
            for (std::size_t k = 0; k < zd; ++k)
                g_z[k] += u * (w[k] / nw - cosj * z_hat[k]) / nz;
        }
    }

    if (has_embedding()) {
        // relu backward: rows with non-positive pre-activation pass nothing
        for (std::size_t h = 0; h < dims_.hidden_dim; ++h) {
            if (z[h] <= 0.0) continue;
            auto ge = g.embed_weights.row(h);
            for (std::size_t k = 0; k < dims_.feature_dim; ++k) ge[k] = g_z[h] * x[k];
        }
    }
    return g;
}

ModelGrads CosineClassifier::zero_grads() const {
    ModelGrads g;
    g.class_weights = Matrix(class_weights_.rows(), class_weights_.cols());
    if (has_embedding()) g.embed_weights = Matrix(embed_weights_.rows(), embed_weights_.cols());
    return g;
}

std::string CosineClassifier::to_checkpoint_json() const {
    json j;
    j["format"] = "longtail.model/1";
    j["feature_dim"] = dims_.feature_dim;
    j["num_classes"] = dims_.num_classes;
    j["hidden_dim"] = dims_.hidden_dim;
    j["seed"] = seed_;
    j["class_weights"] = class_weights_.data();
    j["embed_weights"] = embed_weights_.data();
    return j.dump(2) + "\n";
}

CosineClassifier CosineClassifier::from_checkpoint_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed checkpoint: ") + e.what());
    }
    CosineClassifier m;
    try {
        m.dims_.feature_dim = j.at("feature_dim").get<std::size_t>();
        m.dims_.num_classes = j.at("num_classes").get<std::size_t>();
        m.dims_.hidden_dim = j.at("hidden_dim").get<std::size_t>();
        m.seed_ = j.at("seed").get<std::uint64_t>();
        const auto cw = j.at("class_weights").get<std::vector<double>>();
        const std::size_t in_dim = m.dims_.hidden_dim > 0 ? m.dims_.hidden_dim : m.dims_.feature_dim;
        if (cw.size() != m.dims_.num_classes * in_dim)
            throw IoError("checkpoint class_weights size mismatch");
        m.class_weights_ = Matrix(m.dims_.num_classes, in_dim);
        m.class_weights_.data() = cw;
        const auto ew = j.at("embed_weights").get<std::vector<double>>();
        if (m.dims_.hidden_dim > 0) {
            if (ew.size() != m.dims_.hidden_dim * m.dims_.feature_dim)
                throw IoError("checkpoint embed_weights size mismatch");
            m.embed_weights_ = Matrix(m.dims_.hidden_dim, m.dims_.feature_dim);
            m.embed_weights_.data() = ew;
        } else if (!ew.empty()) {
            throw IoError("checkpoint declares no hidden layer but has embed weights");
        }
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed checkpoint: ") + e.what());
    }
    m.dims_.validate();
    return m;
}

}  // namespace longtail
