#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace longtail {

struct ModelDims {
    std::size_t feature_dim = 0;
    std::size_t num_classes = 0;
    std::size_t hidden_dim = 0;  // 0 = identity embedding

    void validate() const;
};

struct ModelGrads {
    Matrix class_weights;
    Matrix embed_weights;  // empty for identity embedding

    void add_scaled(const ModelGrads& other, double scale);
    void scale(double s);
};

// Cosine classifier: optional single rectified hidden layer, then
// weight- and feature-normalized zero-bias logits, so every logit is the
// cosine of the angle between the embedded input and a class weight row.
// The bias is identically zero by construction and never a parameter.
class CosineClassifier {
public:
    CosineClassifier() = default;

    // weights uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)); rows with an
    // exactly zero norm are redrawn
    static CosineClassifier init(const ModelDims& dims, std::uint64_t seed);

    const ModelDims& dims() const { return dims_; }
    std::uint64_t seed() const { return seed_; }
    bool has_embedding() const { return dims_.hidden_dim > 0; }

    Matrix& class_weights() { return class_weights_; }
    const Matrix& class_weights() const { return class_weights_; }
    Matrix& embed_weights() { return embed_weights_; }
    const Matrix& embed_weights() const { return embed_weights_; }

    // z(x): identity, or relu(E x)
    std::vector<double> embed(std::span<const double> x) const;

    // logit[j] = <z/||z||, W_j/||W_j||>, each in [-1, 1]. Throws
    // DegenerateNormError on a zero-norm embedded input or weight row.
    std::vector<double> forward(std::span<const double> x) const;

    // Exact gradients of sum_j upstream[j] * logit[j] w.r.t. the weights,
    // chaining through both normalizations:
    //   d(w/||w||)/dw = (I - w_hat w_hat^T) / ||w||
    // applied on the weight side and the feature side.
    ModelGrads backward(std::span<const double> x, std::span<const double> upstream) const;

    ModelGrads zero_grads() const;

    std::string to_checkpoint_json() const;
    static CosineClassifier from_checkpoint_json(const std::string& text);

private:
    ModelDims dims_;
    std::uint64_t seed_ = 0;
    Matrix class_weights_;  // C x (hidden_dim or feature_dim)
    Matrix embed_weights_;  // hidden_dim x feature_dim, empty if identity
};

}  // namespace longtail
