#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace longtail {

enum class LossKind { ce, qf_only, df_only, ldam, df_times_ldam, ala, focal };

LossKind loss_kind_from_string(const std::string& s);
std::string loss_kind_to_string(LossKind k);

struct LossSpec {
    LossKind kind = LossKind::ce;
    double scale_s = 30.0;
    double ldam_max_margin = 0.5;
    double focal_gamma = 2.0;
    double qf_log_base = 0.0;  // 0 = natural log

    void validate() const;
};

// Per-class adjusting term subtracted inside the softmax. With target_only
// set, classes other than the target are left untouched at application time.
struct AdjustingTerm {
    std::vector<double> values;
    bool target_only = true;
};

struct LossResult {
    double loss = 0.0;
    std::vector<double> grad_logits;
    // applied target adjustment and target difficulty, recorded for traces
    double adjusting_term = 0.0;
    double difficulty = 0.0;
};

// Softmax cross-entropy over s * logits, stabilized by max subtraction.
// grad = s * (softmax - onehot(y)).
LossResult ce_loss(std::span<const double> logits, std::size_t y, double s);

// Adjusted loss: softmax over s * (logits - A_applied); the adjusting term is
// a constant with respect to the logits, so the gradient keeps the
// softmax-minus-onehot form (scaled by s).
LossResult la_loss(std::span<const double> logits, std::size_t y, const AdjustingTerm& a, double s);

// QF[j] = 1 / log(S_j / min(S) + 1); larger for tail classes. log_base 0
// selects the natural log.
std::vector<double> quantity_factor(std::span<const std::int64_t> counts, double log_base = 0.0);

// DF = (1 - cos_target) / 2 in [0, 1]; large for hard instances. Downstream
// gradients must treat this value as a constant: nothing differentiates
// through cos_target. Inputs within 1e-9 of [-1, 1] are clamped, anything
// further out is a domain error.
double difficulty_factor(double cos_target);

// A = DF(cos_target) * QF[target]
double ala_adjust(double cos_target, double qf_target);

// Target-only adjusted loss with A[y] = DF(logits[y]) * QF(counts)[y]; the
// non-target denominator terms use s * logits[j] unmodified.
LossResult ala_loss(std::span<const double> logits, std::size_t y,
                    std::span<const std::int64_t> counts, double s);

// Quarter-power margin baseline: A[j] = K / counts[j]^(1/4), K picked so the
// largest entry equals max_margin.
std::vector<double> ldam_adjust(std::span<const std::int64_t> counts, double max_margin);

// loss = -(1 - p_y)^gamma * log p_y over softmax(s * logits); gamma = 0
// reduces exactly to cross-entropy.
LossResult focal_loss(std::span<const double> logits, std::size_t y, double s, double gamma);

// Dispatch on spec.kind; counts are required by the quantity-bearing kinds.
// use_df / use_qf expose the factor lattice: disabling DF fixes it at 1
// (ala -> qf-only), disabling QF likewise (ala -> df-only).
LossResult eval_loss(const LossSpec& spec, std::span<const double> logits, std::size_t y,
                     std::span<const std::int64_t> counts, bool use_df = true, bool use_qf = true);

LossSpec loss_spec_from_json_text(const std::string& text);
std::string loss_spec_to_json_text(const LossSpec& spec);

}  // namespace longtail
