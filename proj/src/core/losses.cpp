#include "core/losses.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace longtail {

using nlohmann::json;

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "ce") return LossKind::ce;
    if (s == "qf") return LossKind::qf_only;
    if (s == "df") return LossKind::df_only;
    if (s == "ldam") return LossKind::ldam;
    if (s == "df-ldam") return LossKind::df_times_ldam;
    if (s == "ala") return LossKind::ala;
    if (s == "focal") return LossKind::focal;
    throw InvalidSpecError("unknown loss kind: " + s);
}

std::string loss_kind_to_string(LossKind k) {
    switch (k) {
        case LossKind::ce: return "ce";
        case LossKind::qf_only: return "qf";
        case LossKind::df_only: return "df";
        case LossKind::ldam: return "ldam";
        case LossKind::df_times_ldam: return "df-ldam";
        case LossKind::ala: return "ala";
        case LossKind::focal: return "focal";
    }
    throw InvalidSpecError("unknown loss kind enum value");
}

void LossSpec::validate() const {
    if (!(scale_s > 0.0)) throw InvalidSpecError("scale_s must be > 0");
    if (!(ldam_max_margin > 0.0)) throw InvalidSpecError("ldam_max_margin must be > 0");
    if (!(focal_gamma >= 0.0)) throw InvalidSpecError("focal_gamma must be >= 0");
    if (qf_log_base != 0.0 && !(qf_log_base > 1.0))
        throw InvalidSpecError("qf_log_base must be > 1 (or 0 for natural log)");
}

namespace {

void check_finite(std::span<const double> logits) {
    for (double v : logits)
        if (!std::isfinite(v)) throw NumericInputError("non-finite logit");
}

// loss and gradient of -log softmax(z)[y] w.r.t. z, max-stabilized
struct SoftmaxCE {
    double loss;
    std::vector<double> probs;
};

SoftmaxCE stable_softmax_ce(std::span<const double> z, std::size_t y) {
    const double m = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    std::vector<double> probs(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) {
        probs[j] = std::exp(z[j] - m);
        denom += probs[j];
    }
    for (auto& p : probs) p /= denom;
    const double loss = std::log(denom) - (z[y] - m);
    return {loss, std::move(probs)};
}

}  // namespace

LossResult ce_loss(std::span<const double> logits, std::size_t y, double s) {
    check_finite(logits);
    if (y >= logits.size()) throw InvalidArgError("target index out of range");
    std::vector<double> z(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) z[j] = s * logits[j];
    auto sm = stable_softmax_ce(z, y);
    LossResult out;
    out.loss = sm.loss;
    out.grad_logits.resize(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j)
        out.grad_logits[j] = s * (sm.probs[j] - (j == y ? 1.0 : 0.0));
    return out;
}

LossResult la_loss(std::span<const double> logits, std::size_t y, const AdjustingTerm& a, double s) {
    check_finite(logits);
    if (y >= logits.size()) throw InvalidArgError("target index out of range");
    if (a.values.size() != logits.size()) throw InvalidArgError("adjusting term size mismatch");
    for (double v : a.values) {
        if (!std::isfinite(v)) throw NumericInputError("non-finite adjusting term");
        if (v < 0.0) throw NumericInputError("adjusting term must be non-negative");
    }
    std::vector<double> z(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) {
        const double applied = (!a.target_only || j == y) ? a.values[j] : 0.0;
        z[j] = s * (logits[j] - applied);
    }
    auto sm = stable_softmax_ce(z, y);
    LossResult out;
    out.loss = sm.loss;
    out.grad_logits.resize(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j)
        out.grad_logits[j] = s * (sm.probs[j] - (j == y ? 1.0 : 0.0));
    out.adjusting_term = a.values[y];
    return out;
}

std::vector<double> quantity_factor(std::span<const std::int64_t> counts, double log_base) {
    if (counts.empty()) throw InvalidArgError("counts must be non-empty");
    std::int64_t min_c = counts[0];
    for (auto v : counts) {
        if (v < 1) throw InvalidArgError("counts must be positive");
        min_c = std::min(min_c, v);
    }
    const double log_scale = log_base == 0.0 ? 1.0 : std::log(log_base);
    std::vector<double> qf(counts.size());
    for (std::size_t j = 0; j < counts.size(); ++j) {
        const double ratio = static_cast<double>(counts[j]) / static_cast<double>(min_c);
        qf[j] = log_scale / std::log(ratio + 1.0);
    }
    return qf;
}

double difficulty_factor(double cos_target) {
    if (!std::isfinite(cos_target)) throw NumericInputError("non-finite cosine");
    if (cos_target < -1.0 - 1e-9 || cos_target > 1.0 + 1e-9)
        throw NumericInputError("cosine outside [-1, 1]");
    const double c = std::clamp(cos_target, -1.0, 1.0);
    return (1.0 - c) / 2.0;
}

double ala_adjust(double cos_target, double qf_target) {
    if (!(qf_target > 0.0)) throw InvalidArgError("quantity factor must be > 0");
    return difficulty_factor(cos_target) * qf_target;
}

LossResult ala_loss(std::span<const double> logits, std::size_t y,
                    std::span<const std::int64_t> counts, double s) {
    LossSpec spec;
    spec.kind = LossKind::ala;
    spec.scale_s = s;
    return eval_loss(spec, logits, y, counts);
}

std::vector<double> ldam_adjust(std::span<const std::int64_t> counts, double max_margin) {
    if (counts.empty()) throw InvalidArgError("counts must be non-empty");
    if (!(max_margin > 0.0)) throw InvalidArgError("max_margin must be > 0");
    std::int64_t min_c = counts[0];
    for (auto v : counts) {
        if (v < 1) throw InvalidArgError("counts must be positive");
        min_c = std::min(min_c, v);
    }
    // K / min^(1/4) is the largest entry, pinned to max_margin
    std::vector<double> a(counts.size());
    for (std::size_t j = 0; j < counts.size(); ++j)
        a[j] = max_margin * std::pow(static_cast<double>(min_c) / static_cast<double>(counts[j]), 0.25);
    return a;
}

LossResult focal_loss(std::span<const double> logits, std::size_t y, double s, double gamma) {
    check_finite(logits);
    if (y >= logits.size()) throw InvalidArgError("target index out of range");
    if (!(gamma >= 0.0)) throw InvalidArgError("gamma must be >= 0");
    std::vector<double> z(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) z[j] = s * logits[j];
    auto sm = stable_softmax_ce(z, y);
    const double p_y = sm.probs[y];
    const double log_p_y = -sm.loss;
    const double t = std::max(0.0, 1.0 - p_y);

    LossResult out;
    out.loss = -std::pow(t, gamma) * log_p_y;
    // dL/dp_y * p_y, kept in product form so gamma = 0 degenerates to the
    // exact cross-entropy arithmetic; the t^(gamma-1) term vanishes in the
    // t -> 0 limit
    double factor = -std::pow(t, gamma);
    if (gamma > 0.0 && t > 0.0) factor += gamma * std::pow(t, gamma - 1.0) * p_y * log_p_y;
    out.grad_logits.resize(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j)
        out.grad_logits[j] = s * factor * ((j == y ? 1.0 : 0.0) - sm.probs[j]);
    return out;
}

LossResult eval_loss(const LossSpec& spec, std::span<const double> logits, std::size_t y,
                     std::span<const std::int64_t> counts, bool use_df, bool use_qf) {
    spec.validate();
    check_finite(logits);
    if (y >= logits.size()) throw InvalidArgError("target index out of range");

    const double s = spec.scale_s;
    switch (spec.kind) {
        case LossKind::ce:
            return ce_loss(logits, y, s);
        case LossKind::focal:
            return focal_loss(logits, y, s, spec.focal_gamma);
        default:
            break;
    }

    const bool needs_counts = spec.kind != LossKind::df_only;
    if (needs_counts && counts.empty()) throw InvalidArgError("loss kind requires class counts");
    if (needs_counts && counts.size() != logits.size())
        throw InvalidArgError("counts/logits size mismatch");

    // class-level factor
    double class_term = 1.0;
    switch (spec.kind) {
        case LossKind::qf_only:
        case LossKind::ala:
            class_term = quantity_factor(counts, spec.qf_log_base)[y];
            break;
        case LossKind::ldam:
        case LossKind::df_times_ldam:
            class_term = ldam_adjust(counts, spec.ldam_max_margin)[y];
            break;
        default:
            break;
    }

    // instance-level factor, detached: it enters only as a constant in A
    const bool kind_uses_df = spec.kind == LossKind::df_only || spec.kind == LossKind::ala ||
                              spec.kind == LossKind::df_times_ldam;
    double df = kind_uses_df ? difficulty_factor(logits[y]) : 0.0;

    double a_y = 0.0;
    switch (spec.kind) {
        case LossKind::qf_only:
        case LossKind::ldam:
            a_y = use_qf ? class_term : 1.0;
            break;
        case LossKind::df_only:
            a_y = use_df ? df : 1.0;
            break;
        case LossKind::ala:
        case LossKind::df_times_ldam:
            a_y = (use_df ? df : 1.0) * (use_qf ? class_term : 1.0);
            break;
        default:
            break;
    }

    AdjustingTerm a;
    a.values.assign(logits.size(), 0.0);
    a.values[y] = a_y;
    a.target_only = true;
    auto out = la_loss(logits, y, a, s);
    out.difficulty = df;
    return out;
}

LossSpec loss_spec_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidSpecError(std::string("malformed loss spec json: ") + e.what());
    }
    LossSpec spec;
    try {
        spec.kind = loss_kind_from_string(j.at("kind").get<std::string>());
        if (j.contains("scale")) spec.scale_s = j.at("scale").get<double>();
        if (j.contains("ldam_max_margin")) spec.ldam_max_margin = j.at("ldam_max_margin").get<double>();
        if (j.contains("focal_gamma")) spec.focal_gamma = j.at("focal_gamma").get<double>();
        if (j.contains("qf_log_base")) spec.qf_log_base = j.at("qf_log_base").get<double>();
    } catch (const json::exception& e) {
        throw InvalidSpecError(std::string("malformed loss spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

std::string loss_spec_to_json_text(const LossSpec& spec) {
    json j;
    j["kind"] = loss_kind_to_string(spec.kind);
    j["scale"] = spec.scale_s;
    j["ldam_max_margin"] = spec.ldam_max_margin;
    j["focal_gamma"] = spec.focal_gamma;
    j["qf_log_base"] = spec.qf_log_base;
    return j.dump();
}

}  // namespace longtail
