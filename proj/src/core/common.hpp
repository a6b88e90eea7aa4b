#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace longtail {

// Error taxonomy. Every failure surfaced through the C API maps 1:1 onto
// one of these; the CLI turns them into process exit codes.
enum class ErrorCode {
    invalid_arg = 1,
    invalid_spec = 2,
    numeric_input = 3,
    degenerate_norm = 4,
    divergence = 5,
    io = 6,
    missing_artifact = 7,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

struct InvalidArgError : Error {
    explicit InvalidArgError(const std::string& m) : Error(ErrorCode::invalid_arg, m) {}
};
struct InvalidSpecError : Error {
    explicit InvalidSpecError(const std::string& m) : Error(ErrorCode::invalid_spec, m) {}
};
struct NumericInputError : Error {
    explicit NumericInputError(const std::string& m) : Error(ErrorCode::numeric_input, m) {}
};
struct DegenerateNormError : Error {
    explicit DegenerateNormError(const std::string& m) : Error(ErrorCode::degenerate_norm, m) {}
};
struct DivergenceError : Error {
    explicit DivergenceError(const std::string& m) : Error(ErrorCode::divergence, m) {}
};
struct IoError : Error {
    explicit IoError(const std::string& m) : Error(ErrorCode::io, m) {}
};
struct MissingArtifactError : Error {
    explicit MissingArtifactError(const std::string& m) : Error(ErrorCode::missing_artifact, m) {}
};

// Dense row-major matrix. Small enough here that a flat vector beats any
// linear-algebra dependency, and the accumulation order stays pinned for
// bit-exact reproducibility.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Deterministic random source. mt19937_64 output is fully specified by the
// standard; the uniform/normal mappings below are ours, so streams are
// identical across platforms and standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double next_unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double next_uniform(double lo, double hi) { return lo + next_unit() * (hi - lo); }

    // Box-Muller; the spare value is cached so draws come in a fixed sequence.
    double next_gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = next_unit();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // bounded draw without modulo bias
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % bound;
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Fisher-Yates with our own bounded draws (std::shuffle is
// implementation-defined).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes);

// decorrelates the per-purpose streams derived from one run seed
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream);

// shortest round-trip decimal form of a double ("%.17g" pruned); used by
// every CSV writer so reruns are byte-identical
std::string format_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace longtail
