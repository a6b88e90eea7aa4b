#include "core/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace longtail {

using nlohmann::json;

void LongTailSpec::validate() const {
    if (num_classes < 1) throw InvalidSpecError("num_classes must be >= 1");
    if (n_min < 1) throw InvalidSpecError("n_min must be >= 1");
    if (n_max < n_min) throw InvalidSpecError("n_min must not exceed n_max");
    if (feature_dim < 2) throw InvalidSpecError("feature_dim must be >= 2");
    if (test_per_class < 1) throw InvalidSpecError("test_per_class must be >= 1");
    if (intra_class_sigma.size() != 1 && intra_class_sigma.size() != num_classes)
        throw InvalidSpecError("intra_class_sigma must have 1 or num_classes entries");
    for (double s : intra_class_sigma)
        if (!(s >= 0.0)) throw InvalidSpecError("intra_class_sigma entries must be >= 0");
    for (const auto& cp : confuser_pairs) {
        if (cp.first >= num_classes || cp.second >= num_classes)
            throw InvalidSpecError("confuser pair class index out of range");
        if (cp.first == cp.second) throw InvalidSpecError("confuser pair indices must be distinct");
        if (!(cp.angle > 0.0 && cp.angle <= M_PI))
            throw InvalidSpecError("confuser pair angle must be in (0, pi]");
    }
}

double LongTailSpec::sigma_for(std::size_t j) const {
    return intra_class_sigma.size() == 1 ? intra_class_sigma[0] : intra_class_sigma[j];
}

void Dataset::validate() const {
    if (features.rows() != labels.size()) throw InvalidSpecError("feature/label row mismatch");
    std::vector<std::int64_t> seen(counts.size(), 0);
    for (std::size_t lbl : labels) {
        if (lbl >= counts.size()) throw InvalidSpecError("label out of range");
        ++seen[lbl];
    }
    for (std::size_t j = 0; j < counts.size(); ++j)
        if (seen[j] != counts[j]) throw InvalidSpecError("counts do not match label histogram");
    if (prototypes.rows() != counts.size() || prototypes.cols() != features.cols())
        throw InvalidSpecError("prototype shape mismatch");
    for (std::size_t j = 0; j < prototypes.rows(); ++j)
        if (std::abs(norm2(prototypes.row(j)) - 1.0) > 1e-9)
            throw InvalidSpecError("prototype row is not unit norm");
}

SubsetPartition::Band SubsetPartition::band_of(std::size_t cls) const {
    if (many.count(cls)) return Band::many;
    if (few.count(cls)) return Band::few;
    return Band::medium;
}

std::vector<std::int64_t> class_counts(const LongTailSpec& spec) {
    spec.validate();
    const std::size_t c = spec.num_classes;
    std::vector<std::int64_t> counts(c);
    if (c == 1) {
        counts[0] = spec.n_max;
        return counts;
    }
    const double ratio = static_cast<double>(spec.n_min) / static_cast<double>(spec.n_max);
    for (std::size_t j = 0; j < c; ++j) {
        const double t = static_cast<double>(j) / static_cast<double>(c - 1);
        counts[j] = std::llround(static_cast<double>(spec.n_max) * std::pow(ratio, t));
    }
    counts.front() = spec.n_max;
    counts.back() = spec.n_min;
    return counts;
}

namespace {

std::vector<double> unit_sphere_point(std::size_t dim, Rng& rng) {
    std::vector<double> v(dim);
    double n = 0.0;
    do {
        for (auto& x : v) x = rng.next_gaussian();
        n = norm2(v);
    } while (n < 1e-12);
    for (auto& x : v) x /= n;
    return v;
}

// Rotate the pair's second prototype inside span(a, b) so that the angle
// between them becomes exactly `angle`.
void set_pair_angle(Matrix& prototypes, const ConfuserPair& cp) {
    const auto a = prototypes.row(cp.first);
    auto b = prototypes.row(cp.second);
    const std::size_t d = a.size();

    // in-plane direction orthogonal to a
    std::vector<double> v(d);
    const double ab = dot({a.data(), d}, {b.data(), d});
    for (std::size_t k = 0; k < d; ++k) v[k] = b[k] - ab * a[k];
    double nv = norm2(v);
    if (nv < 1e-9) {
        // b (anti)parallel to a: fall back to the coordinate axis least
        // aligned with a, projected orthogonal
        std::size_t axis = 0;
        for (std::size_t k = 1; k < d; ++k)
            if (std::abs(a[k]) < std::abs(a[axis])) axis = k;
        std::fill(v.begin(), v.end(), 0.0);
        v[axis] = 1.0;
        const double av = a[axis];
        for (std::size_t k = 0; k < d; ++k) v[k] -= av * a[k];
        nv = norm2(v);
    }
    const double ca = std::cos(cp.angle);
    const double sa = std::sin(cp.angle);
    for (std::size_t k = 0; k < d; ++k) b[k] = ca * a[k] + sa * v[k] / nv;
}

void append_class_samples(Matrix& features, std::vector<std::size_t>& labels, std::size_t& row,
                          std::span<const double> prototype, std::size_t cls, std::int64_t n,
                          double sigma, Rng& rng) {
    for (std::int64_t i = 0; i < n; ++i) {
        auto dst = features.row(row);
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = prototype[k] + sigma * rng.next_gaussian();
        labels[row] = cls;
        ++row;
    }
}

}  // namespace

std::pair<Dataset, Dataset> generate(const LongTailSpec& spec) {
    spec.validate();
    const std::size_t c = spec.num_classes;
    const std::size_t d = spec.feature_dim;
    const auto counts = class_counts(spec);

    Rng rng(spec.seed);

    Matrix prototypes(c, d);
    for (std::size_t j = 0; j < c; ++j) {
        const auto p = unit_sphere_point(d, rng);
        std::copy(p.begin(), p.end(), prototypes.row(j).begin());
    }
    for (const auto& cp : spec.confuser_pairs) set_pair_angle(prototypes, cp);

    const std::int64_t total_train = std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
    Dataset train;
    train.features = Matrix(static_cast<std::size_t>(total_train), d);
    train.labels.resize(static_cast<std::size_t>(total_train));
    train.counts = counts;
    train.prototypes = prototypes;

    std::size_t row = 0;
    for (std::size_t j = 0; j < c; ++j)
        append_class_samples(train.features, train.labels, row, prototypes.row(j), j, counts[j],
                             spec.sigma_for(j), rng);

    Dataset test;
    test.features = Matrix(c * static_cast<std::size_t>(spec.test_per_class), d);
    test.labels.resize(c * static_cast<std::size_t>(spec.test_per_class));
    test.counts.assign(c, spec.test_per_class);
    test.prototypes = prototypes;

    row = 0;
    for (std::size_t j = 0; j < c; ++j)
        append_class_samples(test.features, test.labels, row, prototypes.row(j), j,
                             spec.test_per_class, spec.sigma_for(j), rng);

    return {std::move(train), std::move(test)};
}

SubsetPartition partition_by_count(const std::vector<std::int64_t>& counts,
                                   std::int64_t many_threshold, std::int64_t few_threshold) {
    if (counts.empty()) throw InvalidArgError("counts must be non-empty");
    for (auto v : counts)
        if (v < 1) throw InvalidArgError("counts must be positive");
    SubsetPartition p;
    for (std::size_t j = 0; j < counts.size(); ++j) {
        if (counts[j] > many_threshold)
            p.many.insert(j);
        else if (counts[j] <= few_threshold)
            p.few.insert(j);
        else
            p.medium.insert(j);
    }
    return p;
}

void save_dataset_csv(const Dataset& ds, const std::string& csv_path) {
    std::ostringstream out;
    for (std::size_t i = 0; i < ds.num_samples(); ++i) {
        const auto r = ds.features.row(i);
        for (double v : r) out << format_double(v) << ',';
        out << ds.labels[i] << '\n';
    }
    write_text_file(csv_path, out.str());
}

namespace {

json spec_to_json(const LongTailSpec& spec) {
    json j;
    j["num_classes"] = spec.num_classes;
    j["n_max"] = spec.n_max;
    j["n_min"] = spec.n_min;
    j["feature_dim"] = spec.feature_dim;
    j["intra_class_sigma"] = spec.intra_class_sigma;
    json pairs = json::array();
    for (const auto& cp : spec.confuser_pairs) pairs.push_back({cp.first, cp.second, cp.angle});
    j["confuser_pairs"] = pairs;
    j["test_per_class"] = spec.test_per_class;
    j["seed"] = spec.seed;
    return j;
}

LongTailSpec spec_from_json(const json& j) {
    LongTailSpec spec;
    try {
        spec.num_classes = j.at("num_classes").get<std::size_t>();
        spec.n_max = j.at("n_max").get<std::int64_t>();
        spec.n_min = j.at("n_min").get<std::int64_t>();
        spec.feature_dim = j.at("feature_dim").get<std::size_t>();
        const auto& sig = j.at("intra_class_sigma");
        if (sig.is_number())
            spec.intra_class_sigma = {sig.get<double>()};
        else
            spec.intra_class_sigma = sig.get<std::vector<double>>();
        if (j.contains("confuser_pairs"))
            for (const auto& p : j.at("confuser_pairs"))
                spec.confuser_pairs.push_back(
                    {p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>(), p.at(2).get<double>()});
        spec.test_per_class = j.at("test_per_class").get<std::int64_t>();
        spec.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw InvalidSpecError(std::string("malformed dataset spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

json partition_to_json(const SubsetPartition& p) {
    return json{{"many", p.many}, {"medium", p.medium}, {"few", p.few}};
}

}  // namespace

std::string dataset_sidecar_json(const Dataset& ds, const LongTailSpec& spec,
                                 const SubsetPartition& partition, const std::string& kind) {
    json j;
    j["format"] = "longtail.dataset/1";
    j["kind"] = kind;
    j["num_classes"] = ds.num_classes();
    j["feature_dim"] = ds.feature_dim();
    j["num_samples"] = ds.num_samples();
    j["counts"] = ds.counts;
    json protos = json::array();
    for (std::size_t r = 0; r < ds.prototypes.rows(); ++r) {
        const auto row = ds.prototypes.row(r);
        protos.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j["prototypes"] = protos;
    j["spec"] = spec_to_json(spec);
    j["partition"] = partition_to_json(partition);
    const std::string spec_canonical = spec_to_json(spec).dump();
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(spec_canonical)));
    j["dataset_hash"] = hash;
    return j.dump(2) + "\n";
}

Dataset load_dataset(const std::string& csv_path, const std::string& sidecar_path) {
    json side;
    try {
        side = json::parse(read_text_file(sidecar_path));
    } catch (const json::exception& e) {
        throw IoError("malformed dataset sidecar " + sidecar_path + ": " + e.what());
    }

    Dataset ds;
    try {
        const auto c = side.at("num_classes").get<std::size_t>();
        const auto d = side.at("feature_dim").get<std::size_t>();
        const auto n = side.at("num_samples").get<std::size_t>();
        ds.counts = side.at("counts").get<std::vector<std::int64_t>>();
        if (ds.counts.size() != c) throw IoError("sidecar counts length mismatch");
        ds.prototypes = Matrix(c, d);
        const auto& protos = side.at("prototypes");
        for (std::size_t r = 0; r < c; ++r) {
            const auto row = protos.at(r).get<std::vector<double>>();
            if (row.size() != d) throw IoError("sidecar prototype dim mismatch");
            std::copy(row.begin(), row.end(), ds.prototypes.row(r).begin());
        }
        ds.features = Matrix(n, d);
        ds.labels.resize(n);
    } catch (const json::exception& e) {
        throw IoError("malformed dataset sidecar " + sidecar_path + ": " + e.what());
    }

    std::ifstream in(csv_path);
    if (!in) throw IoError("cannot open dataset csv: " + csv_path);
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (row >= ds.num_samples()) throw IoError("dataset csv has more rows than sidecar declares");
        std::istringstream ls(line);
        std::string cell;
        auto dst = ds.features.row(row);
        for (std::size_t k = 0; k < ds.feature_dim(); ++k) {
            if (!std::getline(ls, cell, ',')) throw IoError("dataset csv row too short");
            dst[k] = std::strtod(cell.c_str(), nullptr);
        }
        if (!std::getline(ls, cell, ',')) throw IoError("dataset csv missing label column");
        ds.labels[row] = static_cast<std::size_t>(std::strtoull(cell.c_str(), nullptr, 10));
        ++row;
    }
    if (row != ds.num_samples()) throw IoError("dataset csv has fewer rows than sidecar declares");
    ds.validate();
    return ds;
}

SubsetPartition partition_from_sidecar(const std::string& sidecar_path) {
    try {
        const json side = json::parse(read_text_file(sidecar_path));
        const auto& p = side.at("partition");
        SubsetPartition out;
        for (auto v : p.at("many")) out.many.insert(v.get<std::size_t>());
        for (auto v : p.at("medium")) out.medium.insert(v.get<std::size_t>());
        for (auto v : p.at("few")) out.few.insert(v.get<std::size_t>());
        return out;
    } catch (const json::exception& e) {
        throw IoError("malformed dataset sidecar " + sidecar_path + ": " + e.what());
    }
}

LongTailSpec spec_from_json_text(const std::string& text) {
    try {
        return spec_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw InvalidSpecError(std::string("malformed dataset spec json: ") + e.what());
    }
}

std::string spec_to_json_text(const LongTailSpec& spec) { return spec_to_json(spec).dump(2) + "\n"; }

}  // namespace longtail
