#include "xdcl/data.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "xdcl/error.hpp"
#include "xdcl/rng.hpp"

namespace xdcl {

namespace {

constexpr std::uint64_t kProtoStream = 0x70726f74ULL;
constexpr std::uint64_t kDomainStream = 0x646f6d31ULL;
constexpr std::uint64_t kNoiseStream = 0x6e6f6973ULL;
constexpr double kPrototypeRadius = 1.5;
constexpr double kTranslationScale = 2.0;
constexpr double kRotationScale = 0.5;
constexpr double kShapeSpread = 1.5;  // anisotropy of per-class noise shapes

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<double> unit_sphere_point(std::size_t dim, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(dim);
    double norm2 = 0.0;
    do {
        norm2 = 0.0;
        for (double& x : v) {
            x = normal(rng);
            norm2 += x * x;
        }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
    return v;
}

// Orthogonal matrix through the Cayley transform of a random skew-symmetric
// matrix scaled by the shift strength: exactly the identity at strength 0.
// Entries shrink with 1/sqrt(dim) so the rotation angle tracks the strength
// rather than the dimension.
Eigen::MatrixXd domain_rotation(std::size_t dim, double strength, Rng& rng) {
    const auto n = static_cast<Eigen::Index>(dim);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double scale = kRotationScale * strength / std::sqrt(static_cast<double>(dim));
    Eigen::MatrixXd skew = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = scale * normal(rng);
            skew(i, j) = v;
            skew(j, i) = -v;
        }
    }
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
    return (eye - skew).partialPivLu().solve(eye + skew);
}

}  // namespace

std::size_t DomainDataset::unseen_domain_index() const {
    if (!has_unseen_domain()) {
        throw DataError("DomainDataset: no unseen domain (raw dataset; apply hold_out_domain)");
    }
    return train.size();
}

void validate_dataset(const DomainDataset& dataset) {
    if (dataset.feature_dim == 0) throw DataError("dataset: feature_dim is zero");
    if (dataset.num_classes == 0) throw DataError("dataset: no classes");
    if (dataset.train.empty()) throw DataError("dataset: no train domains");
    if (dataset.test.size() != dataset.train.size() &&
        dataset.test.size() != dataset.train.size() + 1) {
        throw DataError("dataset: test domain count must equal train count (raw) or exceed it by one");
    }
    auto check_group = [&](const std::vector<Sample>& group, const char* split, std::size_t dom) {
        for (const Sample& s : group) {
            if (s.features.size() != dataset.feature_dim) {
                throw DataError(std::string("dataset: ") + split + " sample in domain " +
                                std::to_string(dom) + " has " + std::to_string(s.features.size()) +
                                " features, expected " + std::to_string(dataset.feature_dim));
            }
            if (s.label < 0 || static_cast<std::size_t>(s.label) >= dataset.num_classes) {
                throw DataError(std::string("dataset: ") + split + " label " +
                                std::to_string(s.label) + " outside [0, " +
                                std::to_string(dataset.num_classes) + ")");
            }
            for (double v : s.features) {
                if (!std::isfinite(v)) {
                    throw DataError(std::string("dataset: non-finite feature in ") + split +
                                    " domain " + std::to_string(dom));
                }
            }
        }
    };
    for (std::size_t dom = 0; dom < dataset.train.size(); ++dom) {
        check_group(dataset.train[dom], "train", dom);
    }
    for (std::size_t dom = 0; dom < dataset.test.size(); ++dom) {
        check_group(dataset.test[dom], "test", dom);
    }

    std::vector<std::string> missing;
    for (std::size_t dom = 0; dom < dataset.train.size(); ++dom) {
        std::vector<bool> seen(dataset.num_classes, false);
        for (const Sample& s : dataset.train[dom]) seen[static_cast<std::size_t>(s.label)] = true;
        for (std::size_t c = 0; c < dataset.num_classes; ++c) {
            if (!seen[c]) {
                missing.push_back("(class " + std::to_string(c) + ", domain " + std::to_string(dom) +
                                  ")");
            }
        }
    }
    if (!missing.empty()) {
        std::string msg = "dataset: empty train cells:";
        for (const auto& m : missing) msg += " " + m;
        throw DataError(msg);
    }
}

DomainDataset generate_synthetic(const SyntheticConfig& config) {
    if (config.num_classes < 2) throw ConfigError("generate_synthetic: need at least 2 classes");
    if (config.num_domains < 2) throw ConfigError("generate_synthetic: need at least 2 domains");
    if (config.feature_dim == 0) throw ConfigError("generate_synthetic: feature_dim must be positive");
    if (config.per_cell_count == 0) throw ConfigError("generate_synthetic: per_cell_count must be positive");
    if (config.shift_strength < 0.0 || config.noise_sigma < 0.0) {
        throw ConfigError("generate_synthetic: shift_strength and noise_sigma must be nonnegative");
    }

    const std::size_t d = config.feature_dim;
    const auto nd = static_cast<Eigen::Index>(d);

    // Class prototypes on a sphere, each class with its own noise shape:
    // an anisotropic Gaussian whose orientation is fixed across domains,
    // normalized so noise_sigma keeps its meaning as the average scale.
    std::vector<Eigen::VectorXd> prototypes(config.num_classes);
    std::vector<Eigen::MatrixXd> noise_shapes(config.num_classes);
    {
        Rng rng = make_rng(config.seed, {kProtoStream});
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> spread(1.0 / kShapeSpread, kShapeSpread);
        for (std::size_t c = 0; c < config.num_classes; ++c) {
            auto point = unit_sphere_point(d, rng);
            prototypes[c] = Eigen::VectorXd(nd);
            for (Eigen::Index i = 0; i < nd; ++i) {
                prototypes[c](i) = kPrototypeRadius * point[static_cast<std::size_t>(i)];
            }
            Eigen::MatrixXd gaussian(nd, nd);
            for (Eigen::Index i = 0; i < nd; ++i) {
                for (Eigen::Index j = 0; j < nd; ++j) gaussian(i, j) = normal(rng);
            }
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
            Eigen::MatrixXd basis = qr.householderQ();
            Eigen::VectorXd axes(nd);
            double sum_sq = 0.0;
            for (Eigen::Index i = 0; i < nd; ++i) {
                axes(i) = spread(rng);
                sum_sq += axes(i) * axes(i);
            }
            axes *= std::sqrt(static_cast<double>(d) / sum_sq);
            noise_shapes[c] = basis * axes.asDiagonal();
        }
    }

    DomainDataset dataset;
    dataset.feature_dim = d;
    dataset.num_classes = config.num_classes;
    dataset.train.resize(config.num_domains);
    dataset.test.resize(config.num_domains);

    for (std::size_t dom = 0; dom < config.num_domains; ++dom) {
        Rng domain_rng = make_rng(config.seed, {kDomainStream, dom});
        const Eigen::MatrixXd rotation = domain_rotation(d, config.shift_strength, domain_rng);
        std::uniform_real_distribution<double> scale_dist(1.0 - config.shift_strength,
                                                          1.0 + config.shift_strength);
        Eigen::VectorXd scales(nd);
        for (Eigen::Index i = 0; i < nd; ++i) scales(i) = scale_dist(domain_rng);
        auto direction = unit_sphere_point(d, domain_rng);
        Eigen::VectorXd translation(nd);
        for (Eigen::Index i = 0; i < nd; ++i) {
            translation(i) = kTranslationScale * config.shift_strength * direction[static_cast<std::size_t>(i)];
        }

        for (std::size_t c = 0; c < config.num_classes; ++c) {
            const Eigen::VectorXd center =
                rotation * scales.cwiseProduct(prototypes[c]) + translation;
            Rng noise_rng = make_rng(config.seed, {kNoiseStream, c, dom});
            std::normal_distribution<double> noise(0.0, 1.0);
            const std::size_t count = config.per_cell_count;
            const std::size_t train_count = std::max<std::size_t>(1, count * 4 / 5);
            Eigen::VectorXd z(nd);
            for (std::size_t i = 0; i < count; ++i) {
                for (Eigen::Index j = 0; j < nd; ++j) z(j) = noise(noise_rng);
                const Eigen::VectorXd x = center + config.noise_sigma * (noise_shapes[c] * z);
                Sample s;
                s.label = static_cast<int>(c);
                s.domain_id = static_cast<int>(dom);
                s.features.resize(d);
                for (std::size_t j = 0; j < d; ++j) s.features[j] = x(static_cast<Eigen::Index>(j));
                (i < train_count ? dataset.train[dom] : dataset.test[dom]).push_back(std::move(s));
            }
        }
    }
    validate_dataset(dataset);
    return dataset;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_feature(const std::string& text, std::size_t lineno, std::size_t col) {
    std::size_t consumed = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &consumed);
    } catch (const std::exception&) {
        throw DataError("load_features_table: line " + std::to_string(lineno) + ", column " +
                        std::to_string(col + 1) + ": not a number: '" + text + "'");
    }
    if (consumed != text.size()) {
        throw DataError("load_features_table: line " + std::to_string(lineno) + ", column " +
                        std::to_string(col + 1) + ": trailing characters in '" + text + "'");
    }
    if (!std::isfinite(v)) {
        throw DataError("load_features_table: line " + std::to_string(lineno) + ", column " +
                        std::to_string(col + 1) + ": non-finite value");
    }
    return v;
}

int parse_int_field(const std::string& text, std::size_t lineno, const char* name) {
    try {
        std::size_t consumed = 0;
        const int v = std::stoi(text, &consumed);
        if (consumed != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw DataError("load_features_table: line " + std::to_string(lineno) + ": bad " + name +
                        " '" + text + "'");
    }
}

}  // namespace

DomainDataset load_features_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_features_table: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("load_features_table: empty file " + path);
    const auto header = split_csv_line(line);
    if (header.size() < 4 || header[header.size() - 3] != "label" ||
        header[header.size() - 2] != "domain" || header.back() != "split") {
        throw DataError(
            "load_features_table: header must end with 'label,domain,split' after at least one "
            "feature column");
    }
    const std::size_t d = header.size() - 3;

    std::vector<Sample> train_rows, test_rows;
    int max_label = -1, max_domain = -1;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw DataError("load_features_table: line " + std::to_string(lineno) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        }
        Sample s;
        s.features.resize(d);
        for (std::size_t j = 0; j < d; ++j) s.features[j] = parse_feature(fields[j], lineno, j);
        s.label = parse_int_field(fields[d], lineno, "label");
        s.domain_id = parse_int_field(fields[d + 1], lineno, "domain");
        if (s.label < 0) {
            throw DataError("load_features_table: line " + std::to_string(lineno) +
                            ": negative label");
        }
        if (s.domain_id < 0) {
            throw DataError("load_features_table: line " + std::to_string(lineno) +
                            ": negative domain");
        }
        max_label = std::max(max_label, s.label);
        max_domain = std::max(max_domain, s.domain_id);
        const std::string& split = fields[d + 2];
        if (split == "train") {
            train_rows.push_back(std::move(s));
        } else if (split == "test") {
            test_rows.push_back(std::move(s));
        } else {
            throw DataError("load_features_table: line " + std::to_string(lineno) +
                            ": split must be 'train' or 'test', got '" + split + "'");
        }
    }
    if (max_label < 0 || max_domain < 0) {
        throw DataError("load_features_table: no data rows in " + path);
    }

    DomainDataset dataset;
    dataset.feature_dim = d;
    dataset.num_classes = static_cast<std::size_t>(max_label) + 1;
    dataset.train.resize(static_cast<std::size_t>(max_domain) + 1);
    dataset.test.resize(static_cast<std::size_t>(max_domain) + 1);
    for (auto& s : train_rows) dataset.train[static_cast<std::size_t>(s.domain_id)].push_back(std::move(s));
    for (auto& s : test_rows) dataset.test[static_cast<std::size_t>(s.domain_id)].push_back(std::move(s));
    validate_dataset(dataset);
    return dataset;
}

void save_features_table(const DomainDataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_features_table: cannot open " + path);
    for (std::size_t j = 0; j < dataset.feature_dim; ++j) out << "f" << j << ",";
    out << "label,domain,split\n";
    auto write_rows = [&](const std::vector<std::vector<Sample>>& groups, const char* split) {
        for (const auto& group : groups) {
            for (const Sample& s : group) {
                for (double v : s.features) out << format_double(v) << ",";
                out << s.label << "," << s.domain_id << "," << split << "\n";
            }
        }
    };
    write_rows(dataset.train, "train");
    write_rows(dataset.test, "test");
    if (!out) throw DataError("save_features_table: write failed for " + path);
}

DomainDataset hold_out_domain(const DomainDataset& raw, std::size_t held_out) {
    if (raw.has_unseen_domain()) {
        throw DataError("hold_out_domain: dataset already has an unseen domain");
    }
    if (held_out >= raw.train.size()) {
        throw DataError("hold_out_domain: domain " + std::to_string(held_out) + " out of range [0, " +
                        std::to_string(raw.train.size()) + ")");
    }
    DomainDataset view;
    view.feature_dim = raw.feature_dim;
    view.num_classes = raw.num_classes;
    auto renumber = [](std::vector<Sample> group, int new_id) {
        for (Sample& s : group) s.domain_id = new_id;
        return group;
    };
    int next = 0;
    for (std::size_t dom = 0; dom < raw.train.size(); ++dom) {
        if (dom == held_out) continue;
        view.train.push_back(renumber(raw.train[dom], next));
        view.test.push_back(renumber(raw.test[dom], next));
        ++next;
    }
    std::vector<Sample> unseen = raw.train[held_out];
    unseen.insert(unseen.end(), raw.test[held_out].begin(), raw.test[held_out].end());
    view.test.push_back(renumber(std::move(unseen), next));
    return view;
}

TaskStream split_tasks(const DomainDataset& dataset, std::size_t q, std::uint64_t seed) {
    const std::size_t classes = dataset.num_classes;
    if (q == 0) throw ConfigError("split_tasks: q must be positive");
    if (q > classes) {
        throw ConfigError("split_tasks: q=" + std::to_string(q) + " exceeds " +
                          std::to_string(classes) + " classes");
    }
    std::vector<int> order(classes);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(seed, {0x7461736bULL});
    std::shuffle(order.begin(), order.end(), rng);

    TaskStream stream;
    const std::size_t base = classes / q;
    const std::size_t extra = classes % q;
    std::size_t pos = 0;
    for (std::size_t t = 0; t < q; ++t) {
        const std::size_t size = base + (t < extra ? 1 : 0);
        stream.tasks.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                  order.begin() + static_cast<std::ptrdiff_t>(pos + size));
        pos += size;
    }
    return stream;
}

RehearsalMemory::RehearsalMemory(std::size_t capacity_per_cell, MemoryMode mode, std::uint64_t seed)
    : capacity_(capacity_per_cell), mode_(mode), seed_(seed) {}

void RehearsalMemory::update(std::span<const Sample> task_train_data) {
    if (capacity_ == 0) return;
    // Group incoming samples by cell key, in input order.
    std::map<std::pair<int, int>, std::vector<const Sample*>> incoming;
    for (const Sample& s : task_train_data) {
        const int domain_key = mode_ == MemoryMode::per_class_per_domain ? s.domain_id : 0;
        incoming[{s.label, domain_key}].push_back(&s);
    }
    for (auto& [key, pool] : incoming) {
        if (cells_.contains(key)) continue;  // earlier tasks' exemplars stay fixed
        Rng rng = make_rng(seed_, {0x6d656d6fULL, static_cast<std::uint64_t>(key.first),
                                   static_cast<std::uint64_t>(key.second)});
        std::vector<std::size_t> order(pool.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t take = std::min(capacity_, pool.size());
        std::vector<Sample> chosen;
        chosen.reserve(take);
        for (std::size_t i = 0; i < take; ++i) chosen.push_back(*pool[order[i]]);
        cells_.emplace(key, std::move(chosen));
    }
    flat_.clear();
    for (const auto& [key, samples] : cells_) {
        flat_.insert(flat_.end(), samples.begin(), samples.end());
    }
}

std::vector<std::vector<Sample>> make_batches(std::span<const Sample> current,
                                              std::span<const Sample> memory,
                                              std::size_t batch_size, std::uint64_t seed,
                                              std::size_t epoch) {
    if (batch_size == 0) throw ConfigError("make_batches: batch_size must be positive");
    std::vector<Sample> pool;
    pool.reserve(current.size() + memory.size());
    pool.insert(pool.end(), current.begin(), current.end());
    pool.insert(pool.end(), memory.begin(), memory.end());
    if (pool.empty()) throw ValueError("make_batches: no samples to batch");

    Rng rng = make_rng(seed, {0x62617463ULL, epoch});
    std::shuffle(pool.begin(), pool.end(), rng);

    std::vector<std::vector<Sample>> batches;
    for (std::size_t start = 0; start < pool.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, pool.size());
        batches.emplace_back(pool.begin() + static_cast<std::ptrdiff_t>(start),
                             pool.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

}  // namespace xdcl
