#include "xdcl/msl_head.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "xdcl/error.hpp"
#include "xdcl/rng.hpp"

namespace xdcl {

namespace {

void require_feature_vector(const Tensor& h, std::size_t n, const char* what) {
    if (h.shape().size() != 1 || h.size() != n) {
        throw ShapeError(std::string(what) + ": expected feature vector [" + std::to_string(n) +
                         "], got " + shape_str(h.shape()));
    }
}

void require_symmetric(const Tensor& sigma, const char* what) {
    if (sigma.shape().size() != 2 || sigma.rows() != sigma.cols()) {
        throw ShapeError(std::string(what) + ": sigma must be square, got " +
                         shape_str(sigma.shape()));
    }
    const std::size_t n = sigma.rows();
    const auto sv = sigma.values();
    double max_abs = 0.0;
    for (double v : sv) max_abs = std::max(max_abs, std::abs(v));
    const double tol = 1e-9 * (1.0 + max_abs);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(sv[i * n + j] - sv[j * n + i]) > tol) {
                throw ValueError(std::string(what) + ": sigma asymmetric at (" + std::to_string(i) +
                                 "," + std::to_string(j) + ")");
            }
        }
    }
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::vector<Tensor> MslHead::parameters() const {
    std::vector<Tensor> out;
    out.reserve(metrics.size() * 2);
    for (const auto& m : metrics) {
        out.push_back(m.L);
        if (kind == HeadKind::mahalanobis) out.push_back(m.b);
    }
    return out;
}

MslHead MslHead::clone() const {
    MslHead copy;
    copy.kind = kind;
    copy.feature_dim = feature_dim;
    copy.rank = rank;
    copy.metrics.reserve(metrics.size());
    for (const auto& m : metrics) copy.metrics.push_back(m.clone());
    return copy;
}

std::size_t default_rank(std::size_t feature_dim) {
    return feature_dim >= 64 ? 64 : feature_dim;
}

MslHead make_head(HeadKind kind, std::size_t feature_dim, std::size_t rank) {
    if (feature_dim == 0) throw ConfigError("make_head: feature_dim must be positive");
    if (kind == HeadKind::inner_product) rank = 1;
    if (rank == 0) rank = default_rank(feature_dim);
    if (rank > feature_dim) {
        throw ConfigError("make_head: rank " + std::to_string(rank) + " exceeds feature_dim " +
                          std::to_string(feature_dim));
    }
    MslHead head;
    head.kind = kind;
    head.feature_dim = feature_dim;
    head.rank = rank;
    return head;
}

Tensor similarity_lowrank(const Tensor& h, const ClassMetric& metric, Tape* tape) {
    require_feature_vector(h, metric.b.size(), "similarity_lowrank");
    Tensor residual = sub(h, metric.b, tape);
    Tensor projected = matvec(metric.L, residual, tape);
    return squared_l2_norm(projected, tape);
}

double similarity_fullrank(const Tensor& h, const Tensor& sigma, const Tensor& b) {
    require_symmetric(sigma, "similarity_fullrank");
    const std::size_t n = sigma.rows();
    require_feature_vector(h, n, "similarity_fullrank(h)");
    require_feature_vector(b, n, "similarity_fullrank(b)");
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = h.at(i) - b.at(i);
    const auto sv = sigma.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += sv[i * n + j] * r[j];
        acc += r[i] * row;
    }
    return acc;
}

std::pair<double, double> eigen_identity_check(const Tensor& sigma, const Tensor& residual) {
    require_symmetric(sigma, "eigen_identity_check");
    const std::size_t n = sigma.rows();
    require_feature_vector(residual, n, "eigen_identity_check(residual)");

    Eigen::MatrixXd s(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = sigma.at(i * n + j);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s);
    if (solver.info() != Eigen::Success) {
        throw ValueError("eigen_identity_check: eigendecomposition failed");
    }

    Eigen::VectorXd r(n);
    for (std::size_t i = 0; i < n; ++i) r(static_cast<Eigen::Index>(i)) = residual.at(i);

    const double lhs = r.dot(s * r);

    Eigen::VectorXd y = solver.eigenvectors().transpose() * r;
    double rhs = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double lambda = solver.eigenvalues()(i);
        if (lambda < -1e-9) {
            throw ValueError("eigen_identity_check: PSD violation, eigenvalue " +
                             std::to_string(lambda));
        }
        if (lambda < 0.0) lambda = 0.0;
        rhs += lambda * y(i) * y(i);
    }
    return {lhs, rhs};
}

MslHead head_expand(const MslHead& head, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw ConfigError("head_expand: k must be at least 1");
    MslHead out;
    out.kind = head.kind;
    out.feature_dim = head.feature_dim;
    out.rank = head.rank;
    out.metrics = head.metrics;  // shared handles: old classes untouched

    const double bound = 1.0 / std::sqrt(static_cast<double>(head.feature_dim));
    Rng rng(seed);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < k; ++i) {
        std::vector<double> l(head.rank * head.feature_dim);
        for (double& v : l) v = dist(rng);
        ClassMetric m;
        m.L = Tensor::from({head.rank, head.feature_dim}, std::move(l), true);
        m.b = Tensor::zeros({head.feature_dim}, head.kind == HeadKind::mahalanobis);
        m.class_id = static_cast<int>(head.metrics.size() + i);
        out.metrics.push_back(std::move(m));
    }
    return out;
}

Tensor head_scores(const MslHead& head, const Tensor& h_batch, Tape* tape) {
    if (h_batch.shape().size() != 2 || h_batch.cols() != head.feature_dim) {
        throw ShapeError("head_scores: batch " + shape_str(h_batch.shape()) + " does not match [Bx" +
                         std::to_string(head.feature_dim) + "]");
    }
    if (head.metrics.empty()) throw ValueError("head_scores: head has no classes");
    const std::size_t batch = h_batch.rows();
    std::vector<Tensor> cols;
    cols.reserve(head.metrics.size());
    for (const auto& m : head.metrics) {
        if (head.kind == HeadKind::mahalanobis) {
            Tensor residual = sub(h_batch, broadcast_rows(m.b, batch, tape), tape);
            Tensor projected = matmul(residual, transpose(m.L, tape), tape);
            cols.push_back(rowwise_squared_norm(projected, tape));
        } else {
            Tensor w = reshape(m.L, {head.feature_dim}, tape);
            cols.push_back(matvec(h_batch, w, tape));
        }
    }
    return stack_cols(cols, tape);
}

void save_msl_head(const MslHead& head, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_msl_head: cannot open " + path);
    out << "xdcl-msl-head v1\n";
    out << "kind " << (head.kind == HeadKind::mahalanobis ? "mahalanobis" : "inner_product")
        << "\n";
    out << "classes " << head.num_classes() << " rank " << head.rank << " features "
        << head.feature_dim << "\n";
    for (const auto& m : head.metrics) {
        out << "class " << m.class_id << "\n";
        for (std::size_t i = 0; i < head.rank; ++i) {
            for (std::size_t j = 0; j < head.feature_dim; ++j) {
                if (j > 0) out << ' ';
                out << format_double(m.L.at(i * head.feature_dim + j));
            }
            out << "\n";
        }
        for (std::size_t j = 0; j < head.feature_dim; ++j) {
            if (j > 0) out << ' ';
            out << format_double(m.b.at(j));
        }
        out << "\n";
    }
    if (!out) throw DataError("save_msl_head: write failed for " + path);
}

namespace {

std::vector<double> parse_doubles(const std::string& line, std::size_t expected, std::size_t lineno) {
    std::istringstream is(line);
    std::vector<double> out;
    double v;
    while (is >> v) out.push_back(v);
    if (!is.eof() || out.size() != expected) {
        throw DataError("load_msl_head: line " + std::to_string(lineno) + ": expected " +
                        std::to_string(expected) + " numbers");
    }
    return out;
}

}  // namespace

MslHead load_msl_head(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_msl_head: cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    auto next_line = [&]() {
        if (!std::getline(in, line)) {
            throw DataError("load_msl_head: unexpected end of file at line " +
                            std::to_string(lineno + 1));
        }
        ++lineno;
    };

    next_line();
    if (line != "xdcl-msl-head v1") {
        throw DataError("load_msl_head: unrecognized header '" + line + "'");
    }
    next_line();
    HeadKind kind;
    if (line == "kind mahalanobis") {
        kind = HeadKind::mahalanobis;
    } else if (line == "kind inner_product") {
        kind = HeadKind::inner_product;
    } else {
        throw DataError("load_msl_head: line 2: bad kind line '" + line + "'");
    }
    next_line();
    std::size_t classes = 0, rank = 0, features = 0;
    {
        std::istringstream is(line);
        std::string k1, k2, k3;
        if (!(is >> k1 >> classes >> k2 >> rank >> k3 >> features) || k1 != "classes" ||
            k2 != "rank" || k3 != "features") {
            throw DataError("load_msl_head: line 3: bad dimensions line");
        }
    }
    MslHead head = make_head(kind, features, rank);
    for (std::size_t c = 0; c < classes; ++c) {
        next_line();
        int class_id = 0;
        {
            std::istringstream is(line);
            std::string kw;
            if (!(is >> kw >> class_id) || kw != "class") {
                throw DataError("load_msl_head: line " + std::to_string(lineno) +
                                ": expected 'class <id>'");
            }
        }
        std::vector<double> l;
        l.reserve(rank * features);
        for (std::size_t i = 0; i < rank; ++i) {
            next_line();
            auto row = parse_doubles(line, features, lineno);
            l.insert(l.end(), row.begin(), row.end());
        }
        next_line();
        auto b = parse_doubles(line, features, lineno);
        ClassMetric m;
        m.L = Tensor::from({rank, features}, std::move(l), true);
        m.b = Tensor::from({features}, std::move(b), kind == HeadKind::mahalanobis);
        m.class_id = class_id;
        head.metrics.push_back(std::move(m));
    }
    return head;
}

}  // namespace xdcl
