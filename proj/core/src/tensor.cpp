#include "xdcl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>

#include "xdcl/error.hpp"

namespace xdcl {

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) out += "x";
        out += std::to_string(shape[i]);
    }
    out += "]";
    return out;
}

namespace {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

void require_defined(const Tensor& t, const char* what) {
    if (!t.defined()) throw ValueError(std::string(what) + ": undefined tensor");
}

void require_matrix(const Tensor& t, const char* what) {
    require_defined(t, what);
    if (t.shape().size() != 2) {
        throw ShapeError(std::string(what) + ": expected a matrix, got " + shape_str(t.shape()));
    }
}

void require_vector(const Tensor& t, const char* what) {
    require_defined(t, what);
    if (t.shape().size() != 1) {
        throw ShapeError(std::string(what) + ": expected a vector, got " + shape_str(t.shape()));
    }
}

using ImplPtr = std::shared_ptr<detail::TensorImpl>;

Tensor make_result(Shape shape, std::vector<double> values) {
    return Tensor::from(std::move(shape), std::move(values), false);
}

// Accumulation target for a node input; the reverse sweep guarantees the
// buffer exists before the rule runs.
std::vector<double>& grad_of(const ImplPtr& impl) { return impl->grad; }

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->values.assign(shape_numel(shape), 0.0);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("Tensor::from: shape " + shape_str(shape) + " wants " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const Shape& Tensor::shape() const {
    require_defined(*this, "Tensor::shape");
    return impl_->shape;
}

std::size_t Tensor::size() const {
    require_defined(*this, "Tensor::size");
    return impl_->values.size();
}

std::size_t Tensor::rows() const {
    require_matrix(*this, "Tensor::rows");
    return impl_->shape[0];
}

std::size_t Tensor::cols() const {
    require_matrix(*this, "Tensor::cols");
    return impl_->shape[1];
}

std::span<double> Tensor::values() {
    require_defined(*this, "Tensor::values");
    return impl_->values;
}

std::span<const double> Tensor::values() const {
    require_defined(*this, "Tensor::values");
    return impl_->values;
}

double Tensor::at(std::size_t i) const { return values()[i]; }
double& Tensor::at(std::size_t i) { return values()[i]; }

double Tensor::value() const {
    if (size() != 1) {
        throw ShapeError("Tensor::value: expected a single element, got " + shape_str(shape()));
    }
    return impl_->values[0];
}

bool Tensor::requires_grad() const {
    require_defined(*this, "Tensor::requires_grad");
    return impl_->requires_grad;
}

void Tensor::set_requires_grad(bool requires_grad) {
    require_defined(*this, "Tensor::set_requires_grad");
    impl_->requires_grad = requires_grad;
}

bool Tensor::has_grad() const {
    require_defined(*this, "Tensor::has_grad");
    return !impl_->grad.empty();
}

std::span<double> Tensor::grad() {
    if (!has_grad()) throw ValueError("Tensor::grad: no grad buffer (run backward first)");
    return impl_->grad;
}

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw ValueError("Tensor::grad: no grad buffer (run backward first)");
    return impl_->grad;
}

void Tensor::ensure_grad() {
    require_defined(*this, "Tensor::ensure_grad");
    if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
}

void Tensor::clear_grad() {
    require_defined(*this, "Tensor::clear_grad");
    impl_->grad.clear();
}

Tensor Tensor::clone() const {
    require_defined(*this, "Tensor::clone");
    return from(impl_->shape, impl_->values, impl_->requires_grad);
}

void Tape::record(std::vector<ImplPtr> inputs, ImplPtr output, std::function<void()> backward) {
    nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
}

void backward(const Tensor& loss, Tape& tape) {
    require_defined(loss, "backward");
    if (loss.size() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    }
    loss.impl()->grad.assign(1, 1.0);
    for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
        // Allocate zero buffers for all inputs first: leaves the loss does
        // not depend on must still report an all-zero gradient.
        for (auto& in : it->inputs) {
            if (in->grad.empty()) in->grad.assign(in->values.size(), 0.0);
        }
        if (it->output->grad.empty()) continue;  // nothing flowed into this op
        it->backward();
    }
}

// ---------------------------------------------------------------------------
// Ops

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
    require_matrix(a, "matmul(a)");
    require_matrix(b, "matmul(b)");
    const std::size_t m = a.rows(), k = a.cols(), k2 = b.rows(), p = b.cols();
    if (k != k2) {
        throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    std::vector<double> out(m * p, 0.0);
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const double ail = av[i * k + l];
            if (ail == 0.0) continue;
            for (std::size_t j = 0; j < p; ++j) {
                out[i * p + j] += ail * bv[l * p + j];
            }
        }
    }
    Tensor result = make_result({m, p}, std::move(out));
    if (tape) {
        auto ai = a.impl(), bi = b.impl(), oi = result.impl();
        tape->record({ai, bi}, oi, [ai, bi, oi, m, k, p] {
            const auto& g = oi->grad;
            auto& ga = grad_of(ai);
            auto& gb = grad_of(bi);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t l = 0; l < k; ++l) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < p; ++j) acc += g[i * p + j] * bi->values[l * p + j];
                    ga[i * k + l] += acc;
                }
            }
            for (std::size_t l = 0; l < k; ++l) {
                for (std::size_t j = 0; j < p; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < m; ++i) acc += ai->values[i * k + l] * g[i * p + j];
                    gb[l * p + j] += acc;
                }
            }
        });
    }
    return result;
}

Tensor matvec(const Tensor& m, const Tensor& v, Tape* tape) {
    require_matrix(m, "matvec(m)");
    require_vector(v, "matvec(v)");
    const std::size_t r = m.rows(), n = m.cols();
    if (n != v.size()) {
        throw ShapeError("matvec: dimensions disagree: " + shape_str(m.shape()) + " x " +
                         shape_str(v.shape()));
    }
    std::vector<double> out(r, 0.0);
    const auto mv = m.values();
    const auto vv = v.values();
    for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += mv[i * n + j] * vv[j];
        out[i] = acc;
    }
    Tensor result = make_result({r}, std::move(out));
    if (tape) {
        auto mi = m.impl(), vi = v.impl(), oi = result.impl();
        tape->record({mi, vi}, oi, [mi, vi, oi, r, n] {
            const auto& g = oi->grad;
            auto& gm = grad_of(mi);
            auto& gv = grad_of(vi);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    gm[i * n + j] += g[i] * vi->values[j];
                    gv[j] += mi->values[i * n + j] * g[i];
                }
            }
        });
    }
    return result;
}

Tensor transpose(const Tensor& m, Tape* tape) {
    require_matrix(m, "transpose");
    const std::size_t r = m.rows(), c = m.cols();
    std::vector<double> out(r * c);
    const auto mv = m.values();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = mv[i * c + j];
    }
    Tensor result = make_result({c, r}, std::move(out));
    if (tape) {
        auto mi = m.impl(), oi = result.impl();
        tape->record({mi}, oi, [mi, oi, r, c] {
            const auto& g = oi->grad;
            auto& gm = grad_of(mi);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) gm[i * c + j] += g[j * r + i];
            }
        });
    }
    return result;
}

Tensor elementwise(const Tensor& a, const Tensor& b, Elementwise op, Tape* tape) {
    require_defined(a, "elementwise(a)");
    require_defined(b, "elementwise(b)");
    if (a.shape() != b.shape()) {
        throw ShapeError("elementwise: shapes disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    const std::size_t n = a.size();
    std::vector<double> out(n);
    const auto av = a.values();
    const auto bv = b.values();
    switch (op) {
        case Elementwise::add:
            for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i];
            break;
        case Elementwise::sub:
            for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - bv[i];
            break;
        case Elementwise::mul:
            for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i];
            break;
    }
    Tensor result = make_result(a.shape(), std::move(out));
    if (tape) {
        auto ai = a.impl(), bi = b.impl(), oi = result.impl();
        tape->record({ai, bi}, oi, [ai, bi, oi, op, n] {
            const auto& g = oi->grad;
            auto& ga = grad_of(ai);
            auto& gb = grad_of(bi);
            switch (op) {
                case Elementwise::add:
                    for (std::size_t i = 0; i < n; ++i) {
                        ga[i] += g[i];
                        gb[i] += g[i];
                    }
                    break;
                case Elementwise::sub:
                    for (std::size_t i = 0; i < n; ++i) {
                        ga[i] += g[i];
                        gb[i] -= g[i];
                    }
                    break;
                case Elementwise::mul:
                    for (std::size_t i = 0; i < n; ++i) {
                        ga[i] += g[i] * bi->values[i];
                        gb[i] += g[i] * ai->values[i];
                    }
                    break;
            }
        });
    }
    return result;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
    return elementwise(a, b, Elementwise::add, tape);
}
Tensor sub(const Tensor& a, const Tensor& b, Tape* tape) {
    return elementwise(a, b, Elementwise::sub, tape);
}
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
    return elementwise(a, b, Elementwise::mul, tape);
}

Tensor relu(const Tensor& x, Tape* tape) {
    require_defined(x, "relu");
    const std::size_t n = x.size();
    std::vector<double> out(n);
    const auto xv = x.values();
    for (std::size_t i = 0; i < n; ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    Tensor result = make_result(x.shape(), std::move(out));
    if (tape) {
        auto xi = x.impl(), oi = result.impl();
        tape->record({xi}, oi, [xi, oi, n] {
            const auto& g = oi->grad;
            auto& gx = grad_of(xi);
            for (std::size_t i = 0; i < n; ++i) {
                if (xi->values[i] > 0.0) gx[i] += g[i];
            }
        });
    }
    return result;
}

Tensor tanh(const Tensor& x, Tape* tape) {
    require_defined(x, "tanh");
    const std::size_t n = x.size();
    std::vector<double> out(n);
    const auto xv = x.values();
    for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(xv[i]);
    Tensor result = make_result(x.shape(), std::move(out));
    if (tape) {
        auto xi = x.impl(), oi = result.impl();
        tape->record({xi}, oi, [xi, oi, n] {
            const auto& g = oi->grad;
            auto& gx = grad_of(xi);
            for (std::size_t i = 0; i < n; ++i) {
                const double y = oi->values[i];
                gx[i] += g[i] * (1.0 - y * y);
            }
        });
    }
    return result;
}

Tensor reshape(const Tensor& t, Shape shape, Tape* tape) {
    require_defined(t, "reshape");
    std::size_t numel = 1;
    for (std::size_t d : shape) numel *= d;
    if (numel != t.size()) {
        throw ShapeError("reshape: " + shape_str(t.shape()) + " has " + std::to_string(t.size()) +
                         " elements, target " + shape_str(shape) + " wants " + std::to_string(numel));
    }
    Tensor result = Tensor::from(std::move(shape), {t.values().begin(), t.values().end()});
    if (tape) {
        auto ti = t.impl(), oi = result.impl();
        tape->record({ti}, oi, [ti, oi] {
            auto& gt = grad_of(ti);
            for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += oi->grad[i];
        });
    }
    return result;
}

Tensor broadcast_rows(const Tensor& row, std::size_t count, Tape* tape) {
    require_vector(row, "broadcast_rows");
    if (count == 0) throw ShapeError("broadcast_rows: count must be positive");
    const std::size_t n = row.size();
    std::vector<double> out(count * n);
    const auto rv = row.values();
    for (std::size_t i = 0; i < count; ++i) {
        std::copy(rv.begin(), rv.end(), out.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    Tensor result = make_result({count, n}, std::move(out));
    if (tape) {
        auto ri = row.impl(), oi = result.impl();
        tape->record({ri}, oi, [ri, oi, count, n] {
            const auto& g = oi->grad;
            auto& gr = grad_of(ri);
            for (std::size_t i = 0; i < count; ++i) {
                for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
            }
        });
    }
    return result;
}

Tensor rowwise_squared_norm(const Tensor& m, Tape* tape) {
    require_matrix(m, "rowwise_squared_norm");
    const std::size_t b = m.rows(), n = m.cols();
    std::vector<double> out(b, 0.0);
    const auto mv = m.values();
    for (std::size_t i = 0; i < b; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = mv[i * n + j];
            acc += v * v;
        }
        out[i] = acc;
    }
    Tensor result = make_result({b}, std::move(out));
    if (tape) {
        auto mi = m.impl(), oi = result.impl();
        tape->record({mi}, oi, [mi, oi, b, n] {
            const auto& g = oi->grad;
            auto& gm = grad_of(mi);
            for (std::size_t i = 0; i < b; ++i) {
                for (std::size_t j = 0; j < n; ++j) gm[i * n + j] += 2.0 * mi->values[i * n + j] * g[i];
            }
        });
    }
    return result;
}

Tensor squared_l2_norm(const Tensor& v, Tape* tape) {
    require_vector(v, "squared_l2_norm");
    double acc = 0.0;
    for (double x : v.values()) acc += x * x;
    Tensor result = make_result({1}, {acc});
    if (tape) {
        auto vi = v.impl(), oi = result.impl();
        tape->record({vi}, oi, [vi, oi] {
            const double g = oi->grad[0];
            auto& gv = grad_of(vi);
            for (std::size_t i = 0; i < vi->values.size(); ++i) gv[i] += 2.0 * vi->values[i] * g;
        });
    }
    return result;
}

namespace {

// out[j] = (l[j] - max)/tau - log sum_k exp((l[k] - max)/tau)
void log_softmax_row(const double* logits, double* out, std::size_t c, double temperature) {
    double mx = logits[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits[j]);
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
        out[j] = (logits[j] - mx) / temperature;
        lse += std::exp(out[j]);
    }
    lse = std::log(lse);
    for (std::size_t j = 0; j < c; ++j) out[j] -= lse;
}

// dl[j] += (g[j] - p[j] * sum(g)) / tau with p = exp(out)
void log_softmax_row_backward(const double* out, const double* g, double* dl, std::size_t c,
                              double temperature) {
    double gsum = 0.0;
    for (std::size_t j = 0; j < c; ++j) gsum += g[j];
    for (std::size_t j = 0; j < c; ++j) {
        dl[j] += (g[j] - std::exp(out[j]) * gsum) / temperature;
    }
}

void require_temperature(double temperature) {
    if (!(temperature > 0.0)) {
        throw ConfigError("temperature must be strictly positive, got " +
                          std::to_string(temperature));
    }
}

}  // namespace

Tensor stable_log_softmax(const Tensor& logits, double temperature, Tape* tape) {
    require_vector(logits, "stable_log_softmax");
    require_temperature(temperature);
    const std::size_t c = logits.size();
    std::vector<double> out(c);
    log_softmax_row(logits.values().data(), out.data(), c, temperature);
    Tensor result = make_result({c}, std::move(out));
    if (tape) {
        auto li = logits.impl(), oi = result.impl();
        tape->record({li}, oi, [li, oi, c, temperature] {
            log_softmax_row_backward(oi->values.data(), oi->grad.data(), grad_of(li).data(), c,
                                     temperature);
        });
    }
    return result;
}

Tensor rowwise_log_softmax(const Tensor& m, double temperature, Tape* tape) {
    require_matrix(m, "rowwise_log_softmax");
    require_temperature(temperature);
    const std::size_t b = m.rows(), c = m.cols();
    std::vector<double> out(b * c);
    const auto mv = m.values();
    for (std::size_t i = 0; i < b; ++i) {
        log_softmax_row(mv.data() + i * c, out.data() + i * c, c, temperature);
    }
    Tensor result = make_result({b, c}, std::move(out));
    if (tape) {
        auto mi = m.impl(), oi = result.impl();
        tape->record({mi}, oi, [mi, oi, b, c, temperature] {
            auto& gm = grad_of(mi);
            for (std::size_t i = 0; i < b; ++i) {
                log_softmax_row_backward(oi->values.data() + i * c, oi->grad.data() + i * c,
                                         gm.data() + i * c, c, temperature);
            }
        });
    }
    return result;
}

Tensor stack_cols(const std::vector<Tensor>& cols, Tape* tape) {
    if (cols.empty()) throw ShapeError("stack_cols: no columns");
    const std::size_t b = cols[0].size();
    const std::size_t c = cols.size();
    std::vector<ImplPtr> inputs;
    inputs.reserve(c);
    std::vector<double> out(b * c);
    for (std::size_t j = 0; j < c; ++j) {
        require_vector(cols[j], "stack_cols");
        if (cols[j].size() != b) {
            throw ShapeError("stack_cols: column " + std::to_string(j) + " has length " +
                             std::to_string(cols[j].size()) + ", expected " + std::to_string(b));
        }
        const auto cv = cols[j].values();
        for (std::size_t i = 0; i < b; ++i) out[i * c + j] = cv[i];
        inputs.push_back(cols[j].impl());
    }
    Tensor result = make_result({b, c}, std::move(out));
    if (tape) {
        auto oi = result.impl();
        auto ins = inputs;
        tape->record(std::move(inputs), oi, [ins, oi, b, c] {
            const auto& g = oi->grad;
            for (std::size_t j = 0; j < c; ++j) {
                auto& gc = grad_of(ins[j]);
                for (std::size_t i = 0; i < b; ++i) gc[i] += g[i * c + j];
            }
        });
    }
    return result;
}

Tensor slice_cols(const Tensor& m, std::size_t count, Tape* tape) {
    require_matrix(m, "slice_cols");
    const std::size_t b = m.rows(), c = m.cols();
    if (count == 0 || count > c) {
        throw ShapeError("slice_cols: cannot keep " + std::to_string(count) + " of " +
                         std::to_string(c) + " columns");
    }
    std::vector<double> out(b * count);
    const auto mv = m.values();
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < count; ++j) out[i * count + j] = mv[i * c + j];
    }
    Tensor result = make_result({b, count}, std::move(out));
    if (tape) {
        auto mi = m.impl(), oi = result.impl();
        tape->record({mi}, oi, [mi, oi, b, c, count] {
            const auto& g = oi->grad;
            auto& gm = grad_of(mi);
            for (std::size_t i = 0; i < b; ++i) {
                for (std::size_t j = 0; j < count; ++j) gm[i * c + j] += g[i * count + j];
            }
        });
    }
    return result;
}

Tensor select_entries(const Tensor& m, std::span<const int> indices, Tape* tape) {
    require_matrix(m, "select_entries");
    const std::size_t b = m.rows(), c = m.cols();
    if (indices.size() != b) {
        throw ShapeError("select_entries: " + std::to_string(indices.size()) + " indices for " +
                         std::to_string(b) + " rows");
    }
    std::vector<double> out(b);
    const auto mv = m.values();
    for (std::size_t i = 0; i < b; ++i) {
        const int j = indices[i];
        if (j < 0 || static_cast<std::size_t>(j) >= c) {
            throw ValueError("select_entries: index " + std::to_string(j) + " out of range [0, " +
                             std::to_string(c) + ") at row " + std::to_string(i));
        }
        out[i] = mv[i * c + static_cast<std::size_t>(j)];
    }
    Tensor result = make_result({b}, std::move(out));
    if (tape) {
        auto mi = m.impl(), oi = result.impl();
        std::vector<int> idx(indices.begin(), indices.end());
        tape->record({mi}, oi, [mi, oi, idx = std::move(idx), c] {
            const auto& g = oi->grad;
            auto& gm = grad_of(mi);
            for (std::size_t i = 0; i < idx.size(); ++i) {
                gm[i * c + static_cast<std::size_t>(idx[i])] += g[i];
            }
        });
    }
    return result;
}

Tensor sum_all(const Tensor& t, Tape* tape) {
    require_defined(t, "sum_all");
    double acc = 0.0;
    for (double v : t.values()) acc += v;
    Tensor result = make_result({1}, {acc});
    if (tape) {
        auto ti = t.impl(), oi = result.impl();
        tape->record({ti}, oi, [ti, oi] {
            const double g = oi->grad[0];
            auto& gt = grad_of(ti);
            for (double& v : gt) v += g;
        });
    }
    return result;
}

Tensor scale(const Tensor& t, double factor, Tape* tape) {
    require_defined(t, "scale");
    const std::size_t n = t.size();
    std::vector<double> out(n);
    const auto tv = t.values();
    for (std::size_t i = 0; i < n; ++i) out[i] = tv[i] * factor;
    Tensor result = make_result(t.shape(), std::move(out));
    if (tape) {
        auto ti = t.impl(), oi = result.impl();
        tape->record({ti}, oi, [ti, oi, factor, n] {
            const auto& g = oi->grad;
            auto& gt = grad_of(ti);
            for (std::size_t i = 0; i < n; ++i) gt[i] += factor * g[i];
        });
    }
    return result;
}

Tensor finite_difference_grad(const std::function<double()>& f, Tensor& params, double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) {
        throw ConfigError("finite_difference_grad: eps must lie in [1e-7, 1e-3], got " +
                          std::to_string(eps));
    }
    auto vals = params.values();
    std::vector<double> g(params.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double original = vals[i];
        vals[i] = original + eps;
        const double fp = f();
        vals[i] = original - eps;
        const double fm = f();
        vals[i] = original;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw ValueError("finite_difference_grad: non-finite evaluation at coordinate " +
                             std::to_string(i));
        }
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return Tensor::from(params.shape(), std::move(g));
}

}  // namespace xdcl
