#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace xdcl {

using Shape = std::vector<std::size_t>;

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty means "no grad buffer"
    bool requires_grad = false;
};

}  // namespace detail

/// Dense double-precision array with an optional gradient buffer.
///
/// Tensors are cheap handles onto shared storage: copies alias the same
/// buffer, clone() makes an independent one. Scalars are shape [1].
/// Shapes never broadcast; every reshape is an explicit operation.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    /// Rank-2 accessors; throw ShapeError on other ranks.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<double> values();
    std::span<const double> values() const;
    double at(std::size_t i) const;
    double& at(std::size_t i);
    /// Value of a single-element tensor.
    double value() const;

    bool requires_grad() const;
    void set_requires_grad(bool requires_grad);
    bool has_grad() const;
    std::span<double> grad();
    std::span<const double> grad() const;
    /// Allocates a zero grad buffer if absent.
    void ensure_grad();
    /// Drops the grad buffer entirely.
    void clear_grad();

    /// Deep copy with fresh storage (grad buffer not copied).
    Tensor clone() const;
    /// True if both handles share the same storage.
    bool is(const Tensor& other) const { return impl_ == other.impl_; }

    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Records the operations of one forward pass, in execution order, so a
/// reverse sweep can propagate gradients. Rebuilt for every pass
/// (define-by-run): the graph shape changes whenever the class set grows.
class Tape {
public:
    void clear() { nodes_.clear(); }
    std::size_t num_ops() const { return nodes_.size(); }

    void record(std::vector<std::shared_ptr<detail::TensorImpl>> inputs,
                std::shared_ptr<detail::TensorImpl> output,
                std::function<void()> backward);

private:
    struct Node {
        std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
        std::shared_ptr<detail::TensorImpl> output;
        std::function<void()> backward;
    };
    std::vector<Node> nodes_;

    friend void backward(const Tensor& loss, Tape& tape);
};

enum class Elementwise { add, sub, mul };

// Every op computes eagerly; when `tape` is non-null the backward rule is
// recorded. A null tape gives a plain, gradient-free evaluation (used for
// the teacher's forward pass and for finite-difference probing).

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
/// Matrix [m x n] times vector [n] -> [m].
Tensor matvec(const Tensor& m, const Tensor& v, Tape* tape = nullptr);
Tensor transpose(const Tensor& m, Tape* tape = nullptr);

Tensor elementwise(const Tensor& a, const Tensor& b, Elementwise op, Tape* tape = nullptr);
Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor sub(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

Tensor relu(const Tensor& x, Tape* tape = nullptr);
Tensor tanh(const Tensor& x, Tape* tape = nullptr);

/// Same elements, new shape; element count must match.
Tensor reshape(const Tensor& t, Shape shape, Tape* tape = nullptr);
/// Repeats a vector [n] as the rows of a [count x n] matrix.
Tensor broadcast_rows(const Tensor& row, std::size_t count, Tape* tape = nullptr);
/// Per-row squared l2 norms: [b x n] -> [b].
Tensor rowwise_squared_norm(const Tensor& m, Tape* tape = nullptr);
/// Sum of squares of a vector: [n] -> scalar.
Tensor squared_l2_norm(const Tensor& v, Tape* tape = nullptr);

/// log softmax(logits / temperature), computed max-shifted so arbitrarily
/// large scores stay finite. exp of the output sums to 1.
Tensor stable_log_softmax(const Tensor& logits, double temperature, Tape* tape = nullptr);
/// stable_log_softmax applied independently to each row of [b x c].
Tensor rowwise_log_softmax(const Tensor& m, double temperature, Tape* tape = nullptr);

/// Concatenates C vectors of length B into a [B x C] matrix.
Tensor stack_cols(const std::vector<Tensor>& cols, Tape* tape = nullptr);
/// Keeps the first `count` columns of a matrix.
Tensor slice_cols(const Tensor& m, std::size_t count, Tape* tape = nullptr);
/// Picks m[i, index[i]] for each row i: [b x c] -> [b].
Tensor select_entries(const Tensor& m, std::span<const int> indices, Tape* tape = nullptr);

Tensor sum_all(const Tensor& t, Tape* tape = nullptr);
Tensor scale(const Tensor& t, double factor, Tape* tape = nullptr);

/// Reverse sweep from a scalar loss. After the call every requires_grad
/// tensor that fed a recorded op holds d(loss)/d(tensor); leaves the loss
/// does not depend on hold zeros.
void backward(const Tensor& loss, Tape& tape);

/// Central-difference gradient of `f` with respect to `params`, probing
/// one coordinate at a time. `f` must be pure and is re-evaluated with the
/// perturbed parameter values in place; they are restored afterwards.
/// Serves as the independent oracle for the reverse-mode path.
Tensor finite_difference_grad(const std::function<double()>& f, Tensor& params, double eps);

}  // namespace xdcl
