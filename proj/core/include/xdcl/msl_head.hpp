#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xdcl/tensor.hpp"

namespace xdcl {

enum class HeadKind { mahalanobis, inner_product };

/// Per-class similarity parameters. For the Mahalanobis head, L is the
/// [r x n] factor of the PSD metric (sigma = L^T L, so rank(sigma) <= r)
/// and b the learnable class bias. The inner-product baseline stores its
/// weight row as L with r = 1 and never trains b.
struct ClassMetric {
    Tensor L;
    Tensor b;
    int class_id = 0;

    ClassMetric clone() const { return ClassMetric{L.clone(), b.clone(), class_id}; }
};

/// Classifier over a growing, contiguous class set 0..C-1.
struct MslHead {
    HeadKind kind = HeadKind::mahalanobis;
    std::size_t feature_dim = 0;  // n
    std::size_t rank = 0;         // r, 1 <= r <= n
    std::vector<ClassMetric> metrics;

    std::size_t num_classes() const { return metrics.size(); }
    /// Trainable tensors; the inner-product head excludes the unused biases.
    std::vector<Tensor> parameters() const;
    MslHead clone() const;
};

/// r = 64 once the latent space is at least that wide, full rank below.
std::size_t default_rank(std::size_t feature_dim);

/// Empty head; classes arrive through head_expand.
MslHead make_head(HeadKind kind, std::size_t feature_dim, std::size_t rank);

/// Low-rank similarity score ||L (h - b)||^2 for one sample. Nonnegative;
/// gradients flow into h, L and b when taped.
Tensor similarity_lowrank(const Tensor& h, const ClassMetric& metric, Tape* tape = nullptr);

/// Full quadratic form (h - b)^T sigma (h - b). Gradient-free reference
/// path against which the factored score is checked; rejects sigma that
/// is asymmetric beyond 1e-9.
double similarity_fullrank(const Tensor& h, const Tensor& sigma, const Tensor& b);

/// Evaluates both sides of the eigendecomposition identity
/// r^T sigma r == ||Lambda^(1/2) V^T r||^2 and returns {lhs, rhs}.
/// Eigenvalues in [-1e-9, 0] are clamped to zero; anything lower is a
/// PSD violation.
std::pair<double, double> eigen_identity_check(const Tensor& sigma, const Tensor& residual);

/// Appends k fresh classes: L uniform in (-1/sqrt(n), 1/sqrt(n)), b zero.
/// Existing metrics are shared object-for-object, so scores of old
/// classes are bit-identical before and after.
MslHead head_expand(const MslHead& head, std::size_t k, std::uint64_t seed);

/// Batched scores [B x n] -> [B x C], column c equal to class c's score.
Tensor head_scores(const MslHead& head, const Tensor& h_batch, Tape* tape = nullptr);

/// Versioned textual dump / reload (see docs/FORMATS.md). Values are
/// written with 17 significant digits, so a round trip is bit-exact.
void save_msl_head(const MslHead& head, const std::string& path);
MslHead load_msl_head(const std::string& path);

}  // namespace xdcl
