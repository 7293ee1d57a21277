#pragma once

#include <span>

#include "xdcl/tensor.hpp"

namespace xdcl {

/// Weighting of the training objective: ce + lambda * distillation, with
/// the distillation softmaxes softened by tau.
struct LossConfig {
    double lambda = 1e-3;
    double tau = 2.0;
};

void validate(const LossConfig& config);

/// Mean cross-entropy of softmax(scores) against integer labels,
/// temperature 1. scores is [B x C], labels[i] in [0, C).
Tensor ce_loss(const Tensor& scores, std::span<const int> labels, Tape* tape = nullptr);

/// Mean over the batch of -sum_c p_c^old log p_c^cur with both
/// distributions softened by tau. Both score matrices must already be
/// restricted to the old label space; scores_old is treated as a constant
/// (stop-gradient), so gradients flow only into scores_current.
Tensor distillation_loss(const Tensor& scores_current, const Tensor& scores_old, double tau,
                         Tape* tape = nullptr);

/// ce + lambda * dis.
Tensor total_loss(const Tensor& ce, const Tensor& dis, double lambda, Tape* tape = nullptr);

}  // namespace xdcl
