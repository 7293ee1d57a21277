#include "xdcl/losses.hpp"

#include <cmath>

#include "xdcl/error.hpp"

namespace xdcl {

namespace {

void require_finite_scalar(const Tensor& loss, const char* what) {
    if (!std::isfinite(loss.value())) {
        throw ValueError(std::string(what) + ": non-finite loss value");
    }
}

}  // namespace

void validate(const LossConfig& config) {
    if (!(config.tau > 0.0)) {
        throw ConfigError("LossConfig: tau must be strictly positive, got " +
                          std::to_string(config.tau));
    }
    if (config.lambda < 0.0) {
        throw ConfigError("LossConfig: lambda must be nonnegative, got " +
                          std::to_string(config.lambda));
    }
}

Tensor ce_loss(const Tensor& scores, std::span<const int> labels, Tape* tape) {
    if (scores.shape().size() != 2) {
        throw ShapeError("ce_loss: scores must be [BxC], got " + shape_str(scores.shape()));
    }
    const std::size_t batch = scores.rows();
    if (labels.size() != batch) {
        throw ShapeError("ce_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(batch) + " rows");
    }
    Tensor logp = rowwise_log_softmax(scores, 1.0, tape);
    Tensor picked = select_entries(logp, labels, tape);
    Tensor loss = scale(sum_all(picked, tape), -1.0 / static_cast<double>(batch), tape);
    require_finite_scalar(loss, "ce_loss");
    return loss;
}

Tensor distillation_loss(const Tensor& scores_current, const Tensor& scores_old, double tau,
                         Tape* tape) {
    if (!(tau > 0.0)) {
        throw ConfigError("distillation_loss: tau must be strictly positive, got " +
                          std::to_string(tau));
    }
    if (scores_current.shape().size() != 2 || scores_old.shape().size() != 2) {
        throw ShapeError("distillation_loss: scores must be [BxC]");
    }
    if (scores_current.shape() != scores_old.shape()) {
        throw ShapeError("distillation_loss: score shapes disagree: " +
                         shape_str(scores_current.shape()) + " vs " +
                         shape_str(scores_old.shape()));
    }
    const std::size_t batch = scores_current.rows();
    const std::size_t classes = scores_current.cols();

    // Teacher distribution from raw values only: the stop-gradient contract.
    std::vector<double> p_old(batch * classes);
    const auto old_values = scores_old.values();
    for (std::size_t i = 0; i < batch; ++i) {
        double mx = old_values[i * classes];
        for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, old_values[i * classes + j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < classes; ++j) {
            p_old[i * classes + j] = std::exp((old_values[i * classes + j] - mx) / tau);
            denom += p_old[i * classes + j];
        }
        for (std::size_t j = 0; j < classes; ++j) p_old[i * classes + j] /= denom;
    }
    Tensor teacher = Tensor::from({batch, classes}, std::move(p_old));

    Tensor logp = rowwise_log_softmax(scores_current, tau, tape);
    Tensor weighted = mul(teacher, logp, tape);
    Tensor loss = scale(sum_all(weighted, tape), -1.0 / static_cast<double>(batch), tape);
    require_finite_scalar(loss, "distillation_loss");
    return loss;
}

Tensor total_loss(const Tensor& ce, const Tensor& dis, double lambda, Tape* tape) {
    if (ce.size() != 1 || dis.size() != 1) {
        throw ShapeError("total_loss: both terms must be scalar");
    }
    if (lambda < 0.0) {
        throw ConfigError("total_loss: lambda must be nonnegative");
    }
    return add(ce, scale(dis, lambda, tape), tape);
}

}  // namespace xdcl
