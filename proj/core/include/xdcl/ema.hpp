#pragma once

#include <optional>

#include "xdcl/backbone.hpp"
#include "xdcl/msl_head.hpp"

namespace xdcl {

/// Feature extractor plus classifier head: everything the learner trains.
struct Model {
    BackboneParams backbone;
    MslHead head;

    std::vector<Tensor> parameters() const;
    Model clone() const;
};

/// Features then scores in one pass: [B x d] -> [B x C].
Tensor model_scores(const Model& model, const Tensor& x, Tape* tape = nullptr);

/// Current learner and its slowly-trailing teacher. The teacher covers
/// the label space as of the previous task and never receives gradients;
/// only ema_update moves it.
struct ModelPair {
    Model current;
    std::optional<Model> teacher;
    double gamma = 0.96;
};

/// Deep copy for use as the teacher; later training of `current` leaves
/// the copy untouched.
Model snapshot_teacher(const Model& current);

/// One exponential-moving-average step: every teacher parameter moves to
/// gamma * teacher + (1 - gamma) * current, elementwise, covering the
/// backbone and the classes the teacher knows. Classes added after the
/// snapshot are not mirrored.
void ema_update(ModelPair& pair);

}  // namespace xdcl
