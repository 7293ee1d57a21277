#include "xdcl/ema.hpp"

#include "xdcl/error.hpp"

namespace xdcl {

std::vector<Tensor> Model::parameters() const {
    std::vector<Tensor> out = backbone.parameters();
    for (const auto& p : head.parameters()) out.push_back(p);
    return out;
}

Model Model::clone() const { return Model{backbone.clone(), head.clone()}; }

Tensor model_scores(const Model& model, const Tensor& x, Tape* tape) {
    return head_scores(model.head, backbone_forward(model.backbone, x, tape), tape);
}

Model snapshot_teacher(const Model& current) { return current.clone(); }

namespace {

void ema_tensor(Tensor& old_param, const Tensor& current_param, double gamma) {
    if (old_param.shape() != current_param.shape()) {
        throw ShapeError("ema_update: parameter shapes disagree: " + shape_str(old_param.shape()) +
                         " vs " + shape_str(current_param.shape()));
    }
    auto ov = old_param.values();
    const auto cv = current_param.values();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        ov[i] = gamma * ov[i] + (1.0 - gamma) * cv[i];
    }
}

}  // namespace

void ema_update(ModelPair& pair) {
    if (!pair.teacher) throw ValueError("ema_update: no teacher snapshot");
    if (!(pair.gamma >= 0.0 && pair.gamma <= 1.0)) {
        throw ConfigError("ema_update: gamma must lie in [0, 1], got " + std::to_string(pair.gamma));
    }
    Model& teacher = *pair.teacher;
    if (teacher.backbone.weights.size() != pair.current.backbone.weights.size()) {
        throw ShapeError("ema_update: backbone layer counts disagree");
    }
    for (std::size_t l = 0; l < teacher.backbone.weights.size(); ++l) {
        ema_tensor(teacher.backbone.weights[l], pair.current.backbone.weights[l], pair.gamma);
        ema_tensor(teacher.backbone.biases[l], pair.current.backbone.biases[l], pair.gamma);
    }
    if (teacher.head.num_classes() > pair.current.head.num_classes()) {
        throw ShapeError("ema_update: teacher knows more classes than current");
    }
    for (std::size_t c = 0; c < teacher.head.num_classes(); ++c) {
        ema_tensor(teacher.head.metrics[c].L, pair.current.head.metrics[c].L, pair.gamma);
        ema_tensor(teacher.head.metrics[c].b, pair.current.head.metrics[c].b, pair.gamma);
    }
}

}  // namespace xdcl
