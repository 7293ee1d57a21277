#include "xdcl/backbone.hpp"

#include <cmath>
#include <random>

#include "xdcl/error.hpp"
#include "xdcl/rng.hpp"

namespace xdcl {

namespace {

void validate(const BackboneConfig& config) {
    if (config.input_dim == 0 || config.feature_dim == 0) {
        throw ConfigError("backbone: input_dim and feature_dim must be positive");
    }
    for (std::size_t h : config.hidden_dims) {
        if (h == 0) throw ConfigError("backbone: hidden dimensions must be positive");
    }
}

}  // namespace

std::vector<Tensor> BackboneParams::parameters() const {
    std::vector<Tensor> out;
    out.reserve(weights.size() + biases.size());
    for (const auto& w : weights) out.push_back(w);
    for (const auto& b : biases) out.push_back(b);
    return out;
}

BackboneParams BackboneParams::clone() const {
    BackboneParams copy;
    copy.config = config;
    copy.weights.reserve(weights.size());
    copy.biases.reserve(biases.size());
    for (const auto& w : weights) copy.weights.push_back(w.clone());
    for (const auto& b : biases) copy.biases.push_back(b.clone());
    return copy;
}

BackboneParams backbone_init(const BackboneConfig& config) {
    validate(config);
    std::vector<std::size_t> dims;
    dims.push_back(config.input_dim);
    dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
    dims.push_back(config.feature_dim);

    BackboneParams params;
    params.config = config;
    Rng rng = make_rng(config.seed, {0x6261636bULL});  // backbone stream
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t fan_in = dims[l], fan_out = dims[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<double> w(fan_in * fan_out);
        for (double& v : w) v = dist(rng);
        params.weights.push_back(Tensor::from({fan_in, fan_out}, std::move(w), true));
        params.biases.push_back(Tensor::zeros({fan_out}, true));
    }
    return params;
}

Tensor backbone_forward(const BackboneParams& params, const Tensor& x, Tape* tape) {
    if (x.shape().size() != 2 || x.cols() != params.config.input_dim) {
        throw ShapeError("backbone_forward: input " + shape_str(x.shape()) + " does not match [Bx" +
                         std::to_string(params.config.input_dim) + "]");
    }
    const std::size_t batch = x.rows();
    Tensor h = x;
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        h = matmul(h, params.weights[l], tape);
        h = add(h, broadcast_rows(params.biases[l], batch, tape), tape);
        if (l + 1 < params.weights.size()) {
            h = params.config.activation == Activation::relu ? relu(h, tape) : tanh(h, tape);
        }
    }
    return h;
}

}  // namespace xdcl
