#pragma once

#include <cstdint>
#include <vector>

#include "xdcl/tensor.hpp"

namespace xdcl {

enum class Activation { relu, tanh };

/// Multilayer perceptron mapping input features [d] to latent features [n].
struct BackboneConfig {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims;
    std::size_t feature_dim = 0;
    Activation activation = Activation::relu;
    std::uint64_t seed = 0;
};

/// Learnable parameters of the feature extractor. Weight l maps layer
/// input [in_l] to output [out_l] as x * W (W stored [in_l x out_l]);
/// biases start at zero.
struct BackboneParams {
    BackboneConfig config;
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    std::vector<Tensor> parameters() const;
    BackboneParams clone() const;
};

/// Seeded init: weights uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// biases zero. Identical seeds give bit-identical parameters.
BackboneParams backbone_init(const BackboneConfig& config);

/// Forward pass over a batch [B x d] -> [B x n]. Rowwise independent.
Tensor backbone_forward(const BackboneParams& params, const Tensor& x, Tape* tape = nullptr);

}  // namespace xdcl
