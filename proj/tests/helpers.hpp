#pragma once

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "xdcl/tensor.hpp"

namespace xdcl::testing {

inline bool close_abs(double a, double b, double tol) { return std::abs(a - b) <= tol; }

inline bool close_rel(double a, double b, double rtol) {
    return std::abs(a - b) <= rtol * (1.0 + std::max(std::abs(a), std::abs(b)));
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0,
                            bool requires_grad = false) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> values(n);
    for (double& v : values) v = dist(rng);
    return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

/// Compares reverse-mode gradients of `forward` (a pure function of the
/// given parameters, rebuilt per call) against central differences.
inline void check_gradients_match_fd(std::vector<Tensor> params,
                                     const std::function<Tensor(Tape*)>& forward,
                                     double eps = 1e-5, double rtol = 1e-4) {
    for (Tensor& p : params) p.clear_grad();
    Tape tape;
    Tensor loss = forward(&tape);
    backward(loss, tape);
    for (Tensor& p : params) {
        REQUIRE(p.has_grad());
        const Tensor fd =
            finite_difference_grad([&] { return forward(nullptr).value(); }, p, eps);
        const auto reverse = p.grad();
        const auto oracle = fd.values();
        for (std::size_t i = 0; i < reverse.size(); ++i) {
            CAPTURE(i);
            CAPTURE(reverse[i]);
            CAPTURE(oracle[i]);
            CHECK(close_rel(reverse[i], oracle[i], rtol));
        }
    }
}

}  // namespace xdcl::testing
