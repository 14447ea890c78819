#pragma once

// Finite-difference gradient oracle. Losses are evaluated through the
// double-precision reference operations in ref_ops.hpp, so the central
// difference (h = 1e-3) carries only O(h^2) truncation error and none of the
// float32 forward-pass rounding noise that would otherwise swamp a 1e-4
// relative tolerance. The float32 tensor is perturbed in place and the
// quotient divides by the step that was actually realized after rounding.
//
// The absolute floor absorbs float32 rounding in the production gradients
// themselves (their accumulators are 32-bit); it sits well below any
// gradient magnitude these tests care about.

#include <cmath>
#include <functional>

#include "doctest.h"
#include "csinet/rng.hpp"
#include "csinet/tensor.hpp"
#include "ref_ops.hpp"

namespace fdtest {

inline constexpr double kStep = 1e-3;
inline constexpr double kRelTol = 1e-4;
inline constexpr double kAbsFloor = 1e-5;

// Central finite difference of `loss` with respect to entry i of x.
inline double central_diff(csinet::Tensor& x, std::int64_t i,
                           const std::function<double()>& loss) {
    const float saved = x[i];
    const float up_v = static_cast<float>(static_cast<double>(saved) + kStep);
    const float dn_v = static_cast<float>(static_cast<double>(saved) - kStep);
    x[i] = up_v;
    const double up = loss();
    x[i] = dn_v;
    const double down = loss();
    x[i] = saved;
    return (up - down) / (static_cast<double>(up_v) - static_cast<double>(dn_v));
}

// Compare an analytic gradient tensor against finite differences of `loss`,
// entry by entry.
inline void check_grad(csinet::Tensor& x, const csinet::Tensor& analytic,
                       const std::function<double()>& loss) {
    REQUIRE(x.numel() == analytic.numel());
    for (std::int64_t i = 0; i < analytic.numel(); ++i) {
        const double fd = central_diff(x, i, loss);
        const double an = static_cast<double>(analytic[i]);
        const double err = std::abs(fd - an);
        const double denom = std::max(std::abs(fd), std::abs(an));
        INFO("entry ", i, ": fd=", fd, " analytic=", an);
        CHECK(err <= kRelTol * denom + kAbsFloor);
    }
}

// L = sum_i probe[i] * out[i], accumulated in double.
inline double dot_probe(const csinet::Tensor& probe, const refops::F64& out) {
    REQUIRE(probe.numel() == out.numel());
    double acc = 0.0;
    for (std::int64_t i = 0; i < out.numel(); ++i)
        acc += static_cast<double>(probe[i]) * out[i];
    return acc;
}

inline csinet::Tensor random_tensor(const std::vector<int>& shape, csinet::Rng& rng,
                                    double lo = -1.0, double hi = 1.0) {
    csinet::Tensor t = csinet::Tensor::zeros(shape);
    for (std::int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

}  // namespace fdtest
