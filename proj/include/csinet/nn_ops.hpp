#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csinet/rng.hpp"
#include "csinet/tensor.hpp"

namespace csinet::nn {

// ---------------------------------------------------------------------------
// Parameters and optimizer state
// ---------------------------------------------------------------------------

/// One trainable tensor plus its gradient and ADAM moments.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
    std::int64_t step_count = 0;

    Param() = default;
    Param(std::string n, Tensor init);

    void zero_grad() { grad.fill(0.0f); }
};

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// Bias-corrected ADAM step on one parameter; increments step_count first.
/// Throws TrainingError naming the parameter if its gradient is non-finite.
void adam_update(Param& p, const AdamConfig& cfg);

/// Uniform on [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))].
Tensor glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng);

// ---------------------------------------------------------------------------
// Convolution: 3x3 kernels, zero padding of 1, unit stride (spatial size kept)
// ---------------------------------------------------------------------------

struct ConvSpec {
    int in_channels = 1;
    int out_channels = 1;
    static constexpr int kernel = 3;
};

struct ConvGrads {
    Tensor input;    // same shape as forward input
    Tensor weights;  // [Cout, Cin, 3, 3]
    Tensor bias;     // [Cout]
};

/// Cross-correlation of x [Cin,H,W] with w [Cout,Cin,3,3] plus per-channel bias.
Tensor conv2d_forward(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& b);
/// Batched variant over x [B,Cin,H,W].
Tensor conv2d_forward_batch(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& b);

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& cached_input, const ConvSpec& spec,
                          const Tensor& w);
/// Batched; weight/bias gradients are accumulated over the batch in sample order.
ConvGrads conv2d_backward_batch(const Tensor& grad_out, const Tensor& cached_input,
                                const ConvSpec& spec, const Tensor& w);

// ---------------------------------------------------------------------------
// Fully connected layer: y = W x + b
// ---------------------------------------------------------------------------

struct DenseGrads {
    Tensor input;    // W^T g
    Tensor weights;  // g outer x
    Tensor bias;     // g
};

/// x is [n] or batched [B,n]; w is [m,n]; returns [m] or [B,m].
Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b);
DenseGrads dense_backward(const Tensor& grad_out, const Tensor& cached_input, const Tensor& w);

// ---------------------------------------------------------------------------
// Batch normalization over [B,C,H,W], statistics per channel across (B,H,W)
// ---------------------------------------------------------------------------

enum class BnMode { train, infer };

struct BatchNormState {
    Tensor gamma;         // [C]
    Tensor beta;          // [C]
    Tensor running_mean;  // [C]
    Tensor running_var;   // [C], entries >= 0
    float eps = 1e-5f;
    float momentum = 0.9f;  // keep-rate of the running stats

    explicit BatchNormState(int channels = 1);
};

struct BnCache {
    Tensor x_hat;     // normalized input
    Tensor inv_std;   // [C]
    Tensor gamma;     // snapshot used in forward
};

struct BnGrads {
    Tensor input;
    Tensor gamma;
    Tensor beta;
};

/// Train mode uses batch statistics (B >= 2 required) and updates the running
/// stats in `state`; infer mode is a pure function of input and running stats.
/// Pass `cache` in train mode to enable the backward pass.
Tensor batchnorm_forward(const Tensor& x, BatchNormState& state, BnMode mode, BnCache* cache = nullptr);

BnGrads batchnorm_backward(const Tensor& grad_out, const BnCache& cache);

// ---------------------------------------------------------------------------
// Activations and loss
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& grad_out, const Tensor& cached_input);

Tensor sigmoid(const Tensor& x);
/// Takes the *forward output* y (gradient is y(1-y) elementwise).
Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& cached_output);

/// L = (1/T) sum_i ||pred_i - target_i||^2 where T is the sample count:
/// dim 0 for rank >= 2 tensors, 1 otherwise. Squared error is summed over all
/// elements of each sample, then averaged over samples.
float mse_loss(const Tensor& pred, const Tensor& target, Tensor* grad = nullptr);

}  // namespace csinet::nn
