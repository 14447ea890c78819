#include "csinet/nn_ops.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>

#include "conv_kernels.hpp"
#include "csinet/errors.hpp"

namespace csinet::nn {

Param::Param(std::string n, Tensor init)
    : name(std::move(n)),
      value(std::move(init)),
      grad(Tensor::zeros(value.shape())),
      adam_m(Tensor::zeros(value.shape())),
      adam_v(Tensor::zeros(value.shape())) {}

void adam_update(Param& p, const AdamConfig& cfg) {
    if (!p.grad.all_finite()) {
        throw TrainingError("non-finite gradient for parameter '" + p.name + "'");
    }
    p.step_count += 1;
    const double t = static_cast<double>(p.step_count);
    const float bc1 = 1.0f - static_cast<float>(std::pow(cfg.beta1, t));
    const float bc2 = 1.0f - static_cast<float>(std::pow(cfg.beta2, t));
    float* val = p.value.data();
    float* g = p.grad.data();
    float* m = p.adam_m.data();
    float* v = p.adam_v.data();
    const std::int64_t n = p.value.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * g[i] * g[i];
        const float m_hat = m[i] / bc1;
        const float v_hat = v[i] / bc2;
        val[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

Tensor glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
    if (fan_in <= 0 || fan_out <= 0) throw UsageError("glorot_uniform: fans must be positive");
    const double limit = std::sqrt(6.0 / (static_cast<double>(fan_in) + fan_out));
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        t[i] = static_cast<float>(rng.uniform(-limit, limit));
    }
    return t;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

namespace {

void check_conv_args(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& b,
                     int channel_axis) {
    if (x.dim(channel_axis) != spec.in_channels) {
        throw ShapeError("conv2d: input channel axis has " + std::to_string(x.dim(channel_axis)) +
                         " channels, spec expects " + std::to_string(spec.in_channels));
    }
    if (w.rank() != 4 || w.dim(0) != spec.out_channels || w.dim(1) != spec.in_channels ||
        w.dim(2) != 3 || w.dim(3) != 3) {
        throw ShapeError("conv2d: weights must be [" + std::to_string(spec.out_channels) + ", " +
                         std::to_string(spec.in_channels) + ", 3, 3], got " + w.shape_str());
    }
    if (b.rank() != 1 || b.dim(0) != spec.out_channels) {
        throw ShapeError("conv2d: bias must be [" + std::to_string(spec.out_channels) + "], got " +
                         b.shape_str());
    }
}

thread_local std::vector<float> g_pad_scratch;

float* pad_scratch(std::int64_t n) {
    if (static_cast<std::int64_t>(g_pad_scratch.size()) < n) g_pad_scratch.resize(n);
    return g_pad_scratch.data();
}

// Sum of n floats with four independent double accumulators, so the adds
// pipeline instead of forming one serial dependency chain.
double sum4(const float* p, std::int64_t n) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        a0 += p[i];
        a1 += p[i + 1];
        a2 += p[i + 2];
        a3 += p[i + 3];
    }
    for (; i < n; ++i) a0 += p[i];
    return (a0 + a1) + (a2 + a3);
}

double sumsq_about4(const float* p, std::int64_t n, double mu) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const double d0 = p[i] - mu, d1 = p[i + 1] - mu, d2 = p[i + 2] - mu, d3 = p[i + 3] - mu;
        a0 += d0 * d0;
        a1 += d1 * d1;
        a2 += d2 * d2;
        a3 += d3 * d3;
    }
    for (; i < n; ++i) {
        const double d = p[i] - mu;
        a0 += d * d;
    }
    return (a0 + a1) + (a2 + a3);
}

void sum_and_dot4(const float* a, const float* b, std::int64_t n, double& sum_a, double& dot_ab) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    double d0 = 0.0, d1 = 0.0, d2 = 0.0, d3 = 0.0;
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i];
        s1 += a[i + 1];
        s2 += a[i + 2];
        s3 += a[i + 3];
        d0 += static_cast<double>(a[i]) * b[i];
        d1 += static_cast<double>(a[i + 1]) * b[i + 1];
        d2 += static_cast<double>(a[i + 2]) * b[i + 2];
        d3 += static_cast<double>(a[i + 3]) * b[i + 3];
    }
    for (; i < n; ++i) {
        s0 += a[i];
        d0 += static_cast<double>(a[i]) * b[i];
    }
    sum_a = (s0 + s1) + (s2 + s3);
    dot_ab = (d0 + d1) + (d2 + d3);
}

// Channel-transposed, 180-degree rotated weights: the input gradient of a
// cross-correlation is a cross-correlation with these.
Tensor flip_transpose_weights(const Tensor& w) {
    const int Co = w.dim(0), Ci = w.dim(1);
    Tensor wt({Ci, Co, 3, 3});
    for (int co = 0; co < Co; ++co)
        for (int ci = 0; ci < Ci; ++ci)
            for (int a = 0; a < 3; ++a)
                for (int bb = 0; bb < 3; ++bb)
                    wt[((static_cast<std::int64_t>(ci) * Co + co) * 3 + a) * 3 + bb] =
                        w[((static_cast<std::int64_t>(co) * Ci + ci) * 3 + (2 - a)) * 3 + (2 - bb)];
    return wt;
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& b) {
    if (x.rank() != 3) throw ShapeError("conv2d_forward: input must be [C,H,W], got " + x.shape_str());
    check_conv_args(x, spec, w, b, 0);
    const int H = x.dim(1), W = x.dim(2);
    Tensor out({spec.out_channels, H, W});
    float* pad = pad_scratch(static_cast<std::int64_t>(spec.in_channels) * (H + 2) * (W + 2));
    detail::pad_image(x.data(), pad, spec.in_channels, H, W);
    detail::conv3x3_forward(pad, w.data(), b.data(), out.data(), spec.in_channels,
                            spec.out_channels, H, W);
    return out;
}

Tensor conv2d_forward_batch(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& b) {
    if (x.rank() != 4) throw ShapeError("conv2d_forward_batch: input must be [B,C,H,W], got " + x.shape_str());
    check_conv_args(x, spec, w, b, 1);
    const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
    Tensor out({B, spec.out_channels, H, W});
    const std::int64_t in_stride = static_cast<std::int64_t>(spec.in_channels) * H * W;
    const std::int64_t out_stride = static_cast<std::int64_t>(spec.out_channels) * H * W;
    float* pad = pad_scratch(static_cast<std::int64_t>(spec.in_channels) * (H + 2) * (W + 2));
    for (int i = 0; i < B; ++i) {
        detail::pad_image(x.data() + i * in_stride, pad, spec.in_channels, H, W);
        detail::conv3x3_forward(pad, w.data(), b.data(), out.data() + i * out_stride,
                                spec.in_channels, spec.out_channels, H, W);
    }
    return out;
}

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& cached_input, const ConvSpec& spec,
                          const Tensor& w) {
    if (cached_input.rank() != 3) throw UsageError("conv2d_backward: missing or malformed forward cache");
    const int H = cached_input.dim(1), W = cached_input.dim(2);
    if (grad_out.rank() != 3 || grad_out.dim(0) != spec.out_channels || grad_out.dim(1) != H ||
        grad_out.dim(2) != W) {
        throw ShapeError("conv2d_backward: grad_out must be [" + std::to_string(spec.out_channels) +
                         "," + std::to_string(H) + "," + std::to_string(W) + "], got " +
                         grad_out.shape_str());
    }
    ConvGrads g{Tensor::zeros(cached_input.shape()), Tensor::zeros(w.shape()),
                Tensor::zeros({spec.out_channels})};

    float* pad = pad_scratch(static_cast<std::int64_t>(std::max(spec.in_channels, spec.out_channels)) *
                             (H + 2) * (W + 2));
    detail::pad_image(cached_input.data(), pad, spec.in_channels, H, W);
    detail::conv3x3_grad_weights(pad, grad_out.data(), g.weights.data(), g.bias.data(),
                                 spec.in_channels, spec.out_channels, H, W);

    const Tensor wt = flip_transpose_weights(w);
    const Tensor zero_bias = Tensor::zeros({spec.in_channels});
    detail::pad_image(grad_out.data(), pad, spec.out_channels, H, W);
    detail::conv3x3_forward(pad, wt.data(), zero_bias.data(), g.input.data(), spec.out_channels,
                            spec.in_channels, H, W);
    return g;
}

ConvGrads conv2d_backward_batch(const Tensor& grad_out, const Tensor& cached_input,
                                const ConvSpec& spec, const Tensor& w) {
    if (cached_input.rank() != 4) throw UsageError("conv2d_backward_batch: missing or malformed forward cache");
    const int B = cached_input.dim(0), H = cached_input.dim(2), W = cached_input.dim(3);
    if (grad_out.shape() != std::vector<int>{B, spec.out_channels, H, W}) {
        throw ShapeError("conv2d_backward_batch: grad_out shape " + grad_out.shape_str() +
                         " does not match forward output");
    }
    ConvGrads g{Tensor::zeros(cached_input.shape()), Tensor::zeros(w.shape()),
                Tensor::zeros({spec.out_channels})};
    const std::int64_t in_stride = static_cast<std::int64_t>(spec.in_channels) * H * W;
    const std::int64_t out_stride = static_cast<std::int64_t>(spec.out_channels) * H * W;
    float* pad = pad_scratch(static_cast<std::int64_t>(std::max(spec.in_channels, spec.out_channels)) *
                             (H + 2) * (W + 2));
    const Tensor wt = flip_transpose_weights(w);
    const Tensor zero_bias = Tensor::zeros({spec.in_channels});
    for (int i = 0; i < B; ++i) {
        detail::pad_image(cached_input.data() + i * in_stride, pad, spec.in_channels, H, W);
        detail::conv3x3_grad_weights(pad, grad_out.data() + i * out_stride, g.weights.data(),
                                     g.bias.data(), spec.in_channels, spec.out_channels, H, W);
        detail::pad_image(grad_out.data() + i * out_stride, pad, spec.out_channels, H, W);
        detail::conv3x3_forward(pad, wt.data(), zero_bias.data(), g.input.data() + i * in_stride,
                                spec.out_channels, spec.in_channels, H, W);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.rank() != 2) throw ShapeError("dense_forward: weights must be [m,n], got " + w.shape_str());
    const int m = w.dim(0), n = w.dim(1);
    if (b.rank() != 1 || b.dim(0) != m) {
        throw ShapeError("dense_forward: bias axis must be [" + std::to_string(m) + "], got " + b.shape_str());
    }
    if (x.rank() == 1) {
        if (x.dim(0) != n) {
            throw ShapeError("dense_forward: input axis has " + std::to_string(x.dim(0)) +
                             " features, weights expect " + std::to_string(n));
        }
        Tensor y({m});
        std::memcpy(y.data(), b.data(), sizeof(float) * m);
        cblas_sgemv(CblasRowMajor, CblasNoTrans, m, n, 1.0f, w.data(), n, x.data(), 1, 1.0f,
                    y.data(), 1);
        return y;
    }
    if (x.rank() != 2 || x.dim(1) != n) {
        throw ShapeError("dense_forward: input must be [n] or [B,n] with n=" + std::to_string(n) +
                         ", got " + x.shape_str());
    }
    const int B = x.dim(0);
    Tensor y({B, m});
    for (int i = 0; i < B; ++i) std::memcpy(y.data() + static_cast<std::int64_t>(i) * m, b.data(), sizeof(float) * m);
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, B, m, n, 1.0f, x.data(), n, w.data(), n,
                1.0f, y.data(), m);
    return y;
}

DenseGrads dense_backward(const Tensor& grad_out, const Tensor& cached_input, const Tensor& w) {
    const int m = w.dim(0), n = w.dim(1);
    DenseGrads g{Tensor::zeros(cached_input.shape()), Tensor::zeros(w.shape()), Tensor::zeros({m})};
    if (cached_input.rank() == 1) {
        if (grad_out.rank() != 1 || grad_out.dim(0) != m) {
            throw ShapeError("dense_backward: grad_out must be [" + std::to_string(m) + "], got " +
                             grad_out.shape_str());
        }
        cblas_sgemv(CblasRowMajor, CblasTrans, m, n, 1.0f, w.data(), n, grad_out.data(), 1, 0.0f,
                    g.input.data(), 1);
        cblas_sger(CblasRowMajor, m, n, 1.0f, grad_out.data(), 1, cached_input.data(), 1,
                   g.weights.data(), n);
        std::memcpy(g.bias.data(), grad_out.data(), sizeof(float) * m);
        return g;
    }
    const int B = cached_input.dim(0);
    if (grad_out.rank() != 2 || grad_out.dim(0) != B || grad_out.dim(1) != m) {
        throw ShapeError("dense_backward: grad_out must be [" + std::to_string(B) + "," +
                         std::to_string(m) + "], got " + grad_out.shape_str());
    }
    // g.input = grad_out * W ; g.weights = grad_out^T * x ; g.bias = column sums
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, B, n, m, 1.0f, grad_out.data(), m,
                w.data(), n, 0.0f, g.input.data(), n);
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, m, n, B, 1.0f, grad_out.data(), m,
                cached_input.data(), n, 0.0f, g.weights.data(), n);
    for (int i = 0; i < B; ++i) {
        const float* row = grad_out.data() + static_cast<std::int64_t>(i) * m;
        for (int j = 0; j < m; ++j) g.bias[j] += row[j];
    }
    return g;
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

BatchNormState::BatchNormState(int channels)
    : gamma(Tensor::full({channels}, 1.0f)),
      beta(Tensor::zeros({channels})),
      running_mean(Tensor::zeros({channels})),
      running_var(Tensor::full({channels}, 1.0f)) {}

Tensor batchnorm_forward(const Tensor& x, BatchNormState& state, BnMode mode, BnCache* cache) {
    if (x.rank() != 4) throw ShapeError("batchnorm_forward: input must be [B,C,H,W], got " + x.shape_str());
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (state.gamma.dim(0) != C) {
        throw ShapeError("batchnorm_forward: state has " + std::to_string(state.gamma.dim(0)) +
                         " channels, input channel axis has " + std::to_string(C));
    }
    Tensor out(x.shape());
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const std::int64_t sample = static_cast<std::int64_t>(C) * plane;
    const double count = static_cast<double>(B) * plane;

    Tensor mean({C}), inv_std({C});
    if (mode == BnMode::train) {
        if (B < 2) throw UsageError("batchnorm_forward: train mode needs a batch of at least 2");
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int i = 0; i < B; ++i) s += sum4(x.data() + i * sample + c * plane, plane);
            const double mu = s / count;
            double sv = 0.0;
            for (int i = 0; i < B; ++i) sv += sumsq_about4(x.data() + i * sample + c * plane, plane, mu);
            const double var = sv / count;
            mean[c] = static_cast<float>(mu);
            inv_std[c] = static_cast<float>(1.0 / std::sqrt(var + state.eps));
            state.running_mean[c] =
                state.momentum * state.running_mean[c] + (1.0f - state.momentum) * static_cast<float>(mu);
            state.running_var[c] =
                state.momentum * state.running_var[c] + (1.0f - state.momentum) * static_cast<float>(var);
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = state.running_mean[c];
            inv_std[c] = 1.0f / std::sqrt(state.running_var[c] + state.eps);
        }
    }

    if (cache) {
        cache->x_hat = Tensor(x.shape());
        cache->inv_std = inv_std;
        cache->gamma = state.gamma;
    }
    for (int c = 0; c < C; ++c) {
        const float mu = mean[c], is = inv_std[c];
        const float ga = state.gamma[c], be = state.beta[c];
        for (int i = 0; i < B; ++i) {
            const float* p = x.data() + i * sample + c * plane;
            float* o = out.data() + i * sample + c * plane;
            float* xh = cache ? cache->x_hat.data() + i * sample + c * plane : nullptr;
            for (std::int64_t k = 0; k < plane; ++k) {
                const float h = (p[k] - mu) * is;
                if (xh) xh[k] = h;
                o[k] = ga * h + be;
            }
        }
    }
    return out;
}

BnGrads batchnorm_backward(const Tensor& grad_out, const BnCache& cache) {
    require_same_shape(grad_out, cache.x_hat, "batchnorm_backward grad_out");
    const int B = grad_out.dim(0), C = grad_out.dim(1), H = grad_out.dim(2), W = grad_out.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const std::int64_t sample = static_cast<std::int64_t>(C) * plane;
    const double count = static_cast<double>(B) * plane;

    BnGrads g{Tensor::zeros(grad_out.shape()), Tensor::zeros({C}), Tensor::zeros({C})};
    for (int c = 0; c < C; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int i = 0; i < B; ++i) {
            double sg = 0.0, sgx = 0.0;
            sum_and_dot4(grad_out.data() + i * sample + c * plane,
                         cache.x_hat.data() + i * sample + c * plane, plane, sg, sgx);
            sum_g += sg;
            sum_gx += sgx;
        }
        g.beta[c] = static_cast<float>(sum_g);
        g.gamma[c] = static_cast<float>(sum_gx);
        const float mean_g = static_cast<float>(sum_g / count);
        const float mean_gx = static_cast<float>(sum_gx / count);
        const float scale = cache.gamma[c] * cache.inv_std[c];
        for (int i = 0; i < B; ++i) {
            const float* go = grad_out.data() + i * sample + c * plane;
            const float* xh = cache.x_hat.data() + i * sample + c * plane;
            float* gi = g.input.data() + i * sample + c * plane;
            for (std::int64_t k = 0; k < plane; ++k) {
                gi[k] = scale * (go[k] - mean_g - xh[k] * mean_gx);
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Activations, loss
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
    Tensor y(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
    return y;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& cached_input) {
    require_same_shape(grad_out, cached_input, "relu_backward");
    Tensor g(grad_out.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = cached_input[i] > 0.0f ? grad_out[i] : 0.0f;
    return g;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = 1.0f / (1.0f + std::exp(-x[i]));
    return y;
}

Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& cached_output) {
    require_same_shape(grad_out, cached_output, "sigmoid_backward");
    Tensor g(grad_out.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) {
        const float y = cached_output[i];
        g[i] = grad_out[i] * y * (1.0f - y);
    }
    return g;
}

float mse_loss(const Tensor& pred, const Tensor& target, Tensor* grad) {
    require_same_shape(pred, target, "mse_loss");
    const std::int64_t T = pred.rank() >= 2 ? pred.dim(0) : 1;
    double acc = 0.0;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        const double d = static_cast<double>(pred[i]) - target[i];
        acc += d * d;
    }
    if (grad) {
        *grad = Tensor(pred.shape());
        const float scale = 2.0f / static_cast<float>(T);
        for (std::int64_t i = 0; i < pred.numel(); ++i) {
            (*grad)[i] = scale * (pred[i] - target[i]);
        }
    }
    return static_cast<float>(acc / static_cast<double>(T));
}

}  // namespace csinet::nn
