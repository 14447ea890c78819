#include "conv_kernels.hpp"

#include <cstring>

namespace csinet::nn::detail {

namespace {
// Stack row accumulators cover every width the models use; wider inputs take
// the unblocked path.
constexpr int kMaxW = 256;
}  // namespace

void pad_image(const float* src, float* dst, int C, int H, int W) {
    const int PH = H + 2, PW = W + 2;
    for (int c = 0; c < C; ++c) {
        float* d = dst + static_cast<size_t>(c) * PH * PW;
        std::memset(d, 0, sizeof(float) * PW);
        for (int y = 0; y < H; ++y) {
            float* row = d + static_cast<size_t>(y + 1) * PW;
            row[0] = 0.0f;
            std::memcpy(row + 1, src + (static_cast<size_t>(c) * H + y) * W, sizeof(float) * W);
            row[PW - 1] = 0.0f;
        }
        std::memset(d + static_cast<size_t>(PH - 1) * PW, 0, sizeof(float) * PW);
    }
}

namespace {

// One output channel at a time; used for the Cout%4 tail and W > kMaxW.
void forward_single(const float* pad, const float* w, float bias, float* out, int co, int Cin,
                    int H, int W) {
    const int PW = W + 2;
    for (int y = 0; y < H; ++y) {
        float* orow = out + (static_cast<size_t>(co) * H + y) * W;
        for (int x = 0; x < W; ++x) orow[x] = bias;
        for (int ci = 0; ci < Cin; ++ci) {
            const float* r0 = pad + (static_cast<size_t>(ci) * (H + 2) + y) * PW;
            const float* r1 = r0 + PW;
            const float* r2 = r1 + PW;
            const float* wk = w + (static_cast<size_t>(co) * Cin + ci) * 9;
            for (int x = 0; x < W; ++x) {
                orow[x] += wk[0] * r0[x] + wk[1] * r0[x + 1] + wk[2] * r0[x + 2] +
                           wk[3] * r1[x] + wk[4] * r1[x + 1] + wk[5] * r1[x + 2] +
                           wk[6] * r2[x] + wk[7] * r2[x + 1] + wk[8] * r2[x + 2];
            }
        }
    }
}

}  // namespace

void conv3x3_forward(const float* pad, const float* w, const float* bias, float* out, int Cin,
                     int Cout, int H, int W) {
    if (W > kMaxW) {
        for (int co = 0; co < Cout; ++co) forward_single(pad, w, bias[co], out, co, Cin, H, W);
        return;
    }
    const int PW = W + 2;
    int co = 0;
    for (; co + 4 <= Cout; co += 4) {
        for (int y = 0; y < H; ++y) {
            float a0[kMaxW], a1[kMaxW], a2[kMaxW], a3[kMaxW];
            for (int x = 0; x < W; ++x) {
                a0[x] = bias[co];
                a1[x] = bias[co + 1];
                a2[x] = bias[co + 2];
                a3[x] = bias[co + 3];
            }
            for (int ci = 0; ci < Cin; ++ci) {
                const float* r0 = pad + (static_cast<size_t>(ci) * (H + 2) + y) * PW;
                const float* r1 = r0 + PW;
                const float* r2 = r1 + PW;
                const float* w0 = w + (static_cast<size_t>(co + 0) * Cin + ci) * 9;
                const float* w1 = w + (static_cast<size_t>(co + 1) * Cin + ci) * 9;
                const float* w2 = w + (static_cast<size_t>(co + 2) * Cin + ci) * 9;
                const float* w3 = w + (static_cast<size_t>(co + 3) * Cin + ci) * 9;
                for (int x = 0; x < W; ++x) {
                    const float v00 = r0[x], v01 = r0[x + 1], v02 = r0[x + 2];
                    const float v10 = r1[x], v11 = r1[x + 1], v12 = r1[x + 2];
                    const float v20 = r2[x], v21 = r2[x + 1], v22 = r2[x + 2];
                    a0[x] += w0[0] * v00 + w0[1] * v01 + w0[2] * v02 + w0[3] * v10 + w0[4] * v11 +
                             w0[5] * v12 + w0[6] * v20 + w0[7] * v21 + w0[8] * v22;
                    a1[x] += w1[0] * v00 + w1[1] * v01 + w1[2] * v02 + w1[3] * v10 + w1[4] * v11 +
                             w1[5] * v12 + w1[6] * v20 + w1[7] * v21 + w1[8] * v22;
                    a2[x] += w2[0] * v00 + w2[1] * v01 + w2[2] * v02 + w2[3] * v10 + w2[4] * v11 +
                             w2[5] * v12 + w2[6] * v20 + w2[7] * v21 + w2[8] * v22;
                    a3[x] += w3[0] * v00 + w3[1] * v01 + w3[2] * v02 + w3[3] * v10 + w3[4] * v11 +
                             w3[5] * v12 + w3[6] * v20 + w3[7] * v21 + w3[8] * v22;
                }
            }
            std::memcpy(out + (static_cast<size_t>(co + 0) * H + y) * W, a0, sizeof(float) * W);
            std::memcpy(out + (static_cast<size_t>(co + 1) * H + y) * W, a1, sizeof(float) * W);
            std::memcpy(out + (static_cast<size_t>(co + 2) * H + y) * W, a2, sizeof(float) * W);
            std::memcpy(out + (static_cast<size_t>(co + 3) * H + y) * W, a3, sizeof(float) * W);
        }
    }
    for (; co < Cout; ++co) forward_single(pad, w, bias[co], out, co, Cin, H, W);
}

void conv3x3_grad_weights(const float* pad_in, const float* grad, float* gw, float* gb, int Cin,
                          int Cout, int H, int W) {
    const int PW = W + 2;
    // Nine lane-wise accumulator vectors per (co, ci) pair, folded to scalars
    // once per pair. Lanes are disjoint, so the l loops vectorize without any
    // reduction reordering inside them; the fold order is fixed by the code.
    constexpr int VL = 16;
    for (int co = 0; co < Cout; ++co) {
        const float* g = grad + static_cast<size_t>(co) * H * W;
        double bsum = 0.0;
        for (int i = 0; i < H * W; ++i) bsum += g[i];
        gb[co] += static_cast<float>(bsum);
        for (int ci = 0; ci < Cin; ++ci) {
            float vacc[9][VL] = {};
            for (int y = 0; y < H; ++y) {
                const float* grow = g + static_cast<size_t>(y) * W;
                const float* r0 = pad_in + (static_cast<size_t>(ci) * (H + 2) + y) * PW;
                const float* r1 = r0 + PW;
                const float* r2 = r1 + PW;
                int x = 0;
                for (; x + VL <= W; x += VL) {
#pragma omp simd
                    for (int l = 0; l < VL; ++l) {
                        const float gv = grow[x + l];
                        vacc[0][l] += gv * r0[x + l];
                        vacc[1][l] += gv * r0[x + l + 1];
                        vacc[2][l] += gv * r0[x + l + 2];
                        vacc[3][l] += gv * r1[x + l];
                        vacc[4][l] += gv * r1[x + l + 1];
                        vacc[5][l] += gv * r1[x + l + 2];
                        vacc[6][l] += gv * r2[x + l];
                        vacc[7][l] += gv * r2[x + l + 1];
                        vacc[8][l] += gv * r2[x + l + 2];
                    }
                }
                for (; x < W; ++x) {
                    const float gv = grow[x];
                    const int l = x % VL;
                    vacc[0][l] += gv * r0[x];
                    vacc[1][l] += gv * r0[x + 1];
                    vacc[2][l] += gv * r0[x + 2];
                    vacc[3][l] += gv * r1[x];
                    vacc[4][l] += gv * r1[x + 1];
                    vacc[5][l] += gv * r1[x + 2];
                    vacc[6][l] += gv * r2[x];
                    vacc[7][l] += gv * r2[x + 1];
                    vacc[8][l] += gv * r2[x + 2];
                }
            }
            float* wk = gw + (static_cast<size_t>(co) * Cin + ci) * 9;
            for (int k = 0; k < 9; ++k) {
                float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
                for (int l = 0; l + 4 <= VL; l += 4) {
                    s0 += vacc[k][l];
                    s1 += vacc[k][l + 1];
                    s2 += vacc[k][l + 2];
                    s3 += vacc[k][l + 3];
                }
                wk[k] += (s0 + s1) + (s2 + s3);
            }
        }
    }
}

}  // namespace csinet::nn::detail
