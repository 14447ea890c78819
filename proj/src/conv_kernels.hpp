#pragma once

// Direct 3x3 same-padding convolution kernels on single-sample [C,H,W] planes.
// All loops are written so gcc/clang auto-vectorize the x dimension; on one
// AVX-512 core this outruns an im2col+sgemm formulation for the small channel
// counts used here (2..16 feature maps).

namespace csinet::nn::detail {

// dst must hold C*(H+2)*(W+2) floats; borders are zeroed.
void pad_image(const float* src, float* dst, int C, int H, int W);

// out[Co,H,W] = bias + w (cross-correlation) padded input. `pad` is the padded
// input from pad_image.
void conv3x3_forward(const float* pad, const float* w, const float* bias, float* out, int Cin,
                     int Cout, int H, int W);

// gw[Co,Ci,3,3] += correlation of grad with the padded input; gb[Co] += row sums.
void conv3x3_grad_weights(const float* pad_in, const float* grad, float* gw, float* gb, int Cin,
                          int Cout, int H, int W);

}  // namespace csinet::nn::detail
