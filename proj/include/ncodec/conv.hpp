#pragma once

#include <cstdint>

namespace ncodec {

// Raw 1-D convolution kernels over a single batch item, channel-major rows.
//
// Weights use lag order: tap k multiplies the input k*dilation samples before
// the newest sample an output reads, so a causal stride-1 convolution is
//   y[co][t] = b[co] + sum_ci sum_k w[co][ci][k] * x[ci][t - k*dilation].
// Every output element accumulates bias first, then (input channel, tap) in
// lexicographic order, independent of how the input is chunked. Streaming and
// batch evaluation are therefore bit-identical.
struct ConvGeometry {
    int64_t stride = 1;
    int64_t dilation = 1;
    int64_t groups = 1;
    // Input index of the newest sample read by output 0 (lag-0 tap).
    int64_t offset = 0;
    int64_t out_len = 0;
};

// w: [out_ch, in_ch / groups, kernel]; bias may be null. Indices outside
// [0, in_len) read as zero.
void conv1d_forward(const float* x, int64_t in_ch, int64_t in_len, const float* w, int64_t out_ch, int64_t kernel,
                    const float* bias, const ConvGeometry& g, float* y);

// Accumulates (+=) into gx, gw, gb; any of them may be null.
void conv1d_backward(const float* x, int64_t in_ch, int64_t in_len, const float* w, int64_t out_ch, int64_t kernel,
                     const ConvGeometry& g, const float* gy, float* gx, float* gw, float* gb);

// Causal transposed convolution: y[co][t*stride + j] += w[ci][co][j] * x[ci][t],
// keeping output positions [0, out_len). w: [in_ch, out_ch, kernel].
void conv_transpose1d_forward(const float* x, int64_t in_ch, int64_t in_len, const float* w, int64_t out_ch,
                              int64_t kernel, const float* bias, int64_t stride, int64_t out_len, float* y);

void conv_transpose1d_backward(const float* x, int64_t in_ch, int64_t in_len, const float* w, int64_t out_ch,
                               int64_t kernel, int64_t stride, int64_t out_len, const float* gy, float* gx, float* gw,
                               float* gb);

}  // namespace ncodec
