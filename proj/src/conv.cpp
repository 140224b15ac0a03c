#include "ncodec/conv.hpp"

#include <algorithm>

#include "ncodec/error.hpp"

namespace ncodec {

namespace {

inline int64_t floor_div(int64_t a, int64_t b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
inline int64_t ceil_div(int64_t a, int64_t b) { return -floor_div(-a, b); }

// Output range [lo, hi] whose input index t*stride + base lies in [0, in_len).
inline void valid_range(int64_t base, int64_t stride, int64_t in_len, int64_t out_len, int64_t& lo, int64_t& hi) {
    lo = std::max<int64_t>(0, ceil_div(-base, stride));
    hi = std::min<int64_t>(out_len - 1, floor_div(in_len - 1 - base, stride));
}

float dot(const float* a, const float* b, int64_t n) {
    float acc[16] = {};
    int64_t i = 0;
    for (; i + 16 <= n; i += 16)
        for (int j = 0; j < 16; ++j) acc[j] += a[i + j] * b[i + j];
    float s = 0.0f;
    for (int j = 0; j < 16; ++j) s += acc[j];
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

float strided_dot(const float* a, const float* b, int64_t stride, int64_t n) {
    float s = 0.0f;
    for (int64_t i = 0; i < n; ++i) s += a[i] * b[i * stride];
    return s;
}

void check_groups(int64_t in_ch, int64_t out_ch, int64_t groups) {
    if (groups < 1 || in_ch % groups != 0 || out_ch % groups != 0)
        throw Error(ErrorKind::shape, "conv1d: channels (" + std::to_string(in_ch) + ", " + std::to_string(out_ch) +
                                    ") not divisible by groups " + std::to_string(groups));
}

}  // namespace

void conv1d_forward(const float* x, int64_t in_ch, int64_t in_len, const float* w, int64_t out_ch, int64_t kernel,
                    const float* bias, const ConvGeometry& g, float* y) {
    check_groups(in_ch, out_ch, g.groups);
    const int64_t cin_g = in_ch / g.groups, cout_g = out_ch / g.groups, T = g.out_len;
    for (int64_t co = 0; co < out_ch; ++co) {
        float* yr = y + co * T;
        std::fill(yr, yr + T, bias ? bias[co] : 0.0f);
    }
    for (int64_t grp = 0; grp < g.groups; ++grp) {
        const int64_t co_end = (grp + 1) * cout_g;
        for (int64_t co0 = grp * cout_g; co0 < co_end; co0 += 4) {
            const int64_t nb = std::min<int64_t>(4, co_end - co0);
            for (int64_t ci = 0; ci < cin_g; ++ci) {
                const float* xr = x + (grp * cin_g + ci) * in_len;
                for (int64_t k = 0; k < kernel; ++k) {
                    const int64_t base = g.offset - k * g.dilation;
                    int64_t lo, hi;
                    valid_range(base, g.stride, in_len, T, lo, hi);
                    if (lo > hi) continue;
                    float wv[4];
                    for (int64_t j = 0; j < nb; ++j) wv[j] = w[((co0 + j) * cin_g + ci) * kernel + k];
                    if (g.stride == 1) {
                        const float* xp = xr + base;
                        if (nb == 4) {
                            float* y0 = y + co0 * T;
                            float* y1 = y0 + T;
                            float* y2 = y1 + T;
                            float* y3 = y2 + T;
                            const float w0 = wv[0], w1 = wv[1], w2 = wv[2], w3 = wv[3];
                            for (int64_t t = lo; t <= hi; ++t) {
                                const float xv = xp[t];
                                y0[t] += w0 * xv;
                                y1[t] += w1 * xv;
                                y2[t] += w2 * xv;
                                y3[t] += w3 * xv;
                            }
                        } else {
                            for (int64_t j = 0; j < nb; ++j) {
                                float* yr = y + (co0 + j) * T;
                                const float wj = wv[j];
                                for (int64_t t = lo; t <= hi; ++t) yr[t] += wj * xp[t];
                            }
                        }
                    } else {
                        for (int64_t j = 0; j < nb; ++j) {
                            float* yr = y + (co0 + j) * T;
                            const float wj = wv[j];
                            for (int64_t t = lo; t <= hi; ++t) yr[t] += wj * xr[t * g.stride + base];
                        }
                    }
                }
            }
        }
    }
}

void conv1d_backward(const float* x, int64_t in_ch, int64_t in_len, const float* w, int64_t out_ch, int64_t kernel,
                     const ConvGeometry& g, const float* gy, float* gx, float* gw, float* gb) {
    check_groups(in_ch, out_ch, g.groups);
    const int64_t cin_g = in_ch / g.groups, cout_g = out_ch / g.groups, T = g.out_len;
    if (gb)
        for (int64_t co = 0; co < out_ch; ++co) {
            const float* gr = gy + co * T;
            float s = 0.0f;
            for (int64_t t = 0; t < T; ++t) s += gr[t];
            gb[co] += s;
        }
    for (int64_t grp = 0; grp < g.groups; ++grp) {
        for (int64_t ci = 0; ci < cin_g; ++ci) {
            const int64_t cin = grp * cin_g + ci;
            const float* xr = x + cin * in_len;
            float* gxr = gx ? gx + cin * in_len : nullptr;
            for (int64_t k = 0; k < kernel; ++k) {
                const int64_t base = g.offset - k * g.dilation;
                int64_t lo, hi;
                valid_range(base, g.stride, in_len, T, lo, hi);
                if (lo > hi) continue;
                const int64_t n = hi - lo + 1;
                for (int64_t co = grp * cout_g; co < (grp + 1) * cout_g; ++co) {
                    const float* gr = gy + co * T;
                    const int64_t widx = (co * cin_g + ci) * kernel + k;
                    if (gw) {
                        gw[widx] += g.stride == 1 ? dot(gr + lo, xr + lo + base, n)
                                                  : strided_dot(gr + lo, xr + lo * g.stride + base, g.stride, n);
                    }
                    if (gxr) {
                        const float wv = w[widx];
                        if (g.stride == 1) {
                            float* gp = gxr + base;
                            for (int64_t t = lo; t <= hi; ++t) gp[t] += wv * gr[t];
                        } else {
                            for (int64_t t = lo; t <= hi; ++t) gxr[t * g.stride + base] += wv * gr[t];
                        }
                    }
                }
            }
        }
    }
}

void conv_transpose1d_forward(const float* x, int64_t in_ch, int64_t in_len, const float* w, int64_t out_ch,
                              int64_t kernel, const float* bias, int64_t stride, int64_t out_len, float* y) {
    for (int64_t co = 0; co < out_ch; ++co) {
        float* yr = y + co * out_len;
        std::fill(yr, yr + out_len, bias ? bias[co] : 0.0f);
        for (int64_t ci = 0; ci < in_ch; ++ci) {
            const float* xr = x + ci * in_len;
            const float* wr = w + (ci * out_ch + co) * kernel;
            for (int64_t j = 0; j < kernel; ++j) {
                if (j >= out_len) break;
                const int64_t hi = std::min<int64_t>(in_len - 1, (out_len - 1 - j) / stride);
                const float wv = wr[j];
                float* yp = yr + j;
                for (int64_t t = 0; t <= hi; ++t) yp[t * stride] += wv * xr[t];
            }
        }
    }
}

void conv_transpose1d_backward(const float* x, int64_t in_ch, int64_t in_len, const float* w, int64_t out_ch,
                               int64_t kernel, int64_t stride, int64_t out_len, const float* gy, float* gx, float* gw,
                               float* gb) {
    for (int64_t co = 0; co < out_ch; ++co) {
        const float* gr = gy + co * out_len;
        if (gb) {
            float s = 0.0f;
            for (int64_t t = 0; t < out_len; ++t) s += gr[t];
            gb[co] += s;
        }
        for (int64_t ci = 0; ci < in_ch; ++ci) {
            const float* xr = x + ci * in_len;
            float* gxr = gx ? gx + ci * in_len : nullptr;
            const int64_t wbase = (ci * out_ch + co) * kernel;
            for (int64_t j = 0; j < kernel; ++j) {
                if (j >= out_len) break;
                const int64_t hi = std::min<int64_t>(in_len - 1, (out_len - 1 - j) / stride);
                const float* gp = gr + j;
                if (gw) gw[wbase + j] += strided_dot(xr, gp, stride, hi + 1);
                if (gxr) {
                    const float wv = w[wbase + j];
                    for (int64_t t = 0; t <= hi; ++t) gxr[t] += wv * gp[t * stride];
                }
            }
        }
    }
}

}  // namespace ncodec
