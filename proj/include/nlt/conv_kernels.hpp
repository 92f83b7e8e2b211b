#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <vector>

#if defined(__AVX512F__) && defined(__AVX512VL__)
#include <immintrin.h>
#define NLT_CONV_AVX512 1
#endif

namespace nlt {
namespace detail {

// ---------------------------------------------------------------------------
// Generic reference-grade kernels: any stride/padding, float32 storage,
// float64 accumulators.
// ---------------------------------------------------------------------------

inline void conv2d_forward_generic(const float* in, int n_batch, int c_in, int h, int w,
                                   const float* weight, int c_out, int kh, int kw,
                                   const float* bias, int stride, int pad,
                                   float* out, int h2, int w2) {
    std::vector<double> acc(static_cast<std::size_t>(h2) * w2);
    for (int n = 0; n < n_batch; ++n) {
        for (int oc = 0; oc < c_out; ++oc) {
            std::fill(acc.begin(), acc.end(), bias ? static_cast<double>(bias[oc]) : 0.0);
            for (int ic = 0; ic < c_in; ++ic) {
                const float* in_plane = in + (static_cast<std::size_t>(n) * c_in + ic) * h * w;
                const float* wk = weight + (static_cast<std::size_t>(oc) * c_in + ic) * kh * kw;
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        const double wv = wk[ky * kw + kx];
                        if (stride == 1) {
                            const int off = kx - pad;
                            const int lo = std::max(0, -off);
                            const int hi = std::min(w2, w - off);
                            const int oy_lo = std::max(0, pad - ky);
                            const int oy_hi = std::min(h2, h + pad - ky);
                            for (int oy = oy_lo; oy < oy_hi; ++oy) {
                                const float* src = in_plane + static_cast<std::size_t>(oy - pad + ky) * w + off;
                                double* arow = acc.data() + static_cast<std::size_t>(oy) * w2;
                                for (int ox = lo; ox < hi; ++ox) arow[ox] += static_cast<double>(src[ox]) * wv;
                            }
                        } else {
                            for (int oy = 0; oy < h2; ++oy) {
                                const int iy = oy * stride - pad + ky;
                                if (iy < 0 || iy >= h) continue;
                                const float* src = in_plane + static_cast<std::size_t>(iy) * w;
                                double* arow = acc.data() + static_cast<std::size_t>(oy) * w2;
                                for (int ox = 0; ox < w2; ++ox) {
                                    const int ix = ox * stride - pad + kx;
                                    if (ix >= 0 && ix < w) arow[ox] += static_cast<double>(src[ix]) * wv;
                                }
                            }
                        }
                    }
                }
            }
            float* out_plane = out + (static_cast<std::size_t>(n) * c_out + oc) * h2 * w2;
            for (std::size_t i = 0; i < acc.size(); ++i) out_plane[i] = static_cast<float>(acc[i]);
        }
    }
}

inline void conv2d_backward_input_generic(const float* gout, int n_batch, int c_out, int h2, int w2,
                                          const float* weight, int c_in, int kh, int kw,
                                          int stride, int pad,
                                          float* gin, int h, int w) {
    std::vector<double> acc(static_cast<std::size_t>(h) * w);
    for (int n = 0; n < n_batch; ++n) {
        for (int ic = 0; ic < c_in; ++ic) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int oc = 0; oc < c_out; ++oc) {
                const float* g_plane = gout + (static_cast<std::size_t>(n) * c_out + oc) * h2 * w2;
                const float* wk = weight + (static_cast<std::size_t>(oc) * c_in + ic) * kh * kw;
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        const double wv = wk[ky * kw + kx];
                        if (stride == 1) {
                            const int off = kx - pad;
                            const int lo = std::max(0, -off);
                            const int hi = std::min(w2, w - off);
                            const int oy_lo = std::max(0, pad - ky);
                            const int oy_hi = std::min(h2, h + pad - ky);
                            for (int oy = oy_lo; oy < oy_hi; ++oy) {
                                const float* grow = g_plane + static_cast<std::size_t>(oy) * w2;
                                double* arow = acc.data() + static_cast<std::size_t>(oy - pad + ky) * w + off;
                                for (int ox = lo; ox < hi; ++ox) arow[ox] += static_cast<double>(grow[ox]) * wv;
                            }
                        } else {
                            for (int oy = 0; oy < h2; ++oy) {
                                const int iy = oy * stride - pad + ky;
                                if (iy < 0 || iy >= h) continue;
                                const float* grow = g_plane + static_cast<std::size_t>(oy) * w2;
                                for (int ox = 0; ox < w2; ++ox) {
                                    const int ix = ox * stride - pad + kx;
                                    if (ix >= 0 && ix < w)
                                        acc[static_cast<std::size_t>(iy) * w + ix] += static_cast<double>(grow[ox]) * wv;
                                }
                            }
                        }
                    }
                }
            }
            float* g_plane = gin + (static_cast<std::size_t>(n) * c_in + ic) * h * w;
            for (std::size_t i = 0; i < acc.size(); ++i) g_plane[i] += static_cast<float>(acc[i]);
        }
    }
}

// Row reduction with four independent partial sums, combined in a fixed order.
inline double dot_rows(const float* a, const float* b, int lo, int hi) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int ox = lo;
    for (; ox + 4 <= hi; ox += 4) {
        s0 += static_cast<double>(a[ox]) * b[ox];
        s1 += static_cast<double>(a[ox + 1]) * b[ox + 1];
        s2 += static_cast<double>(a[ox + 2]) * b[ox + 2];
        s3 += static_cast<double>(a[ox + 3]) * b[ox + 3];
    }
    double tail = 0.0;
    for (; ox < hi; ++ox) tail += static_cast<double>(a[ox]) * b[ox];
    return ((s0 + s1) + (s2 + s3)) + tail;
}

inline void conv2d_backward_weight_generic(const float* gout, int n_batch, int c_out, int h2, int w2,
                                           const float* in, int c_in, int h, int w,
                                           int kh, int kw, int stride, int pad,
                                           float* gweight) {
    std::vector<double> acc(static_cast<std::size_t>(kh) * kw);
    for (int oc = 0; oc < c_out; ++oc) {
        for (int ic = 0; ic < c_in; ++ic) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int n = 0; n < n_batch; ++n) {
                const float* g_plane = gout + (static_cast<std::size_t>(n) * c_out + oc) * h2 * w2;
                const float* in_plane = in + (static_cast<std::size_t>(n) * c_in + ic) * h * w;
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        double s = 0.0;
                        if (stride == 1) {
                            const int off = kx - pad;
                            const int lo = std::max(0, -off);
                            const int hi = std::min(w2, w - off);
                            const int oy_lo = std::max(0, pad - ky);
                            const int oy_hi = std::min(h2, h + pad - ky);
                            for (int oy = oy_lo; oy < oy_hi; ++oy) {
                                const float* grow = g_plane + static_cast<std::size_t>(oy) * w2;
                                const float* src = in_plane + static_cast<std::size_t>(oy - pad + ky) * w + off;
                                s += dot_rows(grow, src, lo, hi);
                            }
                        } else {
                            for (int oy = 0; oy < h2; ++oy) {
                                const int iy = oy * stride - pad + ky;
                                if (iy < 0 || iy >= h) continue;
                                const float* grow = g_plane + static_cast<std::size_t>(oy) * w2;
                                const float* src = in_plane + static_cast<std::size_t>(iy) * w;
                                for (int ox = 0; ox < w2; ++ox) {
                                    const int ix = ox * stride - pad + kx;
                                    if (ix >= 0 && ix < w) s += static_cast<double>(grow[ox]) * src[ix];
                                }
                            }
                        }
                        acc[static_cast<std::size_t>(ky) * kw + kx] += s;
                    }
                }
            }
            float* gw = gweight + (static_cast<std::size_t>(oc) * c_in + ic) * kh * kw;
            for (std::size_t i = 0; i < acc.size(); ++i) gw[i] += static_cast<float>(acc[i]);
        }
    }
}

inline void conv2d_backward_bias_kernel(const float* gout, int n_batch, int c_out, int h2, int w2,
                                        float* gbias) {
    for (int oc = 0; oc < c_out; ++oc) {
        double s = 0.0;
        for (int n = 0; n < n_batch; ++n) {
            const float* g_plane = gout + (static_cast<std::size_t>(n) * c_out + oc) * h2 * w2;
            const std::size_t len = static_cast<std::size_t>(h2) * w2;
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            std::size_t i = 0;
            for (; i + 4 <= len; i += 4) {
                s0 += g_plane[i];
                s1 += g_plane[i + 1];
                s2 += g_plane[i + 2];
                s3 += g_plane[i + 3];
            }
            double tail = 0.0;
            for (; i < len; ++i) tail += g_plane[i];
            s += ((s0 + s1) + (s2 + s3)) + tail;
        }
        gbias[oc] += static_cast<float>(s);
    }
}

#ifdef NLT_CONV_AVX512

// ---------------------------------------------------------------------------
// Stride-1 fast paths. Input planes are copied once per image into a
// zero-filled buffer with the spatial padding baked in plus 16 columns of
// slack, so the hot loops run branch-free full-width vector loads; lanes in
// the slack are zero and contribute nothing. Accumulators are registers of
// 8 doubles.
// ---------------------------------------------------------------------------

struct PaddedPlanes {
    std::unique_ptr<float[]> buf;
    std::size_t capacity = 0;
    int rows = 0;
    int row_stride = 0;

    // Only the borders and slack are zeroed; the interior is overwritten.
    void build(const float* src, int channels, int h, int w, int pad) {
        rows = h + 2 * pad;
        row_stride = w + 2 * pad + 16;
        const std::size_t needed = static_cast<std::size_t>(channels) * rows * row_stride;
        if (needed > capacity) {
            buf.reset(new float[needed]);
            capacity = needed;
        }
        for (int c = 0; c < channels; ++c) {
            const float* s = src + static_cast<std::size_t>(c) * h * w;
            float* plane = buf.get() + static_cast<std::size_t>(c) * rows * row_stride;
            std::fill_n(plane, static_cast<std::size_t>(pad) * row_stride, 0.0f);
            std::fill_n(plane + static_cast<std::size_t>(pad + h) * row_stride,
                        static_cast<std::size_t>(pad) * row_stride, 0.0f);
            for (int y = 0; y < h; ++y) {
                float* d = plane + static_cast<std::size_t>(y + pad) * row_stride;
                std::fill_n(d, pad, 0.0f);
                std::copy(s + static_cast<std::size_t>(y) * w, s + static_cast<std::size_t>(y + 1) * w, d + pad);
                std::fill_n(d + pad + w, row_stride - pad - w, 0.0f);
            }
        }
    }

    const float* row(int channel, int padded_row) const {
        return buf.get() + (static_cast<std::size_t>(channel) * rows + padded_row) * row_stride;
    }
};

inline void conv2d_forward_avx512(const float* in, int n_batch, int c_in, int h, int w,
                                  const float* weight, int c_out, int kh, int kw,
                                  const float* bias, int pad,
                                  float* out, int h2, int w2) {
    PaddedPlanes planes;
    for (int n = 0; n < n_batch; ++n) {
        planes.build(in + static_cast<std::size_t>(n) * c_in * h * w, c_in, h, w, pad);
        for (int oc = 0; oc < c_out; ++oc) {
            const float* wk_base = weight + static_cast<std::size_t>(oc) * c_in * kh * kw;
            const __m512d vbias = _mm512_set1_pd(bias ? static_cast<double>(bias[oc]) : 0.0);
            float* out_plane = out + (static_cast<std::size_t>(n) * c_out + oc) * h2 * w2;
            for (int oy = 0; oy < h2; ++oy) {
                float* orow = out_plane + static_cast<std::size_t>(oy) * w2;
                int x0 = 0;
                for (; x0 + 16 <= w2; x0 += 16) {
                    __m512d a0 = vbias, a1 = vbias;
                    for (int ic = 0; ic < c_in; ++ic) {
                        const float* wk = wk_base + static_cast<std::size_t>(ic) * kh * kw;
                        for (int ky = 0; ky < kh; ++ky) {
                            const float* prow = planes.row(ic, oy + ky) + x0;
                            for (int kx = 0; kx < kw; ++kx) {
                                const __m512d wv = _mm512_set1_pd(static_cast<double>(wk[ky * kw + kx]));
                                a0 = _mm512_fmadd_pd(_mm512_cvtps_pd(_mm256_loadu_ps(prow + kx)), wv, a0);
                                a1 = _mm512_fmadd_pd(_mm512_cvtps_pd(_mm256_loadu_ps(prow + kx + 8)), wv, a1);
                            }
                        }
                    }
                    _mm256_storeu_ps(orow + x0, _mm512_cvtpd_ps(a0));
                    _mm256_storeu_ps(orow + x0 + 8, _mm512_cvtpd_ps(a1));
                }
                for (; x0 < w2; x0 += 8) {
                    const int rem = std::min(8, w2 - x0);
                    const __mmask8 m = static_cast<__mmask8>((1u << rem) - 1);
                    __m512d a0 = vbias;
                    for (int ic = 0; ic < c_in; ++ic) {
                        const float* wk = wk_base + static_cast<std::size_t>(ic) * kh * kw;
                        for (int ky = 0; ky < kh; ++ky) {
                            const float* prow = planes.row(ic, oy + ky) + x0;
                            for (int kx = 0; kx < kw; ++kx) {
                                const __m512d wv = _mm512_set1_pd(static_cast<double>(wk[ky * kw + kx]));
                                a0 = _mm512_fmadd_pd(_mm512_cvtps_pd(_mm256_loadu_ps(prow + kx)), wv, a0);
                            }
                        }
                    }
                    _mm256_mask_storeu_ps(orow + x0, m, _mm512_cvtpd_ps(a0));
                }
            }
        }
    }
}

/// Input gradient as a forward-shaped correlation of the padded output
/// gradient with the spatially flipped kernel.
inline void conv2d_backward_input_avx512(const float* gout, int n_batch, int c_out, int h2, int w2,
                                         const float* weight, int c_in, int kh, int kw, int pad,
                                         float* gin, int h, int w) {
    const int pad_y = kh - 1 - pad;
    PaddedPlanes planes;
    for (int n = 0; n < n_batch; ++n) {
        planes.build(gout + static_cast<std::size_t>(n) * c_out * h2 * w2, c_out, h2, w2, pad_y);
        for (int ic = 0; ic < c_in; ++ic) {
            float* gin_plane = gin + (static_cast<std::size_t>(n) * c_in + ic) * h * w;
            for (int iy = 0; iy < h; ++iy) {
                float* grow_out = gin_plane + static_cast<std::size_t>(iy) * w;
                int x0 = 0;
                for (; x0 + 16 <= w; x0 += 16) {
                    __m512d a0 = _mm512_setzero_pd(), a1 = _mm512_setzero_pd();
                    for (int oc = 0; oc < c_out; ++oc) {
                        const float* wk = weight + (static_cast<std::size_t>(oc) * c_in + ic) * kh * kw;
                        for (int ky = 0; ky < kh; ++ky) {
                            const float* prow = planes.row(oc, iy + ky) + x0;
                            for (int kx = 0; kx < kw; ++kx) {
                                const __m512d wv = _mm512_set1_pd(wk[(kh - 1 - ky) * kw + (kw - 1 - kx)]);
                                a0 = _mm512_fmadd_pd(_mm512_cvtps_pd(_mm256_loadu_ps(prow + kx)), wv, a0);
                                a1 = _mm512_fmadd_pd(_mm512_cvtps_pd(_mm256_loadu_ps(prow + kx + 8)), wv, a1);
                            }
                        }
                    }
                    _mm256_storeu_ps(grow_out + x0,
                                     _mm256_add_ps(_mm256_loadu_ps(grow_out + x0), _mm512_cvtpd_ps(a0)));
                    _mm256_storeu_ps(grow_out + x0 + 8,
                                     _mm256_add_ps(_mm256_loadu_ps(grow_out + x0 + 8), _mm512_cvtpd_ps(a1)));
                }
                for (; x0 < w; x0 += 8) {
                    const int rem = std::min(8, w - x0);
                    const __mmask8 m = static_cast<__mmask8>((1u << rem) - 1);
                    __m512d a0 = _mm512_setzero_pd();
                    for (int oc = 0; oc < c_out; ++oc) {
                        const float* wk = weight + (static_cast<std::size_t>(oc) * c_in + ic) * kh * kw;
                        for (int ky = 0; ky < kh; ++ky) {
                            const float* prow = planes.row(oc, iy + ky) + x0;
                            for (int kx = 0; kx < kw; ++kx) {
                                const double wv = wk[(kh - 1 - ky) * kw + (kw - 1 - kx)];
                                a0 = _mm512_fmadd_pd(_mm512_cvtps_pd(_mm256_loadu_ps(prow + kx)),
                                                     _mm512_set1_pd(wv), a0);
                            }
                        }
                    }
                    const __m256 add = _mm512_cvtpd_ps(a0);
                    const __m256 prev = _mm256_maskz_loadu_ps(m, grow_out + x0);
                    _mm256_mask_storeu_ps(grow_out + x0, m, _mm256_add_ps(prev, add));
                }
            }
        }
    }
}

inline void conv2d_backward_weight_avx512(const float* gout, int n_batch, int c_out, int h2, int w2,
                                          const float* in, int c_in, int h, int w,
                                          int kh, int kw, int pad, float* gweight) {
    std::vector<double> wacc(static_cast<std::size_t>(c_out) * c_in * kh * kw, 0.0);
    PaddedPlanes planes;
    for (int n = 0; n < n_batch; ++n) {
        planes.build(in + static_cast<std::size_t>(n) * c_in * h * w, c_in, h, w, pad);
        for (int oc = 0; oc < c_out; ++oc) {
            const float* g_plane = gout + (static_cast<std::size_t>(n) * c_out + oc) * h2 * w2;
            for (int ic = 0; ic < c_in; ++ic) {
                double* wa = wacc.data() + (static_cast<std::size_t>(oc) * c_in + ic) * kh * kw;
                for (int ky = 0; ky < kh; ++ky) {
                    // one vector accumulator per kx, sharing each gradient load
                    __m512d acc[7];
                    for (int kx = 0; kx < kw; ++kx) acc[kx] = _mm512_setzero_pd();
                    const int full = w2 & ~7;
                    for (int oy = 0; oy < h2; ++oy) {
                        const float* grow = g_plane + static_cast<std::size_t>(oy) * w2;
                        const float* prow = planes.row(ic, oy + ky);
                        int x0 = 0;
                        for (; x0 < full; x0 += 8) {
                            const __m512d gvec = _mm512_cvtps_pd(_mm256_loadu_ps(grow + x0));
                            for (int kx = 0; kx < kw; ++kx)
                                acc[kx] = _mm512_fmadd_pd(_mm512_cvtps_pd(_mm256_loadu_ps(prow + x0 + kx)), gvec,
                                                          acc[kx]);
                        }
                        if (x0 < w2) {
                            const __mmask8 m = static_cast<__mmask8>((1u << (w2 - x0)) - 1);
                            const __m512d gvec = _mm512_cvtps_pd(_mm256_maskz_loadu_ps(m, grow + x0));
                            for (int kx = 0; kx < kw; ++kx)
                                acc[kx] = _mm512_fmadd_pd(_mm512_cvtps_pd(_mm256_loadu_ps(prow + x0 + kx)), gvec,
                                                          acc[kx]);
                        }
                    }
                    for (int kx = 0; kx < kw; ++kx) wa[ky * kw + kx] += _mm512_reduce_add_pd(acc[kx]);
                }
            }
        }
    }
    for (std::size_t i = 0; i < wacc.size(); ++i) gweight[i] += static_cast<float>(wacc[i]);
}

#endif  // NLT_CONV_AVX512

// ---------------------------------------------------------------------------
// Dispatchers.
// ---------------------------------------------------------------------------

inline void conv2d_forward_kernel(const float* in, int n_batch, int c_in, int h, int w,
                                  const float* weight, int c_out, int kh, int kw,
                                  const float* bias, int stride, int pad,
                                  float* out, int h2, int w2) {
#ifdef NLT_CONV_AVX512
    if (stride == 1 && kw <= 7) {
        conv2d_forward_avx512(in, n_batch, c_in, h, w, weight, c_out, kh, kw, bias, pad, out, h2, w2);
        return;
    }
#endif
    conv2d_forward_generic(in, n_batch, c_in, h, w, weight, c_out, kh, kw, bias, stride, pad, out, h2, w2);
}

inline void conv2d_backward_input_kernel(const float* gout, int n_batch, int c_out, int h2, int w2,
                                         const float* weight, int c_in, int kh, int kw,
                                         int stride, int pad,
                                         float* gin, int h, int w) {
#ifdef NLT_CONV_AVX512
    if (stride == 1 && kh == kw && kw <= 7 && pad < kh) {
        conv2d_backward_input_avx512(gout, n_batch, c_out, h2, w2, weight, c_in, kh, kw, pad, gin, h, w);
        return;
    }
#endif
    conv2d_backward_input_generic(gout, n_batch, c_out, h2, w2, weight, c_in, kh, kw, stride, pad, gin, h, w);
}

inline void conv2d_backward_weight_kernel(const float* gout, int n_batch, int c_out, int h2, int w2,
                                          const float* in, int c_in, int h, int w,
                                          int kh, int kw, int stride, int pad,
                                          float* gweight) {
#ifdef NLT_CONV_AVX512
    if (stride == 1 && kw <= 7) {
        conv2d_backward_weight_avx512(gout, n_batch, c_out, h2, w2, in, c_in, h, w, kh, kw, pad, gweight);
        return;
    }
#endif
    conv2d_backward_weight_generic(gout, n_batch, c_out, h2, w2, in, c_in, h, w, kh, kw, stride, pad, gweight);
}

}  // namespace detail
}  // namespace nlt
