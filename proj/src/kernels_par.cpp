// OpenMP kernels. Work is split over output elements only; every output is
// accumulated by one thread in the same order as the serial reference, so
// results match pc::ref bit for bit at any thread count.

#include "promptcount/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pc {
namespace par {

void conv2d_fwd(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad,
                Tensor& y) {
    const int cin = x.dim(0), hin = x.dim(1), win = x.dim(2);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int hout = (hin + 2 * pad - kh) / stride + 1;
    const int wout = (win + 2 * pad - kw) / stride + 1;
    y = Tensor({cout, hout, wout});
    const double* xp = x.data();
    const double* wp = w.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int co = 0; co < cout; ++co) {
        for (int oy = 0; oy < hout; ++oy) {
            // Valid tap ranges hoisted out of the pixel loop; skipped taps
            // contribute nothing, so accumulation order matches the serial
            // reference.
            const int ky0 = std::max(0, pad - oy * stride);
            const int ky1 = std::min(kh, hin + pad - oy * stride);
            double* yrow = y.data() + (static_cast<int64_t>(co) * hout + oy) * wout;
            for (int ox = 0; ox < wout; ++ox) {
                const int kx0 = std::max(0, pad - ox * stride);
                const int kx1 = std::min(kw, win + pad - ox * stride);
                double acc = b.v.empty() ? 0.0 : b[co];
                for (int ci = 0; ci < cin; ++ci) {
                    const double* xci = xp + static_cast<int64_t>(ci) * hin * win;
                    const double* wci =
                        wp + (static_cast<int64_t>(co) * cin + ci) * kh * kw;
                    for (int ky = ky0; ky < ky1; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        const double* xrow = xci + static_cast<int64_t>(iy) * win;
                        const double* wrow = wci + static_cast<int64_t>(ky) * kw;
                        const int ixbase = ox * stride - pad;
                        for (int kx = kx0; kx < kx1; ++kx)
                            acc += xrow[ixbase + kx] * wrow[kx];
                    }
                }
                yrow[ox] = acc;
            }
        }
    }
}

void conv2d_bwd_input(const Tensor& gy, const Tensor& w, int stride, int pad, Tensor& gx) {
    const int cout = gy.dim(0), hout = gy.dim(1), wout = gy.dim(2);
    const int cin = gx.dim(0), hin = gx.dim(1), win = gx.dim(2);
    const int kh = w.dim(2), kw = w.dim(3);
    const double* gyp = gy.data();
    const double* wp = w.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int ci = 0; ci < cin; ++ci) {
        for (int iy = 0; iy < hin; ++iy) {
            // ky must satisfy (iy + pad - ky) % stride == 0; start at the
            // first such tap and step by the stride. Visits the same valid
            // taps in the same order as the serial reference.
            const int ky_first = (iy + pad) % stride;
            double* gxrow = gx.data() + (static_cast<int64_t>(ci) * hin + iy) * win;
            for (int ix = 0; ix < win; ++ix) {
                const int kx_first = (ix + pad) % stride;
                double acc = 0.0;
                for (int co = 0; co < cout; ++co) {
                    const double* gyc = gyp + static_cast<int64_t>(co) * hout * wout;
                    const double* wci =
                        wp + (static_cast<int64_t>(co) * cin + ci) * kh * kw;
                    for (int ky = ky_first; ky < kh; ky += stride) {
                        const int oy = (iy + pad - ky) / stride;
                        if (oy < 0 || oy >= hout) continue;
                        const double* gyrow = gyc + static_cast<int64_t>(oy) * wout;
                        const double* wrow = wci + static_cast<int64_t>(ky) * kw;
                        for (int kx = kx_first; kx < kw; kx += stride) {
                            const int ox = (ix + pad - kx) / stride;
                            if (ox < 0 || ox >= wout) continue;
                            acc += gyrow[ox] * wrow[kx];
                        }
                    }
                }
                gxrow[ix] += acc;
            }
        }
    }
}

void conv2d_bwd_params(const Tensor& gy, const Tensor& x, int stride, int pad, Tensor& gw,
                       Tensor& gb) {
    const int cout = gy.dim(0), hout = gy.dim(1), wout = gy.dim(2);
    const int cin = x.dim(0), hin = x.dim(1), win = x.dim(2);
    const int kh = gw.dim(2), kw = gw.dim(3);
#pragma omp parallel for collapse(2) schedule(static)
    for (int co = 0; co < cout; ++co) {
        for (int ci = 0; ci < cin; ++ci) {
            const double* gyc = gy.data() + static_cast<int64_t>(co) * hout * wout;
            const double* xci = x.data() + static_cast<int64_t>(ci) * hin * win;
            for (int ky = 0; ky < kh; ++ky) {
                // oy bounds so that iy = oy*stride - pad + ky stays in range.
                const int oy0 = std::max(0, (pad - ky + stride - 1) / stride);
                const int oy1 = std::min(hout, (hin - 1 + pad - ky) / stride + 1);
                for (int kx = 0; kx < kw; ++kx) {
                    const int ox0 = std::max(0, (pad - kx + stride - 1) / stride);
                    const int ox1 = std::min(wout, (win - 1 + pad - kx) / stride + 1);
                    double acc = 0.0;
                    for (int oy = oy0; oy < oy1; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        const double* gyrow = gyc + static_cast<int64_t>(oy) * wout;
                        const double* xrow = xci + static_cast<int64_t>(iy) * win;
                        const int ixbase = kx - pad;
                        for (int ox = ox0; ox < ox1; ++ox)
                            acc += gyrow[ox] * xrow[ox * stride + ixbase];
                    }
                    gw.at4(co, ci, ky, kx) += acc;
                }
            }
        }
    }
#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co) {
        double acc = 0.0;
        for (int oy = 0; oy < hout; ++oy)
            for (int ox = 0; ox < wout; ++ox) acc += gy.at3(co, oy, ox);
        gb[co] += acc;
    }
}

void act_fwd(const Tensor& x, Activation a, Tensor& y) {
    y.shape = x.shape;
    y.v.resize(x.v.size());
    const int64_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) y[i] = activation_apply(a, x[i]);
}

void act_bwd(const Tensor& x, const Tensor& y, const Tensor& gy, Activation a, Tensor& gx) {
    const int64_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        double d = 1.0;
        switch (a) {
            case Activation::Identity: d = 1.0; break;
            case Activation::ReLU: d = x[i] > 0.0 ? 1.0 : 0.0; break;
            case Activation::Softplus: d = 1.0 / (1.0 + std::exp(-x[i])); break;
            case Activation::Sigmoid: d = y[i] * (1.0 - y[i]); break;
            case Activation::Tanh: d = 1.0 - y[i] * y[i]; break;
        }
        gx[i] += gy[i] * d;
    }
}

void matvec_fwd(const Tensor& w, const Tensor& b, const Tensor& x, Tensor& y) {
    const int out = w.dim(0), in = w.dim(1);
    y = Tensor({out});
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out; ++o) {
        double acc = b.v.empty() ? 0.0 : b[o];
        for (int i = 0; i < in; ++i) acc += w.at2(o, i) * x[i];
        y[o] = acc;
    }
}

void matvec_bwd(const Tensor& w, const Tensor& x, const Tensor& gy, Tensor& gw, Tensor& gb,
                Tensor& gx) {
    const int out = w.dim(0), in = w.dim(1);
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out; ++o) {
        for (int i = 0; i < in; ++i) gw.at2(o, i) += gy[o] * x[i];
        gb[o] += gy[o];
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < in; ++i) {
        double acc = 0.0;
        for (int o = 0; o < out; ++o) acc += gy[o] * w.at2(o, i);
        gx[i] += acc;
    }
}

void masked_mean_fwd(const Tensor& F, const Tensor& m, Tensor& t, double& mass) {
    const int c = F.dim(0);
    const int64_t n = m.numel();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += m[i];
    mass = s;
    t = Tensor({c});
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        const double* row = F.data() + static_cast<int64_t>(ch) * n;
        for (int64_t i = 0; i < n; ++i) acc += row[i] * m[i];
        t[ch] = acc / s;
    }
}

void masked_mean_bwd(const Tensor& F, const Tensor& m, const Tensor& t, double mass,
                     const Tensor& gt, Tensor& gF, Tensor& gm) {
    const int c = F.dim(0);
    const int64_t n = m.numel();
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        const double g = gt[ch] / mass;
        double* grow = gF.data() + static_cast<int64_t>(ch) * n;
        for (int64_t i = 0; i < n; ++i) grow[i] += g * m[i];
    }
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int ch = 0; ch < c; ++ch)
            acc += gt[ch] * (F.data()[static_cast<int64_t>(ch) * n + i] - t[ch]);
        gm[i] += acc / mass;
    }
}

void attn_scores_fwd(const Tensor& k, const Tensor& q, int heads, Tensor& s) {
    const int a = k.dim(0), h = k.dim(1), w = k.dim(2);
    const int per = a / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(per));
    const int64_t n = static_cast<int64_t>(h) * w;
    s = Tensor({heads, h, w});
#pragma omp parallel for collapse(2) schedule(static)
    for (int hd = 0; hd < heads; ++hd) {
        for (int64_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int c = hd * per; c < (hd + 1) * per; ++c)
                acc += q[c] * k.data()[static_cast<int64_t>(c) * n + i];
            s.data()[static_cast<int64_t>(hd) * n + i] = acc * scale;
        }
    }
}

void attn_scores_bwd(const Tensor& k, const Tensor& q, int heads, const Tensor& gs, Tensor& gk,
                     Tensor& gq) {
    const int a = k.dim(0), h = k.dim(1), w = k.dim(2);
    const int per = a / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(per));
    const int64_t n = static_cast<int64_t>(h) * w;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < a; ++c) {
        const int hd = c / per;
        const double* gs_row = gs.data() + static_cast<int64_t>(hd) * n;
        const double* k_row = k.data() + static_cast<int64_t>(c) * n;
        double* gk_row = gk.data() + static_cast<int64_t>(c) * n;
        double acc = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            acc += gs_row[i] * k_row[i];
            gk_row[i] += gs_row[i] * q[c] * scale;
        }
        gq[c] += acc * scale;
    }
}

void gate_fwd(const Tensor& v, const Tensor& s, Tensor& y) {
    const int a = v.dim(0);
    const int heads = s.dim(0);
    const int per = a / heads;
    const int64_t n = static_cast<int64_t>(v.dim(1)) * v.dim(2);
    y = Tensor(v.shape);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < a; ++c) {
        const double* srow = s.data() + static_cast<int64_t>(c / per) * n;
        const double* vrow = v.data() + static_cast<int64_t>(c) * n;
        double* yrow = y.data() + static_cast<int64_t>(c) * n;
        for (int64_t i = 0; i < n; ++i) yrow[i] = vrow[i] * srow[i];
    }
}

void gate_bwd(const Tensor& v, const Tensor& s, const Tensor& gy, Tensor& gv, Tensor& gs) {
    const int a = v.dim(0);
    const int heads = s.dim(0);
    const int per = a / heads;
    const int64_t n = static_cast<int64_t>(v.dim(1)) * v.dim(2);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < a; ++c) {
        const double* srow = s.data() + static_cast<int64_t>(c / per) * n;
        const double* grow = gy.data() + static_cast<int64_t>(c) * n;
        double* gvrow = gv.data() + static_cast<int64_t>(c) * n;
        for (int64_t i = 0; i < n; ++i) gvrow[i] += grow[i] * srow[i];
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (int hd = 0; hd < heads; ++hd) {
        for (int64_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int c = hd * per; c < (hd + 1) * per; ++c)
                acc += gy.data()[static_cast<int64_t>(c) * n + i] *
                       v.data()[static_cast<int64_t>(c) * n + i];
            gs.data()[static_cast<int64_t>(hd) * n + i] += acc;
        }
    }
}

void sse_fwd(const Tensor& a, const Tensor& b, double& out) {
    // Fixed-order pairwise accumulation over contiguous chunks keeps the sum
    // identical to the serial reference regardless of thread count.
    const int64_t n = a.numel();
    const int64_t chunk = 4096;
    const int64_t nchunks = (n + chunk - 1) / chunk;
    std::vector<double> partial(static_cast<size_t>(nchunks), 0.0);
#pragma omp parallel for schedule(static)
    for (int64_t c = 0; c < nchunks; ++c) {
        double acc = 0.0;
        const int64_t hi = std::min(n, (c + 1) * chunk);
        for (int64_t i = c * chunk; i < hi; ++i) {
            const double d = a[i] - b[i];
            acc += d * d;
        }
        partial[static_cast<size_t>(c)] = acc;
    }
    double acc = 0.0;
    for (double p : partial) acc += p;
    out = acc;
}

void sse_bwd(const Tensor& a, const Tensor& b, double g, double coeff, Tensor& ga, Tensor& gb) {
    const int64_t n = a.numel();
    const double k = 2.0 * g * coeff;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        ga[i] += k * d;
        gb[i] -= k * d;
    }
}

void gaussian_density(const std::vector<std::array<double, 2>>& points, double sigma, int height,
                      int width, Tensor& out) {
    out = Tensor({height, width});
    const double inv = 1.0 / (2.0 * 3.14159265358979323846 * sigma * sigma);
    const double denom = 2.0 * sigma * sigma;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (const auto& p : points) {
                const double dx = x - p[0];
                const double dy = y - p[1];
                acc += std::exp(-(dx * dx + dy * dy) / denom) * inv;
            }
            out.at2(y, x) = acc;
        }
    }
}

void center_spatial_fwd(const Tensor& x, Tensor& y) {
    const int c = x.dim(0);
    const int64_t n = static_cast<int64_t>(x.dim(1)) * x.dim(2);
    y = Tensor(x.shape);
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        const double* row = x.data() + static_cast<int64_t>(ch) * n;
        double* out = y.data() + static_cast<int64_t>(ch) * n;
        double mean = 0;
        for (int64_t i = 0; i < n; ++i) mean += row[i];
        mean /= static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) out[i] = row[i] - mean;
    }
}

void center_spatial_bwd(const Tensor& gy, Tensor& gx) {
    const int c = gy.dim(0);
    const int64_t n = static_cast<int64_t>(gy.dim(1)) * gy.dim(2);
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        const double* grow = gy.data() + static_cast<int64_t>(ch) * n;
        double* gout = gx.data() + static_cast<int64_t>(ch) * n;
        double mean = 0;
        for (int64_t i = 0; i < n; ++i) mean += grow[i];
        mean /= static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) gout[i] += grow[i] - mean;
    }
}

void sub_rowmean_fwd(const Tensor& t, const Tensor& F, Tensor& y) {
    const int c = F.dim(0);
    const int64_t n = static_cast<int64_t>(F.dim(1)) * F.dim(2);
    y = Tensor({c});
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        const double* row = F.data() + static_cast<int64_t>(ch) * n;
        double mean = 0;
        for (int64_t i = 0; i < n; ++i) mean += row[i];
        y[ch] = t[ch] - mean / static_cast<double>(n);
    }
}

void sub_rowmean_bwd(const Tensor& gy, int64_t cells, Tensor& gt, Tensor& gF) {
    const int c = gy.dim(0);
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        gt[ch] += gy[ch];
        const double spread = gy[ch] / static_cast<double>(cells);
        double* grow = gF.data() + static_cast<int64_t>(ch) * cells;
        for (int64_t i = 0; i < cells; ++i) grow[i] -= spread;
    }
}

void attn_norm_fwd(const Tensor& s, Tensor& y) {
    const int heads = s.dim(0);
    const int64_t n = static_cast<int64_t>(s.dim(1)) * s.dim(2);
    y = Tensor(s.shape);
    
#pragma omp parallel for schedule(static)
    for (int h = 0; h < heads; ++h) {
        const double* row = s.data() + static_cast<int64_t>(h) * n;
        double* out = y.data() + static_cast<int64_t>(h) * n;
        double mx = row[0];
        for (int64_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
        double denom = 0;
        for (int64_t i = 0; i < n; ++i) denom += std::exp(row[i] - mx);
        const double scale = static_cast<double>(n) / denom;
        for (int64_t i = 0; i < n; ++i) out[i] = std::exp(row[i] - mx) * scale;
    }
}

// y = n * softmax(s): ds_i = y_i / n * (gy_i - sum_j gy_j y_j / n) ... scaled form below.
void attn_norm_bwd(const Tensor& y, const Tensor& gy, Tensor& gs) {
    const int heads = y.dim(0);
    const int64_t n = static_cast<int64_t>(y.dim(1)) * y.dim(2);
    
#pragma omp parallel for schedule(static)
    for (int h = 0; h < heads; ++h) {
        const double* yrow = y.data() + static_cast<int64_t>(h) * n;
        const double* grow = gy.data() + static_cast<int64_t>(h) * n;
        double* out = gs.data() + static_cast<int64_t>(h) * n;
        double dot = 0;
        for (int64_t i = 0; i < n; ++i) dot += grow[i] * yrow[i];
        dot /= static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) out[i] += yrow[i] * (grow[i] - dot);
    }
}



namespace {
constexpr double kCosEpsP = 1e-12;
}

void attn_cosine_fwd(const Tensor& k, const Tensor& q, int heads, Tensor& y) {
    const int a = k.dim(0), h = k.dim(1), w = k.dim(2);
    const int per = a / heads;
    const int64_t n = static_cast<int64_t>(h) * w;
    y = Tensor({heads, h, w});
    for (int hd = 0; hd < heads; ++hd) {
        double qn = kCosEpsP;
        for (int c = hd * per; c < (hd + 1) * per; ++c) qn += q[c] * q[c];
        qn = std::sqrt(qn);
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) {
            double dot = 0, kn = kCosEpsP;
            for (int c = hd * per; c < (hd + 1) * per; ++c) {
                const double kv = k.data()[static_cast<int64_t>(c) * n + i];
                dot += q[c] * kv;
                kn += kv * kv;
            }
            y.data()[static_cast<int64_t>(hd) * n + i] = dot / (qn * std::sqrt(kn));
        }
    }
}

void attn_cosine_bwd(const Tensor& k, const Tensor& q, int heads, const Tensor& y,
                     const Tensor& gy, Tensor& gk, Tensor& gq) {
    const int a = k.dim(0), h = k.dim(1), w = k.dim(2);
    const int per = a / heads;
    const int64_t n = static_cast<int64_t>(h) * w;
    for (int hd = 0; hd < heads; ++hd) {
        double qn = kCosEpsP;
        for (int c = hd * per; c < (hd + 1) * per; ++c) qn += q[c] * q[c];
        qn = std::sqrt(qn);
        for (int64_t i = 0; i < n; ++i) {
            const double g = gy.data()[static_cast<int64_t>(hd) * n + i];
            if (g == 0.0) continue;
            const double yi = y.data()[static_cast<int64_t>(hd) * n + i];
            double kn = kCosEpsP;
            for (int c = hd * per; c < (hd + 1) * per; ++c) {
                const double kv = k.data()[static_cast<int64_t>(c) * n + i];
                kn += kv * kv;
            }
            kn = std::sqrt(kn);
            for (int c = hd * per; c < (hd + 1) * per; ++c) {
                const double kv = k.data()[static_cast<int64_t>(c) * n + i];
                gq[c] += g * (kv / (qn * kn) - yi * q[c] / (qn * qn));
                gk.data()[static_cast<int64_t>(c) * n + i] +=
                    g * (q[c] / (qn * kn) - yi * kv / (kn * kn));
            }
        }
    }
}

}  // namespace par

// Dispatchers.
namespace kern {

#define PC_DISPATCH(call) \
    if (active_backend() == Backend::Parallel) { par::call; } else { ref::call; }

void conv2d_fwd(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad,
                Tensor& y) {
    PC_DISPATCH(conv2d_fwd(x, w, b, stride, pad, y))
}
void conv2d_bwd_input(const Tensor& gy, const Tensor& w, int stride, int pad, Tensor& gx) {
    PC_DISPATCH(conv2d_bwd_input(gy, w, stride, pad, gx))
}
void conv2d_bwd_params(const Tensor& gy, const Tensor& x, int stride, int pad, Tensor& gw,
                       Tensor& gb) {
    PC_DISPATCH(conv2d_bwd_params(gy, x, stride, pad, gw, gb))
}
void act_fwd(const Tensor& x, Activation a, Tensor& y) { PC_DISPATCH(act_fwd(x, a, y)) }
void act_bwd(const Tensor& x, const Tensor& y, const Tensor& gy, Activation a, Tensor& gx) {
    PC_DISPATCH(act_bwd(x, y, gy, a, gx))
}
void matvec_fwd(const Tensor& w, const Tensor& b, const Tensor& x, Tensor& y) {
    PC_DISPATCH(matvec_fwd(w, b, x, y))
}
void matvec_bwd(const Tensor& w, const Tensor& x, const Tensor& gy, Tensor& gw, Tensor& gb,
                Tensor& gx) {
    PC_DISPATCH(matvec_bwd(w, x, gy, gw, gb, gx))
}
void masked_mean_fwd(const Tensor& F, const Tensor& m, Tensor& t, double& mass) {
    PC_DISPATCH(masked_mean_fwd(F, m, t, mass))
}
void masked_mean_bwd(const Tensor& F, const Tensor& m, const Tensor& t, double mass,
                     const Tensor& gt, Tensor& gF, Tensor& gm) {
    PC_DISPATCH(masked_mean_bwd(F, m, t, mass, gt, gF, gm))
}
void attn_scores_fwd(const Tensor& k, const Tensor& q, int heads, Tensor& s) {
    PC_DISPATCH(attn_scores_fwd(k, q, heads, s))
}
void attn_scores_bwd(const Tensor& k, const Tensor& q, int heads, const Tensor& gs, Tensor& gk,
                     Tensor& gq) {
    PC_DISPATCH(attn_scores_bwd(k, q, heads, gs, gk, gq))
}
void gate_fwd(const Tensor& v, const Tensor& s, Tensor& y) { PC_DISPATCH(gate_fwd(v, s, y)) }
void gate_bwd(const Tensor& v, const Tensor& s, const Tensor& gy, Tensor& gv, Tensor& gs) {
    PC_DISPATCH(gate_bwd(v, s, gy, gv, gs))
}
void sse_fwd(const Tensor& a, const Tensor& b, double& out) { PC_DISPATCH(sse_fwd(a, b, out)) }
void sse_bwd(const Tensor& a, const Tensor& b, double g, double coeff, Tensor& ga, Tensor& gb) {
    PC_DISPATCH(sse_bwd(a, b, g, coeff, ga, gb))
}
void gaussian_density(const std::vector<std::array<double, 2>>& points, double sigma, int height,
                      int width, Tensor& out) {
    PC_DISPATCH(gaussian_density(points, sigma, height, width, out))
}
void center_spatial_fwd(const Tensor& x, Tensor& y) { PC_DISPATCH(center_spatial_fwd(x, y)) }
void center_spatial_bwd(const Tensor& gy, Tensor& gx) { PC_DISPATCH(center_spatial_bwd(gy, gx)) }
void sub_rowmean_fwd(const Tensor& t, const Tensor& F, Tensor& y) {
    PC_DISPATCH(sub_rowmean_fwd(t, F, y))
}
void sub_rowmean_bwd(const Tensor& gy, int64_t cells, Tensor& gt, Tensor& gF) {
    PC_DISPATCH(sub_rowmean_bwd(gy, cells, gt, gF))
}
void attn_norm_fwd(const Tensor& s, Tensor& y) { PC_DISPATCH(attn_norm_fwd(s, y)) }
void attn_norm_bwd(const Tensor& y, const Tensor& gy, Tensor& gs) {
    PC_DISPATCH(attn_norm_bwd(y, gy, gs))
}
void attn_cosine_fwd(const Tensor& k, const Tensor& q, int heads, Tensor& y) {
    PC_DISPATCH(attn_cosine_fwd(k, q, heads, y))
}
void attn_cosine_bwd(const Tensor& k, const Tensor& q, int heads, const Tensor& y,
                     const Tensor& gy, Tensor& gk, Tensor& gq) {
    PC_DISPATCH(attn_cosine_bwd(k, q, heads, y, gy, gk, gq))
}

#undef PC_DISPATCH

}  // namespace kern

}  // namespace pc
