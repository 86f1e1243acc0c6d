// Serial reference kernels. Straight loops, no tricks; the OpenMP versions in
// kernels_par.cpp must match these bit for bit (same per-output accumulation
// order), which the kernel parity tests assert.

#include "promptcount/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace pc {

namespace {
std::atomic<Backend> g_backend{Backend::Parallel};
}

Backend active_backend() { return g_backend.load(); }
void set_backend(Backend b) { g_backend.store(b); }

Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "relu") return Activation::ReLU;
    if (s == "softplus") return Activation::Softplus;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "tanh") return Activation::Tanh;
    throw Error("unknown activation: " + s);
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::ReLU: return "relu";
        case Activation::Softplus: return "softplus";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Tanh: return "tanh";
    }
    return "?";
}

double activation_apply(Activation a, double x) {
    switch (a) {
        case Activation::Identity: return x;
        case Activation::ReLU: return x > 0.0 ? x : 0.0;
        case Activation::Softplus: return x > 30.0 ? x : std::log1p(std::exp(x));
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::Tanh: return std::tanh(x);
    }
    return x;
}

namespace ref {

void conv2d_fwd(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad,
                Tensor& y) {
    const int cin = x.dim(0), hin = x.dim(1), win = x.dim(2);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int hout = (hin + 2 * pad - kh) / stride + 1;
    const int wout = (win + 2 * pad - kw) / stride + 1;
    y = Tensor({cout, hout, wout});
    for (int co = 0; co < cout; ++co) {
        for (int oy = 0; oy < hout; ++oy) {
            for (int ox = 0; ox < wout; ++ox) {
                double acc = b.v.empty() ? 0.0 : b[co];
                for (int ci = 0; ci < cin; ++ci) {
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= hin) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= win) continue;
                            acc += x.at3(ci, iy, ix) * w.at4(co, ci, ky, kx);
                        }
                    }
                }
                y.at3(co, oy, ox) = acc;
            }
        }
    }
}

void conv2d_bwd_input(const Tensor& gy, const Tensor& w, int stride, int pad, Tensor& gx) {
    const int cout = gy.dim(0), hout = gy.dim(1), wout = gy.dim(2);
    const int cin = gx.dim(0), hin = gx.dim(1), win = gx.dim(2);
    const int kh = w.dim(2), kw = w.dim(3);
    // Gather form: each input pixel sums the output gradients it contributed to.
    for (int ci = 0; ci < cin; ++ci) {
        for (int iy = 0; iy < hin; ++iy) {
            for (int ix = 0; ix < win; ++ix) {
                double acc = 0.0;
                for (int co = 0; co < cout; ++co) {
                    for (int ky = 0; ky < kh; ++ky) {
                        const int num_y = iy + pad - ky;
                        if (num_y < 0 || num_y % stride != 0) continue;
                        const int oy = num_y / stride;
                        if (oy >= hout) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int num_x = ix + pad - kx;
                            if (num_x < 0 || num_x % stride != 0) continue;
                            const int ox = num_x / stride;
                            if (ox >= wout) continue;
                            acc += gy.at3(co, oy, ox) * w.at4(co, ci, ky, kx);
                        }
                    }
                }
                gx.at3(ci, iy, ix) += acc;
            }
        }
    }
}

void conv2d_bwd_params(const Tensor& gy, const Tensor& x, int stride, int pad, Tensor& gw,
                       Tensor& gb) {
    const int cout = gy.dim(0), hout = gy.dim(1), wout = gy.dim(2);
    const int cin = x.dim(0), hin = x.dim(1), win = x.dim(2);
    const int kh = gw.dim(2), kw = gw.dim(3);
    for (int co = 0; co < cout; ++co) {
        for (int ci = 0; ci < cin; ++ci) {
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    double acc = 0.0;
                    for (int oy = 0; oy < hout; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= hin) continue;
                        for (int ox = 0; ox < wout; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= win) continue;
                            acc += gy.at3(co, oy, ox) * x.at3(ci, iy, ix);
                        }
                    }
                    gw.at4(co, ci, ky, kx) += acc;
                }
            }
        }
    }
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
    for (int64_t i = 0; i < n; ++i) y[i] = activation_apply(a, x[i]);
}

void act_bwd(const Tensor& x, const Tensor& y, const Tensor& gy, Activation a, Tensor& gx) {
    const int64_t n = x.numel();
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
    for (int o = 0; o < out; ++o) {
        double acc = b.v.empty() ? 0.0 : b[o];
        for (int i = 0; i < in; ++i) acc += w.at2(o, i) * x[i];
        y[o] = acc;
    }
}

void matvec_bwd(const Tensor& w, const Tensor& x, const Tensor& gy, Tensor& gw, Tensor& gb,
                Tensor& gx) {
    const int out = w.dim(0), in = w.dim(1);
    for (int o = 0; o < out; ++o) {
        for (int i = 0; i < in; ++i) gw.at2(o, i) += gy[o] * x[i];
        gb[o] += gy[o];
    }
    for (int i = 0; i < in; ++i) {
        double acc = 0.0;
        for (int o = 0; o < out; ++o) acc += gy[o] * w.at2(o, i);
        gx[i] += acc;
    }
}

void masked_mean_fwd(const Tensor& F, const Tensor& m, Tensor& t, double& mass) {
    const int c = F.dim(0);
    const int64_t n = m.numel();
    mass = 0.0;
    for (int64_t i = 0; i < n; ++i) mass += m[i];
    t = Tensor({c});
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        const double* row = F.data() + static_cast<int64_t>(ch) * n;
        for (int64_t i = 0; i < n; ++i) acc += row[i] * m[i];
        t[ch] = acc / mass;
    }
}

void masked_mean_bwd(const Tensor& F, const Tensor& m, const Tensor& t, double mass,
                     const Tensor& gt, Tensor& gF, Tensor& gm) {
    const int c = F.dim(0);
    const int64_t n = m.numel();
    for (int ch = 0; ch < c; ++ch) {
        const double g = gt[ch] / mass;
        double* grow = gF.data() + static_cast<int64_t>(ch) * n;
        for (int64_t i = 0; i < n; ++i) grow[i] += g * m[i];
    }
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
    for (int c = 0; c < a; ++c) {
        const double* srow = s.data() + static_cast<int64_t>(c / per) * n;
        const double* grow = gy.data() + static_cast<int64_t>(c) * n;
        double* gvrow = gv.data() + static_cast<int64_t>(c) * n;
        for (int64_t i = 0; i < n; ++i) gvrow[i] += grow[i] * srow[i];
    }
    for (int hd = 0; hd < heads; ++hd) {
        double* gsrow = gs.data() + static_cast<int64_t>(hd) * n;
        for (int64_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int c = hd * per; c < (hd + 1) * per; ++c)
                acc += gy.data()[static_cast<int64_t>(c) * n + i] *
                       v.data()[static_cast<int64_t>(c) * n + i];
            gsrow[i] += acc;
        }
    }
}

void sse_fwd(const Tensor& a, const Tensor& b, double& out) {
    // Chunked accumulation; the parallel backend sums the same chunks.
    const int64_t n = a.numel();
    const int64_t chunk = 4096;
    double acc = 0.0;
    for (int64_t c = 0; c * chunk < n; ++c) {
        double part = 0.0;
        const int64_t hi = std::min(n, (c + 1) * chunk);
        for (int64_t i = c * chunk; i < hi; ++i) {
            const double d = a[i] - b[i];
            part += d * d;
        }
        acc += part;
    }
    out = acc;
}

void sse_bwd(const Tensor& a, const Tensor& b, double g, double coeff, Tensor& ga, Tensor& gb) {
    const int64_t n = a.numel();
    const double k = 2.0 * g * coeff;
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
    for (int ch = 0; ch < c; ++ch) {
        const double* row = F.data() + static_cast<int64_t>(ch) * n;
        double mean = 0;
        for (int64_t i = 0; i < n; ++i) mean += row[i];
        y[ch] = t[ch] - mean / static_cast<double>(n);
    }
}

void sub_rowmean_bwd(const Tensor& gy, int64_t cells, Tensor& gt, Tensor& gF) {
    const int c = gy.dim(0);
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
constexpr double kCosEps = 1e-12;
}

void attn_cosine_fwd(const Tensor& k, const Tensor& q, int heads, Tensor& y) {
    const int a = k.dim(0), h = k.dim(1), w = k.dim(2);
    const int per = a / heads;
    const int64_t n = static_cast<int64_t>(h) * w;
    y = Tensor({heads, h, w});
    for (int hd = 0; hd < heads; ++hd) {
        double qn = kCosEps;
        for (int c = hd * per; c < (hd + 1) * per; ++c) qn += q[c] * q[c];
        qn = std::sqrt(qn);
        for (int64_t i = 0; i < n; ++i) {
            double dot = 0, kn = kCosEps;
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
        double qn = kCosEps;
        for (int c = hd * per; c < (hd + 1) * per; ++c) qn += q[c] * q[c];
        qn = std::sqrt(qn);
        for (int64_t i = 0; i < n; ++i) {
            const double g = gy.data()[static_cast<int64_t>(hd) * n + i];
            if (g == 0.0) continue;
            const double yi = y.data()[static_cast<int64_t>(hd) * n + i];
            double kn = kCosEps;
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

}  // namespace ref

namespace kernel_util {

Tensor sum_pool(const Tensor& x, int factor) {
    const int h = x.dim(0), w = x.dim(1);
    if (h % factor != 0 || w % factor != 0) throw Error("sum_pool: size not divisible by factor");
    Tensor y({h / factor, w / factor});
    for (int oy = 0; oy < y.dim(0); ++oy)
        for (int ox = 0; ox < y.dim(1); ++ox) {
            double acc = 0.0;
            for (int dy = 0; dy < factor; ++dy)
                for (int dx = 0; dx < factor; ++dx)
                    acc += x.at2(oy * factor + dy, ox * factor + dx);
            y.at2(oy, ox) = acc;
        }
    return y;
}

Tensor resample_area(const Tensor& x, int h2, int w2) {
    const int h1 = x.dim(0), w1 = x.dim(1);
    Tensor y({h2, w2});
    const double sy = static_cast<double>(h1) / h2;
    const double sx = static_cast<double>(w1) / w2;
    for (int oy = 0; oy < h2; ++oy) {
        const double y0 = oy * sy, y1 = (oy + 1) * sy;
        for (int ox = 0; ox < w2; ++ox) {
            const double x0 = ox * sx, x1 = (ox + 1) * sx;
            double acc = 0.0;
            for (int iy = static_cast<int>(y0); iy < h1 && iy < y1; ++iy) {
                const double oy0 = std::max(y0, static_cast<double>(iy));
                const double oy1 = std::min(y1, static_cast<double>(iy + 1));
                if (oy1 <= oy0) continue;
                for (int ix = static_cast<int>(x0); ix < w1 && ix < x1; ++ix) {
                    const double ox0 = std::max(x0, static_cast<double>(ix));
                    const double ox1 = std::min(x1, static_cast<double>(ix + 1));
                    if (ox1 <= ox0) continue;
                    acc += x.at2(iy, ix) * (oy1 - oy0) * (ox1 - ox0);
                }
            }
            y.at2(oy, ox) = acc / (sy * sx);
        }
    }
    return y;
}

}  // namespace kernel_util

}  // namespace pc
