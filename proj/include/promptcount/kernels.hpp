#pragma once

#include "promptcount/tensor.hpp"

#include <array>

namespace pc {

// Heavy numeric kernels exist in two backends with identical semantics:
// pc::ref holds plain serial loops (the reference used by the parity tests),
// pc::par holds the OpenMP versions. Both accumulate each output element in
// the same order, so results are bit-identical and independent of the thread
// count. Light glue (reshapes, concats) lives in kernel_util and has a single
// implementation.
enum class Backend { Serial, Parallel };

Backend active_backend();
void set_backend(Backend b);

enum class Activation { Identity, ReLU, Softplus, Sigmoid, Tanh };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

double activation_apply(Activation a, double x);

#define PC_KERNEL_DECLS                                                                           \
    /* y (Cout,Ho,Wo) = conv2d(x (Cin,H,W), w (Cout,Cin,kh,kw), b (Cout)) */                      \
    void conv2d_fwd(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad,      \
                    Tensor& y);                                                                   \
    void conv2d_bwd_input(const Tensor& gy, const Tensor& w, int stride, int pad, Tensor& gx);   \
    void conv2d_bwd_params(const Tensor& gy, const Tensor& x, int stride, int pad, Tensor& gw,   \
                           Tensor& gb);                                                           \
    void act_fwd(const Tensor& x, Activation a, Tensor& y);                                       \
    void act_bwd(const Tensor& x, const Tensor& y, const Tensor& gy, Activation a, Tensor& gx);  \
    /* y (out) = W (out,in) x (in) + b */                                                         \
    void matvec_fwd(const Tensor& w, const Tensor& b, const Tensor& x, Tensor& y);               \
    void matvec_bwd(const Tensor& w, const Tensor& x, const Tensor& gy, Tensor& gw, Tensor& gb,  \
                    Tensor& gx);                                                                  \
    /* token t (C) = sum_i m_i F(:,i) / sum_i m_i over flattened cells */                         \
    void masked_mean_fwd(const Tensor& F, const Tensor& m, Tensor& t, double& mass);             \
    void masked_mean_bwd(const Tensor& F, const Tensor& m, const Tensor& t, double mass,         \
                         const Tensor& gt, Tensor& gF, Tensor& gm);                               \
    /* s (H,h,w): per-head scaled dot products between q (A) and k (A,h,w) */                     \
    void attn_scores_fwd(const Tensor& k, const Tensor& q, int heads, Tensor& s);                \
    void attn_scores_bwd(const Tensor& k, const Tensor& q, int heads, const Tensor& gs,          \
                         Tensor& gk, Tensor& gq);                                                 \
    /* y (A,h,w) = v (A,h,w) gated per channel by its head's score map s (H,h,w) */               \
    void gate_fwd(const Tensor& v, const Tensor& s, Tensor& y);                                   \
    void gate_bwd(const Tensor& v, const Tensor& s, const Tensor& gy, Tensor& gv, Tensor& gs);   \
    /* sum (a-b)^2, optionally scaled; backward adds into ga/gb */                                \
    void sse_fwd(const Tensor& a, const Tensor& b, double& out);                                  \
    void sse_bwd(const Tensor& a, const Tensor& b, double g, double coeff, Tensor& ga,           \
                 Tensor& gb);                                                                     \
    /* density (H,W): sum of normalized Gaussians at the given points */                          \
    void gaussian_density(const std::vector<std::array<double, 2>>& points, double sigma,        \
                          int height, int width, Tensor& out);                                    \
    /* y = x - spatial mean per channel; x is (C,h,w) */                                          \
    void center_spatial_fwd(const Tensor& x, Tensor& y);                                          \
    void center_spatial_bwd(const Tensor& gy, Tensor& gx);                                        \
    /* y_c = t_c - mean_i F(c,i) */                                                               \
    void sub_rowmean_fwd(const Tensor& t, const Tensor& F, Tensor& y);                            \
    void sub_rowmean_bwd(const Tensor& gy, int64_t cells, Tensor& gt, Tensor& gF);                \
    /* per-head softmax over cells, scaled by the cell count (mean weight 1) */                   \
    void attn_norm_fwd(const Tensor& s, Tensor& y);                                               \
    void attn_norm_bwd(const Tensor& y, const Tensor& gy, Tensor& gs);                            \
    /* per-head cosine between q and each cell of k */                                            \
    void attn_cosine_fwd(const Tensor& k, const Tensor& q, int heads, Tensor& y);                 \
    void attn_cosine_bwd(const Tensor& k, const Tensor& q, int heads, const Tensor& y,            \
                         const Tensor& gy, Tensor& gk, Tensor& gq);

namespace ref {
PC_KERNEL_DECLS
}
namespace par {
PC_KERNEL_DECLS
}
// Dispatch on the active backend.
namespace kern {
PC_KERNEL_DECLS
}

#undef PC_KERNEL_DECLS

// Single-implementation glue (cheap, not worth a backend split).
namespace kernel_util {

// Sum-pool an (H,W) grid into (H/f, W/f); preserves total mass.
Tensor sum_pool(const Tensor& x, int factor);

// Area-weighted average resampling of an (h1,w1) grid to (h2,w2).
Tensor resample_area(const Tensor& x, int h2, int w2);

}  // namespace kernel_util

}  // namespace pc
