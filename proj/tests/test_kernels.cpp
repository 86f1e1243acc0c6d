#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "promptcount/kernels.hpp"
#include "test_helpers.hpp"

#include <random>

using namespace pc;
using pctest::bit_equal;
using pctest::random_tensor;

namespace {

// Textbook convolution used as an independent oracle for the kernel pair.
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    const int cin = x.dim(0), hin = x.dim(1), win = x.dim(2);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int hout = (hin + 2 * pad - kh) / stride + 1;
    const int wout = (win + 2 * pad - kw) / stride + 1;
    Tensor y({cout, hout, wout});
    for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < hout; ++oy)
            for (int ox = 0; ox < wout; ++ox) {
                double acc = b[co];
                for (int ci = 0; ci < cin; ++ci)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = oy * stride - pad + ky;
                            const int ix = ox * stride - pad + kx;
                            if (iy < 0 || iy >= hin || ix < 0 || ix >= win) continue;
                            acc += x.at3(ci, iy, ix) * w.at4(co, ci, ky, kx);
                        }
                y.at3(co, oy, ox) = acc;
            }
    return y;
}

}  // namespace

TEST_CASE("conv2d matches the textbook oracle") {
    std::mt19937_64 rng(11);
    for (auto [stride, pad] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{1, 0}}) {
        Tensor x = random_tensor({3, 9, 7}, rng);
        Tensor w = random_tensor({4, 3, 3, 3}, rng);
        Tensor b = random_tensor({4}, rng);
        Tensor got;
        ref::conv2d_fwd(x, w, b, stride, pad, got);
        Tensor want = conv_oracle(x, w, b, stride, pad);
        REQUIRE(got.shape == want.shape);
        CHECK(pctest::max_abs_diff(got, want) < 1e-12);
    }
}

TEST_CASE("serial and OpenMP kernels agree bit for bit") {
    std::mt19937_64 rng(42);

    SUBCASE("conv2d forward/backward") {
        Tensor x = random_tensor({5, 12, 10}, rng);
        Tensor w = random_tensor({7, 5, 3, 3}, rng);
        Tensor b = random_tensor({7}, rng);
        for (int stride : {1, 2}) {
            Tensor ys, yp;
            ref::conv2d_fwd(x, w, b, stride, 1, ys);
            par::conv2d_fwd(x, w, b, stride, 1, yp);
            CHECK(bit_equal(ys, yp));

            Tensor gy = random_tensor(ys.shape, rng);
            Tensor gxs(x.shape), gxp(x.shape);
            ref::conv2d_bwd_input(gy, w, stride, 1, gxs);
            par::conv2d_bwd_input(gy, w, stride, 1, gxp);
            CHECK(bit_equal(gxs, gxp));

            Tensor gws(w.shape), gbs(b.shape), gwp(w.shape), gbp(b.shape);
            ref::conv2d_bwd_params(gy, x, stride, 1, gws, gbs);
            par::conv2d_bwd_params(gy, x, stride, 1, gwp, gbp);
            CHECK(bit_equal(gws, gwp));
            CHECK(bit_equal(gbs, gbp));
        }
    }

    SUBCASE("activations") {
        Tensor x = random_tensor({3, 8, 8}, rng, -3.0, 3.0);
        for (Activation a : {Activation::ReLU, Activation::Softplus, Activation::Sigmoid,
                             Activation::Tanh, Activation::Identity}) {
            Tensor ys, yp;
            ref::act_fwd(x, a, ys);
            par::act_fwd(x, a, yp);
            CHECK(bit_equal(ys, yp));
            Tensor gy = random_tensor(x.shape, rng);
            Tensor gxs(x.shape), gxp(x.shape);
            ref::act_bwd(x, ys, gy, a, gxs);
            par::act_bwd(x, yp, gy, a, gxp);
            CHECK(bit_equal(gxs, gxp));
        }
    }

    SUBCASE("matvec") {
        Tensor w = random_tensor({6, 9}, rng);
        Tensor b = random_tensor({6}, rng);
        Tensor x = random_tensor({9}, rng);
        Tensor ys, yp;
        ref::matvec_fwd(w, b, x, ys);
        par::matvec_fwd(w, b, x, yp);
        CHECK(bit_equal(ys, yp));
        Tensor gy = random_tensor({6}, rng);
        Tensor gws(w.shape), gbs(b.shape), gxs(x.shape);
        Tensor gwp(w.shape), gbp(b.shape), gxp(x.shape);
        ref::matvec_bwd(w, x, gy, gws, gbs, gxs);
        par::matvec_bwd(w, x, gy, gwp, gbp, gxp);
        CHECK(bit_equal(gws, gwp));
        CHECK(bit_equal(gxs, gxp));
    }

    SUBCASE("masked mean, attention scores, gate, sse, gaussian") {
        Tensor F = random_tensor({8, 6, 6}, rng);
        Tensor m = random_tensor({6, 6}, rng, 0.0, 1.0);
        Tensor ts, tp;
        double mass_s = 0, mass_p = 0;
        ref::masked_mean_fwd(F, m, ts, mass_s);
        par::masked_mean_fwd(F, m, tp, mass_p);
        CHECK(bit_equal(ts, tp));
        CHECK(mass_s == mass_p);
        Tensor gt = random_tensor({8}, rng);
        Tensor gFs(F.shape), gms(m.shape), gFp(F.shape), gmp(m.shape);
        ref::masked_mean_bwd(F, m, ts, mass_s, gt, gFs, gms);
        par::masked_mean_bwd(F, m, tp, mass_p, gt, gFp, gmp);
        CHECK(bit_equal(gFs, gFp));
        CHECK(bit_equal(gms, gmp));

        Tensor k = random_tensor({8, 6, 6}, rng);
        Tensor q = random_tensor({8}, rng);
        for (int heads : {1, 2}) {
            Tensor ss, sp;
            ref::attn_scores_fwd(k, q, heads, ss);
            par::attn_scores_fwd(k, q, heads, sp);
            CHECK(bit_equal(ss, sp));
            Tensor gs = random_tensor(ss.shape, rng);
            Tensor gks(k.shape), gqs(q.shape), gkp(k.shape), gqp(q.shape);
            ref::attn_scores_bwd(k, q, heads, gs, gks, gqs);
            par::attn_scores_bwd(k, q, heads, gs, gkp, gqp);
            CHECK(bit_equal(gks, gkp));
            CHECK(bit_equal(gqs, gqp));

            Tensor v = random_tensor({8, 6, 6}, rng);
            Tensor ys, yp;
            ref::gate_fwd(v, ss, ys);
            par::gate_fwd(v, sp, yp);
            CHECK(bit_equal(ys, yp));
            Tensor gy = random_tensor(ys.shape, rng);
            Tensor gvs(v.shape), gss(ss.shape), gvp(v.shape), gsp(ss.shape);
            ref::gate_bwd(v, ss, gy, gvs, gss);
            par::gate_bwd(v, sp, gy, gvp, gsp);
            CHECK(bit_equal(gvs, gvp));
            CHECK(bit_equal(gss, gsp));
        }

        Tensor a = random_tensor({40, 33}, rng);
        Tensor b2 = random_tensor({40, 33}, rng);
        double os = 0, op = 0;
        ref::sse_fwd(a, b2, os);
        par::sse_fwd(a, b2, op);
        CHECK(os == op);

        std::vector<std::array<double, 2>> pts = {{3.2, 4.1}, {10.0, 11.5}, {7.7, 2.2}};
        Tensor ds, dp;
        ref::gaussian_density(pts, 1.7, 16, 18, ds);
        par::gaussian_density(pts, 1.7, 16, 18, dp);
        CHECK(bit_equal(ds, dp));
    }
}

TEST_CASE("sum_pool conserves mass and resample_area averages") {
    std::mt19937_64 rng(7);
    Tensor x = random_tensor({12, 12}, rng, 0.0, 2.0);
    Tensor pooled = kernel_util::sum_pool(x, 3);
    REQUIRE(pooled.shape == std::vector<int>({4, 4}));
    CHECK(std::abs(pooled.sum() - x.sum()) < 1e-12);

    // Averaging: a constant grid stays constant at any output size.
    Tensor c({10, 10}, 3.5);
    Tensor r = kernel_util::resample_area(c, 4, 7);
    for (double v : r.v) CHECK(v == doctest::Approx(3.5).epsilon(1e-12));

    // Integer-factor resampling equals block averaging (sum_pool / area).
    Tensor avg = kernel_util::resample_area(x, 4, 4);
    for (int i = 0; i < 16; ++i) CHECK(avg.v[static_cast<size_t>(i)] ==
                                       doctest::Approx(pooled.v[static_cast<size_t>(i)] / 9.0));
}
