#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "promptcount/gradcheck.hpp"
#include "promptcount/model.hpp"
#include "promptcount/scene.hpp"
#include "test_helpers.hpp"

#include <cmath>
#include <cstdio>
#include <random>

using namespace pc;
using pctest::bit_equal;
using pctest::random_tensor;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.image_size = 24;
    cfg.channels = 8;
    cfg.encoder_widths = {4, 6};
    cfg.decoder_widths = {8, 4};
    return cfg;
}

}  // namespace

TEST_CASE("encode_image: shape, determinism, sensitivity") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::initialized(cfg, 5);

    Tensor zero({3, 24, 24}, 0.0);
    Tensor f = encode_image(zero, p, cfg);
    REQUIRE(f.shape == std::vector<int>({8, 3, 3}));
    CHECK(f.all_finite());

    Tensor f2 = encode_image(zero, p, cfg);
    CHECK(bit_equal(f, f2));

    Tensor perturbed = zero;
    perturbed.at3(1, 12, 12) = 1.0;
    Tensor f3 = encode_image(perturbed, p, cfg);
    CHECK(pctest::max_abs_diff(f, f3) > 0.0);

    Tensor wrong({3, 16, 16}, 0.0);
    CHECK_THROWS_AS(encode_image(wrong, p, cfg), Error);
}

TEST_CASE("aggregate_token equals the direct weighted mean") {
    // F rows [[1,2],[3,4]] over a 1x2 grid, stored channel-first.
    Tensor F({2, 1, 2});
    F.at3(0, 0, 0) = 1.0;
    F.at3(1, 0, 0) = 2.0;
    F.at3(0, 0, 1) = 3.0;
    F.at3(1, 0, 1) = 4.0;

    Tensor one_hot({1, 2});
    one_hot.at2(0, 0) = 1.0;
    Tensor t = aggregate_token(F, one_hot);
    CHECK(t[0] == doctest::Approx(1.0));
    CHECK(t[1] == doctest::Approx(2.0));

    Tensor uniform({1, 2}, 1.0);
    t = aggregate_token(F, uniform);
    CHECK(t[0] == doctest::Approx(2.0));
    CHECK(t[1] == doctest::Approx(3.0));

    Tensor weighted({1, 2});
    weighted.at2(0, 0) = 2.0;
    weighted.at2(0, 1) = 1.0;
    t = aggregate_token(F, weighted);
    CHECK(t[0] == doctest::Approx(5.0 / 3.0));
    CHECK(t[1] == doctest::Approx(8.0 / 3.0));

    // Oracle property on random inputs.
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 25; ++trial) {
        Tensor rf = random_tensor({6, 4, 5}, rng);
        Tensor rm = random_tensor({4, 5}, rng, 0.0, 1.0);
        Tensor got = aggregate_token(rf, rm);
        const double mass = rm.sum();
        for (int c = 0; c < 6; ++c) {
            double acc = 0;
            for (int i = 0; i < 20; ++i) acc += rf.v[static_cast<size_t>(c) * 20 + static_cast<size_t>(i)] * rm.v[static_cast<size_t>(i)];
            CHECK(got[c] == doctest::Approx(acc / mass).epsilon(1e-12));
        }
    }

    Tensor empty({4, 5}, 0.0);
    CHECK_THROWS_WITH_AS(aggregate_token(random_tensor({6, 4, 5}, rng), empty), "empty mask",
                         Error);
}

TEST_CASE("predict_density: non-negative, deterministic") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::initialized(cfg, 17);
    std::mt19937_64 rng(3);
    Tensor F = random_tensor({8, 3, 3}, rng);
    Tensor token = random_tensor({8}, rng);
    Tensor d = predict_density(F, token, p, cfg);
    REQUIRE(d.shape == std::vector<int>({3, 3}));
    for (double x : d.v) CHECK(x >= 0.0);
    Tensor d2 = predict_density(F, token, p, cfg);
    CHECK(bit_equal(d, d2));
}

TEST_CASE("fixed_point_step composes aggregate and predict exactly") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::initialized(cfg, 23);
    std::mt19937_64 rng(5);
    Tensor F = random_tensor({8, 3, 3}, rng);
    Tensor d = random_tensor({3, 3}, rng, 0.1, 1.0);

    Tensor via_step = fixed_point_step(d, F, p, cfg);
    Tensor via_compose = predict_density(F, aggregate_token(F, d), p, cfg);
    CHECK(bit_equal(via_step, via_compose));

    Tensor dead({3, 3}, 0.0);
    CHECK_THROWS_WITH_AS(fixed_point_step(dead, F, p, cfg), "vanished density", Error);
}

TEST_CASE("fixed_point_step is scale invariant in the density") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::initialized(cfg, 29);
    std::mt19937_64 rng(7);
    Tensor F = random_tensor({8, 3, 3}, rng);
    Tensor d = random_tensor({3, 3}, rng, 0.05, 1.0);
    Tensor base = fixed_point_step(d, F, p, cfg);
    for (double c : {0.01, 0.5, 3.0, 1234.5}) {
        Tensor scaled = d;
        for (auto& x : scaled.v) x *= c;
        Tensor out = fixed_point_step(scaled, F, p, cfg);
        CHECK(pctest::max_abs_diff(out, base) < 1e-6);
    }
}

TEST_CASE("linear contraction stub: fixed point and geometric refinement") {
    // d -> 0.5 d + c converges to 2c; contraction ratio 0.5 per step.
    LinearContractionOp op(0.5, 0.7, {3, 3});
    Tensor target = op.fixed_point();
    for (double x : target.v) CHECK(x == doctest::Approx(1.4));

    Tensor d({3, 3}, 0.1);
    double prev_err = -1;
    for (int t = 0; t < 40; ++t) {
        d = op.apply(d);
        double err = 0;
        for (int64_t i = 0; i < d.numel(); ++i) err = std::max(err, std::abs(d[i] - 1.4));
        if (prev_err > 0 && err > 1e-14) CHECK(err == doctest::Approx(prev_err * 0.5).epsilon(1e-9));
        prev_err = err;
    }
    double final_err = 0;
    for (int64_t i = 0; i < d.numel(); ++i) final_err = std::max(final_err, std::abs(d[i] - 1.4));
    CHECK(final_err < 1e-6);
}

TEST_CASE("refine returns all iterates; base case T=1; empty mask throws") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::initialized(cfg, 31);
    std::mt19937_64 rng(11);
    Tensor F = random_tensor({8, 3, 3}, rng);
    Tensor mask({3, 3});
    mask.at2(1, 1) = 1.0;

    RefineResult one = refine(mask, F, p, cfg, 1);
    REQUIRE(one.iterates.size() == 1);
    CHECK(bit_equal(one.iterates[0], fixed_point_step(mask, F, p, cfg)));
    CHECK_FALSE(one.truncated);

    RefineResult three = refine(mask, F, p, cfg, 3);
    REQUIRE(three.iterates.size() == 3);
    CHECK(bit_equal(three.iterates[0], one.iterates[0]));

    Tensor zero_mask({3, 3}, 0.0);
    CHECK_THROWS_WITH_AS(refine(zero_mask, F, p, cfg, 2), "empty mask", Error);
}

TEST_CASE("count: zeros, single cell, rendered points") {
    Tensor z({4, 4}, 0.0);
    CHECK(count(z) == 0.0);
    z.at2(1, 2) = 3.5;
    CHECK(count(z) == doctest::Approx(3.5));

    std::vector<std::array<double, 2>> pts;
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(20.0, 108.0);
    for (int i = 0; i < 7; ++i) pts.push_back({u(rng), u(rng)});
    Tensor d = render_gt_density(pts, 2.0, 128, 128);
    CHECK(count(d) > 6.93);
    CHECK(count(d) <= 7.0 + 1e-9);
}

TEST_CASE("checkpoint round trip preserves params and config") {
    ModelConfig cfg = tiny_config();
    cfg.iterations = 3;
    cfg.output_activation = Activation::Softplus;
    ModelParams p = ModelParams::initialized(cfg, 41);
    const std::string path = "ckpt_roundtrip.tmp";
    save_checkpoint(path, p, cfg);
    auto [p2, cfg2] = load_checkpoint(path);
    CHECK(cfg2 == cfg);
    CHECK(same_values(p, p2));
    std::remove(path.c_str());

    CHECK_THROWS_AS(load_checkpoint("does_not_exist.ckpt"), Error);
}
