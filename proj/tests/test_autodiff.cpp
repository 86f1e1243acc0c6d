#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "promptcount/autodiff.hpp"
#include "test_helpers.hpp"

#include <functional>
#include <random>

using namespace pc;
using pctest::random_tensor;

namespace {

// Central-difference check of d(loss)/d(leaf) for a scalar-valued graph.
void check_gradient(Tensor leaf_value, const std::function<Var(Tape&, Var)>& graph,
                    double tol = 1e-6) {
    Tape tape(true);
    Var leaf = tape.leaf(leaf_value, true);
    Var loss = graph(tape, leaf);
    REQUIRE(tape.val(loss).numel() == 1);
    tape.backward(loss);
    const Tensor analytic = tape.grad(leaf);

    const double h = 1e-6;
    for (int64_t i = 0; i < leaf_value.numel(); ++i) {
        auto eval = [&](double delta) {
            Tensor perturbed = leaf_value;
            perturbed[i] += delta;
            Tape t2(false);
            Var l2 = t2.leaf(perturbed);
            return t2.val(graph(t2, l2)).v[0];
        };
        const double fd = (eval(h) - eval(-h)) / (2 * h);
        CHECK(analytic[i] == doctest::Approx(fd).epsilon(tol).scale(1.0));
    }
}

}  // namespace

TEST_CASE("activation and conv gradients match finite differences") {
    std::mt19937_64 rng(3);
    Tensor x = random_tensor({2, 5, 5}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    Tensor target = random_tensor({3, 3, 3}, rng);

    SUBCASE("w.r.t. input") {
        check_gradient(x, [&](Tape& t, Var leaf) {
            Var y = t.activation(t.conv2d(leaf, t.leaf(w), t.leaf(b), 1, 0), Activation::Softplus);
            return t.sse(y, t.leaf(target), Reduction::Sum);
        });
    }
    SUBCASE("w.r.t. weights") {
        check_gradient(w, [&](Tape& t, Var leaf) {
            Var y = t.activation(t.conv2d(t.leaf(x), leaf, t.leaf(b), 1, 0), Activation::Tanh);
            return t.sse(y, t.leaf(target), Reduction::Mean);
        });
    }
}

TEST_CASE("masked mean, attention, gate, concat gradients match finite differences") {
    std::mt19937_64 rng(5);
    Tensor F = random_tensor({4, 3, 3}, rng);
    Tensor m = random_tensor({3, 3}, rng, 0.1, 1.0);
    Tensor q_w = random_tensor({4, 4}, rng);
    Tensor q_b = random_tensor({4}, rng);
    Tensor target = random_tensor({6, 3, 3}, rng);

    auto graph = [&](Tape& t, Var fvar, Var mvar) {
        Var token = t.masked_mean(fvar, mvar);
        Var q = t.matvec(t.leaf(q_w), t.leaf(q_b), token);
        Var s = t.attn_scores(fvar, q, 2);
        Var g = t.gate(fvar, s);
        Var cat = t.concat_channels({g, s});
        return t.sse(cat, t.leaf(target), Reduction::Sum);
    };

    SUBCASE("w.r.t. features") {
        check_gradient(F, [&](Tape& t, Var leaf) { return graph(t, leaf, t.leaf(m)); }, 1e-5);
    }
    SUBCASE("w.r.t. mask") {
        check_gradient(m, [&](Tape& t, Var leaf) { return graph(t, t.leaf(F), leaf); }, 1e-5);
    }
}

TEST_CASE("concat_width splits gradients by half") {
    std::mt19937_64 rng(9);
    Tensor a = random_tensor({2, 3, 4}, rng);
    Tensor b = random_tensor({2, 3, 5}, rng);
    Tensor target({2, 3, 9}, 0.0);
    check_gradient(a, [&](Tape& t, Var leaf) {
        return t.sse(t.concat_width(leaf, t.leaf(b)), t.leaf(target), Reduction::Sum);
    });
    check_gradient(b, [&](Tape& t, Var leaf) {
        return t.sse(t.concat_width(t.leaf(a), leaf), t.leaf(target), Reduction::Sum);
    });
}

TEST_CASE("fan-out accumulates gradients") {
    // loss = sse(x, c1) + sse(x, c2): grad = 2(x-c1) + 2(x-c2).
    std::mt19937_64 rng(13);
    Tensor x = random_tensor({4}, rng);
    Tensor c1 = random_tensor({4}, rng);
    Tensor c2 = random_tensor({4}, rng);
    Tape t(true);
    Var leaf = t.leaf(x, true);
    Var loss = t.add(t.sse(leaf, t.leaf(c1), Reduction::Sum),
                     t.sse(leaf, t.leaf(c2), Reduction::Sum));
    t.backward(loss);
    const Tensor& g = t.grad(leaf);
    for (int i = 0; i < 4; ++i)
        CHECK(g[i] == doctest::Approx(2 * (x[i] - c1[i]) + 2 * (x[i] - c2[i])));
}

TEST_CASE("untracked tape computes values only") {
    Tape t(false);
    Var leaf = t.leaf(Tensor({2}, 1.0), true);  // requires_grad ignored when not tracking
    Var loss = t.sse(leaf, t.leaf(Tensor({2}, 0.0)), Reduction::Sum);
    CHECK(t.val(loss).v[0] == doctest::Approx(2.0));
    CHECK_THROWS_AS(t.backward(loss), Error);
}

TEST_CASE("backward_with seeds an arbitrary cotangent") {
    // y = conv1x1(x); <u, y> gradient w.r.t. x is W^T u.
    Tensor x({2, 2, 2}, 0.0);
    x.v = {1, 2, 3, 4, 5, 6, 7, 8};
    Tensor w({3, 2, 1, 1}, 0.0);
    w.v = {1, 0.5, -1, 2, 0.25, -0.5};
    Tensor b({3}, 0.0);
    Tape t(true);
    Var leaf = t.leaf(x, true);
    Var y = t.conv2d(leaf, t.leaf(w), t.leaf(b), 1, 0);
    Tensor u(t.val(y).shape, 1.0);
    t.backward_with(y, u);
    const Tensor& g = t.grad(leaf);
    // Each input channel receives sum_o w[o][ci].
    const double want0 = 1.0 + (-1.0) + 0.25;
    const double want1 = 0.5 + 2.0 + (-0.5);
    for (int i = 0; i < 4; ++i) {
        CHECK(g.v[static_cast<size_t>(i)] == doctest::Approx(want0));
        CHECK(g.v[static_cast<size_t>(i) + 4] == doctest::Approx(want1));
    }
}
