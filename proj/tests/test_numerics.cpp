#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rfdense/error.hpp"
#include "rfdense/numerics/graph.hpp"
#include "rfdense/numerics/random.hpp"

using namespace rfdense;
using oracle::random_tensor;

namespace {

Tensor identity_kernel(int channels) {
    Tensor k = Tensor::zeros({3, 3, channels, channels});
    for (int c = 0; c < channels; ++c) k.data[((1 * 3 + 1) * channels + c) * channels + c] = 1.0;
    return k;
}

}  // namespace

TEST_CASE("conv2d with an identity kernel copies its input") {
    Graph g;
    Var x = g.constant(Tensor({1, 1, 1}, {5.0}));
    Var y = conv2d(g, x, g.constant(identity_kernel(1)), g.constant(Tensor::zeros({1})));
    CHECK(g.value(y).data == std::vector<double>{5.0});
}

TEST_CASE("conv2d with a zero kernel yields the bias everywhere") {
    Rng rng(1);
    Graph g;
    Var x = g.constant(random_tensor({4, 5, 2}, rng));
    Var y = conv2d(g, x, g.constant(Tensor::zeros({3, 3, 2, 3})), g.constant(Tensor({3}, {0.5, -1.0, 2.0})));
    CHECK(g.shape(y) == Shape{4, 5, 3});
    for (std::size_t i = 0; i < g.value(y).size(); ++i) CHECK(g.value(y).data[i] == (std::vector<double>{0.5, -1.0, 2.0})[i % 3]);
}

TEST_CASE("conv2d rejects a channel mismatch") {
    Graph g;
    Var x = g.constant(Tensor::zeros({4, 4, 2}));
    CHECK_THROWS_AS(conv2d(g, x, g.constant(Tensor::zeros({3, 3, 3, 1})), g.constant(Tensor::zeros({1}))), ShapeError);
}

TEST_CASE("conv2d uses replication padding at the border") {
    // A kernel that only reads the top-left neighbour returns the clamped
    // corner value at (0, 0).
    Tensor k = Tensor::zeros({3, 3, 1, 1});
    k.data[0] = 1.0;
    Graph g;
    Var x = g.constant(Tensor({2, 2, 1}, {1, 2, 3, 4}));
    Var y = conv2d(g, x, g.constant(k), g.constant(Tensor::zeros({1})));
    CHECK(g.value(y).data == std::vector<double>{1, 1, 1, 1});
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(2);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Tensor> leaves{random_tensor({4, 4, 2}, rng), random_tensor({3, 3, 2, 3}, rng),
                                   random_tensor({3}, rng)};
        const Tensor w = random_tensor({4, 4, 3}, rng);
        worst = std::max(worst, oracle::max_gradient_error(leaves, [&](Graph& g, const std::vector<Var>& v) {
            return oracle::weighted_sum(g, conv2d(g, v[0], v[1], v[2]), w);
        }));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("gelu values") {
    CHECK(gelu_value(0.0) == 0.0);
    CHECK(std::abs(gelu_value(10.0) - 10.0) < 1e-6);
    const double oracle_value = 1.0 * 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
    CHECK(std::abs(gelu_value(1.0) - oracle_value) < 1e-15);
    Graph g;
    Var y = gelu(g, g.constant(Tensor({3}, {-1.0, 0.0, 1.0})));
    CHECK(g.value(y).data[1] == 0.0);
    CHECK(g.value(y).data[2] == gelu_value(1.0));
}

TEST_CASE("gelu gradients match finite differences") {
    Rng rng(3);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Tensor> leaves{random_tensor({10}, rng, -4.0, 4.0)};
        const Tensor w = random_tensor({10}, rng);
        worst = std::max(worst, oracle::max_gradient_error(leaves, [&](Graph& g, const std::vector<Var>& v) {
            return oracle::weighted_sum(g, gelu(g, v[0]), w);
        }));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("linear identity, bias broadcast and shape checks") {
    Rng rng(4);
    const Tensor x = random_tensor({3, 4}, rng);
    Tensor eye = Tensor::zeros({4, 4});
    for (int i = 0; i < 4; ++i) eye.data[i * 4 + i] = 1.0;
    Graph g;
    CHECK(g.value(linear(g, g.constant(x), g.constant(eye), g.constant(Tensor::zeros({4})))).data == x.data);
    Var b = linear(g, g.constant(Tensor::zeros({2, 4})), g.constant(random_tensor({4, 2}, rng)),
                   g.constant(Tensor({2}, {7.0, -3.0})));
    CHECK(g.value(b).data == std::vector<double>{7.0, -3.0, 7.0, -3.0});
    CHECK_THROWS_AS(linear(g, g.constant(x), g.constant(Tensor::zeros({3, 2})), g.constant(Tensor::zeros({2}))),
                    ShapeError);
}

TEST_CASE("linear gradients match finite differences") {
    Rng rng(5);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Tensor> leaves{random_tensor({3, 4}, rng), random_tensor({4, 2}, rng), random_tensor({2}, rng)};
        const Tensor w = random_tensor({3, 2}, rng);
        worst = std::max(worst, oracle::max_gradient_error(leaves, [&](Graph& g, const std::vector<Var>& v) {
            return oracle::weighted_sum(g, linear(g, v[0], v[1], v[2]), w);
        }));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("conv2d and linear are linear in their input") {
    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor x = random_tensor({4, 4, 2}, rng), y = random_tensor({4, 4, 2}, rng);
        const Tensor k = random_tensor({3, 3, 2, 2}, rng);
        const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
        Tensor mix = x;
        for (std::size_t i = 0; i < mix.size(); ++i) mix.data[i] = a * x.data[i] + b * y.data[i];
        Graph g;
        Var zero = g.constant(Tensor::zeros({2}));
        Var kv = g.constant(k);
        const auto& fm = g.value(conv2d(g, g.constant(mix), kv, zero)).data;
        const auto& fx = g.value(conv2d(g, g.constant(x), kv, zero)).data;
        const auto& fy = g.value(conv2d(g, g.constant(y), kv, zero)).data;
        for (std::size_t i = 0; i < fm.size(); ++i) CHECK(std::abs(fm[i] - (a * fx[i] + b * fy[i])) < 1e-12);

        const Tensor lx = random_tensor({3, 4}, rng), ly = random_tensor({3, 4}, rng), w = random_tensor({4, 5}, rng);
        Tensor lmix = lx;
        for (std::size_t i = 0; i < lmix.size(); ++i) lmix.data[i] = a * lx.data[i] + b * ly.data[i];
        Var wv = g.constant(w), z5 = g.constant(Tensor::zeros({5}));
        const auto& gm = g.value(linear(g, g.constant(lmix), wv, z5)).data;
        const auto& gx = g.value(linear(g, g.constant(lx), wv, z5)).data;
        const auto& gy = g.value(linear(g, g.constant(ly), wv, z5)).data;
        for (std::size_t i = 0; i < gm.size(); ++i) CHECK(std::abs(gm[i] - (a * gx[i] + b * gy[i])) < 1e-12);
    }
}

TEST_CASE("mse values and shape check") {
    Graph g;
    Var a = g.constant(Tensor({2}, {0.0, 0.0}));
    Var b = g.constant(Tensor({2}, {2.0, 0.0}));
    CHECK(g.value(mse(g, a, b)).data[0] == 2.0);
    CHECK(g.value(mse(g, a, a)).data[0] == 0.0);
    CHECK_THROWS_AS(mse(g, a, g.constant(Tensor::zeros({3}))), ShapeError);
}

TEST_CASE("mse gradient is 2(a-b)/N") {
    Rng rng(7);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Tensor> leaves{random_tensor({2, 3, 2}, rng), random_tensor({2, 3, 2}, rng)};
        worst = std::max(worst, oracle::max_gradient_error(
                                    leaves, [](Graph& g, const std::vector<Var>& v) { return mse(g, v[0], v[1]); }));
        for (std::size_t i = 0; i < leaves[0].size(); ++i) {
            const double expected = 2.0 * (leaves[0].data[i] - leaves[1].data[i]) / 12.0;
            CHECK(std::abs(leaves[0].grad[i] - expected) < 1e-15);
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("backward on a scalar parameter") {
    Tensor w({1}, {3.0}, true);
    Graph g;
    g.backward(mse(g, g.parameter(w), g.constant(Tensor::zeros({1}))));
    CHECK(w.grad == std::vector<double>{6.0});
}

TEST_CASE("backward accumulates until reset") {
    Tensor w({1}, {3.0}, true);
    for (int i = 0; i < 2; ++i) {
        Graph g;
        g.backward(mse(g, g.parameter(w), g.constant(Tensor::zeros({1}))));
    }
    CHECK(w.grad == std::vector<double>{12.0});
    w.zero_grad();
    CHECK(w.grad == std::vector<double>{0.0});
}

TEST_CASE("constants receive no gradient and non-scalar losses are rejected") {
    Tensor w({2}, {1.0, 2.0}, true);
    Graph g;
    Var c = g.constant(Tensor({2}, {5.0, 5.0}));
    Var loss = mse(g, g.parameter(w), c);
    g.backward(loss);
    CHECK(g.grad(c).empty());
    CHECK_FALSE(g.needs_grad(c));
    CHECK_THROWS_AS(g.backward(add(g, c, c)), ShapeError);
}

TEST_CASE("composite conv-gelu-mse chain matches finite differences") {
    Rng rng(8);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Tensor> leaves{random_tensor({4, 4, 2}, rng), random_tensor({3, 3, 2, 2}, rng),
                                   random_tensor({2}, rng)};
        const Tensor target = random_tensor({4, 4, 2}, rng);
        worst = std::max(worst, oracle::max_gradient_error(leaves, [&](Graph& g, const std::vector<Var>& v) {
            return mse(g, gelu(g, conv2d(g, v[0], v[1], v[2])), g.constant(target));
        }));
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("structural ops have exact gradients") {
    Rng rng(9);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Tensor> leaves{random_tensor({4, 4, 2}, rng), random_tensor({4, 4, 1}, rng)};
        const Tensor w = random_tensor({2, 2, 12}, rng);
        worst = std::max(worst, oracle::max_gradient_error(leaves, [&](Graph& g, const std::vector<Var>& v) {
            Var cat = concat_channels(g, v[0], v[1]);
            Var mixed = sub(g, scale(g, cat, 1.5), add(g, cat, cat));
            Var packed = pack(g, mixed);
            Var round_trip = pack(g, unpack(g, packed));
            Var l1 = oracle::weighted_sum(g, round_trip, w);
            Var l2 = mse(g, reshape(g, v[1], {16}), g.constant(Tensor::zeros({16})));
            const Var parts[] = {l1, l2};
            return mean_of(g, parts);
        }));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("forward and backward are bit-reproducible") {
    auto run = [] {
        Rng rng(10);
        Tensor x = random_tensor({6, 6, 3}, rng);
        Tensor k = random_tensor({3, 3, 3, 4}, rng, -0.5, 0.5);
        Tensor b = random_tensor({4}, rng);
        k.requires_grad = true;
        Graph g;
        Var y = gelu(g, conv2d(g, g.constant(x), g.parameter(k), g.constant(b)));
        Var loss = mse(g, y, g.constant(Tensor::zeros({6, 6, 4})));
        g.backward(loss);
        return std::make_pair(g.value(loss).data, k.grad);
    };
    CHECK(run() == run());
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}).validate(), ShapeError);
    Tensor t = Tensor::zeros({2, 3});
    CHECK(t.size() == 6);
    t.grad.assign(5, 0.0);
    CHECK_THROWS_AS(t.validate(), ShapeError);
    CHECK(all_finite(std::vector<double>{1.0, -2.0}));
    CHECK_FALSE(all_finite(std::vector<double>{1.0, std::nan("")}));
}

TEST_CASE("seeded generator streams") {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const double x = a.uniform();
        CHECK(x == b.uniform());
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
        differs = differs || x != c.uniform();
    }
    CHECK(differs);
    Rng n(7);
    double sum = 0.0, sq = 0.0;
    const int count = 20000;
    for (int i = 0; i < count; ++i) {
        const double v = n.normal();
        sum += v;
        sq += v * v;
    }
    CHECK(std::abs(sum / count) < 0.03);
    CHECK(std::abs(sq / count - 1.0) < 0.05);
    CHECK(mix_seed(1, 2) != mix_seed(2, 1));
}
