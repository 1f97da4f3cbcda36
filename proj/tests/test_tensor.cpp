#include <doctest.h>

#include <cmath>

#include "vsd/gradcheck.h"
#include "vsd/ops.h"
#include "vsd/rng.h"
#include "vsd/tensor.h"

using namespace vsd;
using tensor::Graph;
using tensor::Tensor;
using namespace vsd::ops;

namespace {

Tensor random_tensor(tensor::Shape shape, uint64_t seed, double scale = 1.0) {
    rng::Prng prng(seed);
    std::vector<double> data(static_cast<size_t>(tensor::shape_numel(shape)));
    for (auto& v : data) v = prng.normal() * scale;
    return Tensor::from_data(std::move(shape), std::move(data));
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("shapes and invariants") {
    Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t.at({1, 2}) == 6.0);
    CHECK_THROWS_AS(Tensor::from_data({2, 3}, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS((void)t.at({2, 0}), std::out_of_range);
    CHECK_THROWS_AS((void)Tensor::zeros({0, 3}), std::invalid_argument);
}

TEST_CASE("attention direct-formula oracle, L=2 d=1") {
    // softmax([10,-10]) evaluated by hand: p = 1/(1+exp(-20))
    const double p = 1.0 / (1.0 + std::exp(-20.0));
    const double expected = p * 2.0 + (1.0 - p) * 4.0;

    Tensor q = Tensor::from_data({2, 1}, {1.0, 1.0});
    Tensor k = Tensor::from_data({2, 1}, {10.0, -10.0});
    Tensor v = Tensor::from_data({2, 1}, {2.0, 4.0});
    Tensor out = attention(q, k, v);
    CHECK(out.dim(0) == 2);
    CHECK(out.at({0, 0}) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(out.at({1, 0}) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("attention with identical keys averages the values") {
    Tensor q = random_tensor({3, 4}, 11);
    Tensor k = Tensor::from_data({2, 4}, {1, 2, 3, 4, 1, 2, 3, 4});
    Tensor v = Tensor::from_data({2, 3}, {0, 2, 4, 6, 8, 10});
    Tensor out = attention(q, k, v);
    for (int64_t r = 0; r < 3; ++r) {
        CHECK(out.at({r, 0}) == doctest::Approx(3.0));
        CHECK(out.at({r, 1}) == doctest::Approx(5.0));
        CHECK(out.at({r, 2}) == doctest::Approx(7.0));
    }
}

TEST_CASE("attention with a single token returns V exactly") {
    Tensor q = random_tensor({1, 5}, 3);
    Tensor k = random_tensor({1, 5}, 4);
    Tensor v = random_tensor({1, 5}, 5);
    Tensor out = attention(q, k, v);
    for (int64_t c = 0; c < 5; ++c) CHECK(out.at({0, c}) == v.at({0, c}));
}

TEST_CASE("attention rows sum to one and are permutation-equivariant") {
    Tensor q = random_tensor({6, 4}, 21);
    Tensor k = random_tensor({6, 4}, 22);
    Tensor v = random_tensor({6, 4}, 23);

    Tensor weights = softmax_rows(scale(matmul(q, transpose(k)), 0.5));
    for (int64_t r = 0; r < weights.dim(0); ++r) {
        double row = 0.0;
        for (int64_t c = 0; c < weights.dim(1); ++c) row += weights.at({r, c});
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }

    // permuting query rows permutes output rows identically
    Tensor out = attention(q, k, v);
    std::vector<int64_t> perm{3, 0, 5, 1, 4, 2};
    Tensor q_perm = take_rows(q, perm);
    Tensor out_perm = attention(q_perm, k, v);
    for (size_t i = 0; i < perm.size(); ++i)
        for (int64_t c = 0; c < 4; ++c)
            CHECK(out_perm.at({static_cast<int64_t>(i), c}) == out.at({perm[i], c}));
}

TEST_CASE("attention shape errors") {
    CHECK_THROWS_AS((void)attention(random_tensor({2, 3}, 1), random_tensor({2, 4}, 2),
                                    random_tensor({2, 4}, 3)),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)attention(random_tensor({2, 3}, 1), random_tensor({4, 3}, 2),
                                    random_tensor({2, 3}, 3)),
                    std::invalid_argument);
}

TEST_CASE("temporal conv identity kernel") {
    Tensor h = random_tensor({4, 3, 3, 2}, 31);
    Tensor kernel = Tensor::from_data({3}, {0.0, 1.0, 0.0});
    Tensor out = temporal_conv(h, kernel);
    for (size_t i = 0; i < h.data().size(); ++i) CHECK(out.data()[i] == h.data()[i]);
}

TEST_CASE("temporal conv averaging kernel keeps constants") {
    Tensor h = Tensor::full({5, 2, 2, 3}, 0.7);
    Tensor kernel = Tensor::from_data({3}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    Tensor out = temporal_conv(h, kernel);
    for (double v : out.data()) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("temporal conv edge replication") {
    // kernel [1,0,0] reads the previous frame; frame 0 reads itself
    Tensor h = random_tensor({2, 2, 2, 1}, 32);
    Tensor kernel = Tensor::from_data({3}, {1.0, 0.0, 0.0});
    Tensor out = temporal_conv(h, kernel);
    for (int64_t y = 0; y < 2; ++y)
        for (int64_t x = 0; x < 2; ++x) {
            CHECK(out.at({0, y, x, 0}) == h.at({0, y, x, 0}));
            CHECK(out.at({1, y, x, 0}) == h.at({0, y, x, 0}));
        }
}

TEST_CASE("temporal conv rejects even kernels") {
    Tensor h = random_tensor({3, 2, 2, 1}, 33);
    CHECK_THROWS_AS((void)temporal_conv(h, Tensor::from_data({2}, {0.5, 0.5})),
                    std::invalid_argument);
}

TEST_CASE("backward: sum gives all-ones") {
    Graph g;
    Tensor x = g.variable({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor loss = sum(x);
    auto grads = g.backward(loss);
    Tensor gx = grads.grad_of(x);
    for (double v : gx.data()) CHECK(v == 1.0);
}

TEST_CASE("backward: matmul matches the analytic form") {
    // loss = sum(A B): dA = 1 B^T, dB = A^T 1
    Tensor a0 = random_tensor({2, 3}, 41);
    Tensor b0 = random_tensor({3, 2}, 42);
    Graph g;
    Tensor a = g.variable(a0.shape(), a0.data_copy());
    Tensor b = g.variable(b0.shape(), b0.data_copy());
    auto grads = g.backward(sum(matmul(a, b)));
    Tensor ga = grads.grad_of(a);
    Tensor gb = grads.grad_of(b);
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t j = 0; j < 3; ++j) {
            double expect = 0.0;
            for (int64_t c = 0; c < 2; ++c) expect += b0.at({j, c});
            CHECK(ga.at({i, j}) == doctest::Approx(expect).epsilon(1e-12));
        }
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 2; ++j) {
            double expect = 0.0;
            for (int64_t r = 0; r < 2; ++r) expect += a0.at({r, i});
            CHECK(gb.at({i, j}) == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("backward through softmax matches finite differences") {
    const Tensor w = random_tensor({4, 5}, 51);
    auto f = [&](const Tensor& x) { return sum(mul(softmax_rows(x), w)); };
    const auto result = gradcheck::grad_check(f, random_tensor({4, 5}, 52), 1e-5);
    CHECK(result.max_rel_error < 1e-6);
}

TEST_CASE("backward runs once per graph") {
    Graph g;
    Tensor x = g.variable({2}, {1.0, 2.0});
    Tensor loss = sum(x);
    (void)g.backward(loss);
    CHECK_THROWS_AS((void)g.backward(loss), std::logic_error);
}

TEST_CASE("backward rejects non-scalar and detached losses") {
    Graph g;
    Tensor x = g.variable({2}, {1.0, 2.0});
    CHECK_THROWS_AS((void)g.backward(add(x, x)), std::invalid_argument);
    CHECK_THROWS_AS((void)g.backward(Tensor::scalar(1.0)), std::invalid_argument);
}

TEST_CASE("grad_check: linear functions are exact to machine scale") {
    const Tensor w = random_tensor({3, 3}, 61);
    auto f = [&](const Tensor& x) { return sum(mul(x, w)); };
    const auto result = gradcheck::grad_check(f, random_tensor({3, 3}, 62), 1e-5);
    CHECK(result.max_rel_error < 1e-10);
}

TEST_CASE("grad_check: softmax cross-entropy composite") {
    auto f = [](const Tensor& x) { return cross_entropy_rows(x, {1, 0, 2}); };
    const auto result = gradcheck::grad_check(f, random_tensor({3, 4}, 63), 1e-5);
    CHECK(result.max_rel_error < 1e-6);
}

TEST_CASE("grad_check rejects non-finite points") {
    auto f = [](const Tensor& x) { return sum(x); };
    CHECK_THROWS_AS((void)gradcheck::grad_check(
                        f, Tensor::from_data({2}, {1.0, std::numeric_limits<double>::infinity()})),
                    std::invalid_argument);
}

TEST_CASE("cross-entropy analytic values") {
    // uniform logits: loss = ln K
    Tensor logits = Tensor::full({4, 7}, 0.3);
    CHECK(cross_entropy_rows(logits, {0, 1, 2, 3}).value() ==
          doctest::Approx(std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("deterministic ops: same inputs give bit-identical outputs") {
    Tensor a = random_tensor({16, 16}, 71);
    Tensor b = random_tensor({16, 16}, 72);
    Tensor out1 = matmul(a, b);
    Tensor out2 = matmul(a, b);
    for (size_t i = 0; i < out1.data().size(); ++i) CHECK(out1.data()[i] == out2.data()[i]);

    rng::Prng p1(99), p2(99);
    for (int i = 0; i < 100; ++i) CHECK(p1.normal() == p2.normal());
}

TEST_CASE("ops do not broadcast silently") {
    CHECK_THROWS_AS((void)add(random_tensor({2, 3}, 1), random_tensor({3, 2}, 2)),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)mul(random_tensor({2}, 1), random_tensor({3}, 2)),
                    std::invalid_argument);
}

TEST_CASE("reshape and pooling round shapes") {
    Tensor x = random_tensor({2, 4, 4, 3}, 81);
    Tensor pooled = avg_pool_hw(x, 2);
    CHECK(pooled.shape() == tensor::Shape{2, 2, 2, 3});
    Tensor up = upsample_nearest_hw(pooled, 2);
    CHECK(up.shape() == x.shape());
    CHECK_THROWS_AS((void)avg_pool_hw(random_tensor({1, 3, 3, 1}, 82), 2), std::invalid_argument);
}

TEST_CASE("quantize_st picks nearest entry with lowest-index ties") {
    Tensor codebook = Tensor::from_data({2, 2}, {0, 0, 1, 1});
    std::vector<int64_t> idx;
    Tensor out = quantize_st(Tensor::from_data({1, 2}, {0.9, 0.8}), codebook, &idx);
    CHECK(idx == std::vector<int64_t>{1});
    CHECK(out.at({0, 0}) == 1.0);

    // equidistant between the two entries
    (void)quantize_st(Tensor::from_data({1, 2}, {0.5, 0.5}), codebook, &idx);
    CHECK(idx == std::vector<int64_t>{0});
}

TEST_CASE("patchify3d round trip") {
    Tensor x = random_tensor({2, 4, 4, 3}, 91);
    Tensor rows = patchify3d(x, 2, 2, 2);
    CHECK(rows.shape() == tensor::Shape{1 * 2 * 2, 2 * 2 * 2 * 3});
    Tensor back = unpatchify3d(rows, x.shape(), 2, 2, 2);
    for (size_t i = 0; i < x.data().size(); ++i) CHECK(back.data()[i] == x.data()[i]);
}

}  // TEST_SUITE
