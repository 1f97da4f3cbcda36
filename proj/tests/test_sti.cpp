#include <doctest.h>

#include <cmath>

#include "vsd/gradcheck.h"
#include "vsd/ops.h"
#include "vsd/rng.h"
#include "vsd/sti.h"

using namespace vsd;
using tensor::Tensor;

namespace {

Tensor random_tensor(tensor::Shape shape, uint64_t seed, double scale = 1.0) {
    rng::Prng prng(seed);
    std::vector<double> data(static_cast<size_t>(tensor::shape_numel(shape)));
    for (auto& v : data) v = prng.normal() * scale;
    return Tensor::from_data(std::move(shape), std::move(data));
}

sti::StiParams random_params(int64_t d, int gamma, int k, uint64_t seed) {
    sti::StiParams p = sti::init_params(d, gamma, k);
    p.wq = random_tensor({d, d}, rng::mix(seed, 1), 0.5);
    p.wk = random_tensor({d, d}, rng::mix(seed, 2), 0.5);
    p.wv = random_tensor({d, d}, rng::mix(seed, 3), 0.5);
    p.wo = random_tensor({d, d}, rng::mix(seed, 4), 0.5);
    p.kernel = random_tensor({k, d}, rng::mix(seed, 5), 0.3);
    p.gate_logit = Tensor::scalar(0.3);
    return p;
}

}  // namespace

TEST_SUITE("sti") {

TEST_CASE("token count and shape for gamma=2 on 8x32x32") {
    const Tensor h = random_tensor({8, 32, 32, 4}, 11, 0.5);
    sti::StiParams p = sti::init_params(4, 2, 3);
    int64_t tokens = 0;
    const Tensor out = sti::semantic_interaction(h, p, &tokens);
    CHECK(tokens == 8 * 16 * 16);
    CHECK(out.shape() == h.shape());
}

TEST_CASE("gamma=1 keeps every token") {
    const Tensor h = random_tensor({2, 4, 4, 3}, 12);
    sti::StiParams p = sti::init_params(3, 1, 3);
    int64_t tokens = 0;
    (void)sti::semantic_interaction(h, p, &tokens);
    CHECK(tokens == 2 * 4 * 4);
}

TEST_CASE("constant input with identity projections passes through") {
    Tensor h = Tensor::full({2, 4, 4, 3}, 0.37);
    sti::StiParams p = sti::init_params(3, 2, 3);
    p.wo = nn::init_identity(3);  // identity output projection instead of zero
    const Tensor out = sti::semantic_interaction(h, p);
    for (double v : out.data()) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("attention matrix shrinks 16x when gamma doubles") {
    const Tensor h = random_tensor({4, 16, 16, 2}, 13);
    const sti::StiOutput g1 = sti::forward(h, random_params(2, 1, 3, 21));
    const sti::StiOutput g2 = sti::forward(h, random_params(2, 2, 3, 21));
    const sti::StiOutput g4 = sti::forward(h, random_params(2, 4, 3, 21));
    CHECK(g1.attention_entries == g2.attention_entries * 16);
    CHECK(g2.attention_entries == g4.attention_entries * 16);
    CHECK(g2.attention_tokens * g2.attention_tokens == g2.attention_entries);
}

TEST_CASE("output shape preserved across gamma and kernel choices") {
    for (const auto& [gamma, k] : std::vector<std::pair<int, int>>{{1, 1}, {2, 3}, {4, 5}}) {
        const Tensor h = random_tensor({3, 8, 8, 4}, 14);
        const sti::StiOutput out = sti::forward(h, random_params(4, gamma, k, 31));
        CHECK(out.features.shape() == h.shape());
    }
}

TEST_CASE("gate saturation selects a single branch") {
    const Tensor h = random_tensor({2, 4, 4, 2}, 15);
    sti::StiParams p = random_params(2, 2, 3, 41);

    p.gate_logit = Tensor::scalar(50.0);  // sigmoid == 1 at double precision
    const sti::StiOutput semantic_only = sti::forward(h, p);
    const Tensor semantic = sti::semantic_interaction(h, p);
    for (size_t i = 0; i < h.data().size(); ++i)
        CHECK(semantic_only.features.data()[i] ==
              doctest::Approx(h.data()[i] + semantic.data()[i]).epsilon(1e-12));

    p.gate_logit = Tensor::scalar(-50.0);
    const sti::StiOutput detail_only = sti::forward(h, p);
    const Tensor detail = sti::detail_preserve(h, p);
    for (size_t i = 0; i < h.data().size(); ++i)
        CHECK(detail_only.features.data()[i] ==
              doctest::Approx(h.data()[i] + detail.data()[i]).epsilon(1e-12));
}

TEST_CASE("gate stays strictly inside (0,1) for finite logits") {
    const Tensor h = random_tensor({2, 4, 4, 2}, 16);
    for (double logit : {-30.0, -4.0, 0.0, 4.0, 30.0}) {
        sti::StiParams p = random_params(2, 2, 3, 51);
        p.gate_logit = Tensor::scalar(logit);
        const sti::StiOutput out = sti::forward(h, p);
        CHECK(out.gate > 0.0);
        CHECK(out.gate < 1.0);
    }
}

TEST_CASE("identity at initialization is bit exact") {
    const Tensor h = random_tensor({4, 8, 8, 5}, 17);
    const sti::StiOutput out = sti::forward(h, sti::init_params(5, 2, 3));
    CHECK(out.gate == 0.5);
    for (size_t i = 0; i < h.data().size(); ++i) CHECK(out.features.data()[i] == h.data()[i]);
}

TEST_CASE("frame permutation sensitivity: other frames leak into frame i") {
    // two clips identical except in frame 3; frame 0 output must differ
    Tensor a = random_tensor({4, 8, 8, 2}, 18);
    std::vector<double> bd = a.data_copy();
    const int64_t plane = 8 * 8 * 2;
    for (int64_t i = 0; i < plane; ++i) bd[static_cast<size_t>(3 * plane + i)] += 1.0;
    const Tensor b = Tensor::from_data(a.shape(), std::move(bd));

    const sti::StiParams p = random_params(2, 2, 3, 61);
    const Tensor fa = sti::forward(a, p).features;
    const Tensor fb = sti::forward(b, p).features;
    double frame0_diff = 0.0;
    for (int64_t i = 0; i < plane; ++i)
        frame0_diff += std::abs(fa.data()[static_cast<size_t>(i)] - fb.data()[static_cast<size_t>(i)]);
    CHECK(frame0_diff > 1e-6);
}

TEST_CASE("gamma must divide the spatial size") {
    const Tensor h = random_tensor({2, 6, 6, 2}, 19);
    CHECK_THROWS_AS((void)sti::semantic_interaction(h, random_params(2, 4, 3, 71)),
                    std::invalid_argument);
}

TEST_CASE("even frame kernels are rejected") {
    CHECK_THROWS_AS((void)sti::init_params(2, 2, 4), std::invalid_argument);
}

TEST_CASE("detail branch: identity kernel and static clips") {
    const Tensor h = random_tensor({4, 4, 4, 2}, 20);
    sti::StiParams p = sti::init_params(2, 2, 3);

    // kernel [0,1,0] per channel
    p.kernel = Tensor::from_data({3, 2}, {0, 0, 1, 1, 0, 0});
    const Tensor out = sti::detail_preserve(h, p);
    for (size_t i = 0; i < h.data().size(); ++i) CHECK(out.data()[i] == h.data()[i]);

    // static clip is unchanged by any normalized kernel
    Tensor static_clip = Tensor::full({4, 4, 4, 2}, 0.6);
    p.kernel = Tensor::from_data({3, 2}, {0.2, 0.1, 0.5, 0.8, 0.3, 0.1});
    const Tensor out2 = sti::detail_preserve(static_clip, p);
    for (double v : out2.data()) CHECK(v == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("detail branch: half-sum kernel on alternating frames") {
    // frames alternate 0,1,0,1 at one pixel; kernel [1/2, 0, 1/2] averages the
    // two neighbors, so an interior frame that was 1 becomes 0
    std::vector<double> data(4 * 1 * 1 * 1, 0.0);
    data[1] = 1.0;
    data[3] = 1.0;
    const Tensor h = Tensor::from_data({4, 1, 1, 1}, std::move(data));
    sti::StiParams p = sti::init_params(1, 1, 3);
    p.kernel = Tensor::from_data({3, 1}, {0.5, 0.0, 0.5});
    const Tensor out = sti::detail_preserve(h, p);
    CHECK(out.at({1, 0, 0, 0}) == 0.0);
    CHECK(out.at({2, 0, 0, 0}) == 1.0);
}

TEST_CASE("gradient correctness through the full layer") {
    const Tensor h = random_tensor({3, 4, 4, 2}, 22);
    const sti::StiParams p = random_params(2, 2, 3, 81);
    auto f = [&](const Tensor& x) {
        const Tensor features = sti::forward(x, p).features;
        return ops::mean(ops::mul(features, features));
    };
    CHECK(gradcheck::grad_check(f, h).max_rel_error < 1e-5);
}

}  // TEST_SUITE
