#include <doctest.h>

#include <cmath>
#include <numeric>

#include "vsd/clip.h"
#include "vsd/ops.h"
#include "vsd/rng.h"
#include "vsd/synthgen.h"
#include "vsd/vq.h"

using namespace vsd;
using tensor::Tensor;

namespace {

vq::VqConfig toy_config() {
    vq::VqConfig cfg;
    cfg.codebook_size = 8;
    cfg.code_dim = 4;
    cfg.patch = 2;
    cfg.hidden = 8;
    cfg.frames = 2;
    cfg.height = 8;
    cfg.width = 8;
    cfg.prior_dim = 8;
    cfg.prior_vocab = 64;
    return cfg;
}

vq::TokenGrid grid_of(const vq::VqConfig& cfg, uint64_t seed) {
    vq::TokenGrid g;
    g.frames = cfg.grid_frames();
    g.height = cfg.grid_height();
    g.width = cfg.grid_width();
    g.mask_symbol = cfg.codebook_size;
    g.codes.resize(static_cast<size_t>(cfg.cells()));
    g.mask.assign(g.codes.size(), 0);
    rng::Prng prng(seed);
    for (auto& c : g.codes) c = static_cast<int64_t>(prng.below(static_cast<uint64_t>(cfg.codebook_size)));
    return g;
}

std::vector<Tensor> synthetic_clips(int n) {
    std::vector<Tensor> clips;
    for (int i = 0; i < n; ++i) {
        synthgen::SceneSpec spec;
        spec.domain = i % 2 ? "cartoon" : "real";
        spec.shape = static_cast<synthgen::SubjectShape>(i % 4);
        spec.motion = static_cast<synthgen::MotionKind>(i % 5);
        spec.color_index = i % synthgen::color_count();
        spec.background_index = i % synthgen::background_count();
        clips.push_back(
            clip::to_model_tensor(synthgen::gen_clip(spec, 700 + static_cast<uint64_t>(i)).media));
    }
    return clips;
}

}  // namespace

TEST_SUITE("vq") {

TEST_CASE("mask_corrupt masks exactly floor(rate * cells), deterministically") {
    const vq::VqConfig cfg = toy_config();
    const vq::TokenGrid g = grid_of(cfg, 1);  // 16 cells

    const vq::TokenGrid none = vq::mask_corrupt(g, 0.0, 5);
    CHECK(none.masked_positions().empty());
    CHECK(none.codes == g.codes);

    const vq::TokenGrid all = vq::mask_corrupt(g, 1.0, 5);
    CHECK(static_cast<int64_t>(all.masked_positions().size()) == g.cells());
    for (int64_t c : all.codes) CHECK(c == g.mask_symbol);

    const vq::TokenGrid half = vq::mask_corrupt(g, 0.5, 5);
    CHECK(static_cast<int64_t>(half.masked_positions().size()) == 8);
    const vq::TokenGrid again = vq::mask_corrupt(g, 0.5, 5);
    CHECK(half.codes == again.codes);
    const vq::TokenGrid other = vq::mask_corrupt(g, 0.5, 6);
    CHECK(half.codes != other.codes);

    CHECK_THROWS_AS((void)vq::mask_corrupt(g, 1.5, 5), std::invalid_argument);
    CHECK_THROWS_AS((void)vq::mask_corrupt(g, -0.1, 5), std::invalid_argument);
}

TEST_CASE("rate 0.5 over 10 cells masks exactly 5") {
    vq::TokenGrid g;
    g.frames = 1;
    g.height = 2;
    g.width = 5;
    g.mask_symbol = 4;
    g.codes.assign(10, 2);
    g.mask.assign(10, 0);
    CHECK(vq::mask_corrupt(g, 0.5, 9).masked_positions().size() == 5);
}

TEST_CASE("prior_loss analytic values") {
    const vq::VqConfig cfg = toy_config();
    const vq::TokenGrid z = grid_of(cfg, 2);
    const vq::TokenGrid z_bar = vq::mask_corrupt(z, 0.5, 3);
    const int64_t k = cfg.codebook_size;

    // oracle predictor: near-certain mass on the true code
    auto oracle = [&](const vq::TokenGrid&, const std::string&) {
        std::vector<double> logits(static_cast<size_t>(z.cells() * k), 0.0);
        for (int64_t cell = 0; cell < z.cells(); ++cell)
            logits[static_cast<size_t>(cell * k + z.codes[static_cast<size_t>(cell)])] = 60.0;
        return Tensor::from_data({z.cells(), k}, std::move(logits));
    };
    CHECK(vq::prior_loss(oracle, z, z_bar, "y").value() < 1e-9);

    // uniform predictor: ln K per masked cell
    auto uniform = [&](const vq::TokenGrid&, const std::string&) {
        return Tensor::full({z.cells(), k}, 0.25);
    };
    CHECK(vq::prior_loss(uniform, z, z_bar, "y").value() ==
          doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-12));

    // 0.75 on the truth with K=2
    vq::VqConfig cfg2 = toy_config();
    cfg2.codebook_size = 2;
    const vq::TokenGrid z2 = grid_of(cfg2, 4);
    const vq::TokenGrid z2_bar = vq::mask_corrupt(z2, 0.5, 4);
    auto threequarters = [&](const vq::TokenGrid&, const std::string&) {
        std::vector<double> logits(static_cast<size_t>(z2.cells() * 2));
        for (int64_t cell = 0; cell < z2.cells(); ++cell) {
            const int64_t truth = z2.codes[static_cast<size_t>(cell)];
            logits[static_cast<size_t>(cell * 2 + truth)] = std::log(0.75);
            logits[static_cast<size_t>(cell * 2 + (1 - truth))] = std::log(0.25);
        }
        return Tensor::from_data({z2.cells(), 2}, std::move(logits));
    };
    CHECK(vq::prior_loss(threequarters, z2, z2_bar, "y").value() ==
          doctest::Approx(-std::log(0.75)).epsilon(1e-9));
    CHECK(vq::prior_loss(threequarters, z2, z2_bar, "y").value() ==
          doctest::Approx(0.28768).epsilon(1e-4));

    // nothing masked -> 0 by definition
    CHECK(vq::prior_loss(uniform, z, z, "y").value() == 0.0);
}

TEST_CASE("prior_loss does not depend on the enumeration order of masked cells") {
    const vq::VqConfig cfg = toy_config();
    vq::VqModel model(cfg, 5);
    const vq::TokenGrid z = grid_of(cfg, 6);
    const vq::TokenGrid z_bar = vq::mask_corrupt(z, 0.6, 7);

    const nn::VarMap vars(model.params(), false);
    auto logits_fn = [&](const vq::TokenGrid& grid, const std::string& y) {
        return model.prior_logits(vars, grid, y);
    };
    const double loss = vq::prior_loss(logits_fn, z, z_bar, "cap").value();

    // independent oracle: walk the masked set in a shuffled order and average
    const Tensor logits = logits_fn(z_bar, "cap");
    std::vector<int64_t> masked = z_bar.masked_positions();
    rng::Prng prng(8);
    prng.shuffle(masked);
    double total = 0.0;
    for (int64_t cell : masked) {
        const double* row = logits.data().data() + cell * cfg.codebook_size;
        double mx = row[0];
        for (int64_t c = 1; c < cfg.codebook_size; ++c) mx = std::max(mx, row[c]);
        double lse = 0.0;
        for (int64_t c = 0; c < cfg.codebook_size; ++c) lse += std::exp(row[c] - mx);
        total += mx + std::log(lse) - row[z.codes[static_cast<size_t>(cell)]];
    }
    CHECK(loss == doctest::Approx(total / static_cast<double>(masked.size())).epsilon(1e-12));
}

TEST_CASE("usage counts sum to the number of encoded cells") {
    const vq::VqConfig cfg = toy_config();
    vq::VqModel model(cfg, 9);
    rng::Prng prng(10);
    const Tensor clip_a =
        Tensor::from_data({2, 8, 8, 3}, prng.normal_vector(static_cast<size_t>(2 * 8 * 8 * 3)));
    (void)model.encode(clip_a);
    (void)model.encode(clip_a);
    const int64_t total = std::accumulate(model.usage().begin(), model.usage().end(), int64_t{0});
    CHECK(total == 2 * cfg.cells());
    model.reset_usage();
    CHECK(std::accumulate(model.usage().begin(), model.usage().end(), int64_t{0}) == 0);
}

TEST_CASE("decode rejects masked grids and bad codes") {
    const vq::VqConfig cfg = toy_config();
    vq::VqModel model(cfg, 11);
    vq::TokenGrid g = grid_of(cfg, 12);
    const vq::TokenGrid masked = vq::mask_corrupt(g, 0.5, 13);
    CHECK_THROWS_AS((void)model.decode(masked), std::invalid_argument);
    g.codes[0] = cfg.codebook_size + 3;
    CHECK_THROWS_AS((void)model.decode(g), std::invalid_argument);
}

TEST_CASE("round-trip error decreases over training (5% jitter allowed)") {
    vq::VqConfig cfg;  // full-size clips
    vq::VqModel model(cfg, 14);
    const std::vector<Tensor> clips = synthetic_clips(4);

    vq::VqFitOptions opt;
    opt.steps = 300;
    opt.batch_size = 4;
    opt.seed = 15;
    opt.log_every = 25;
    const vq::VqFitResult result = vq::fit_vq(model, clips, opt);

    REQUIRE(result.round_trip_curve.size() >= 5);
    for (size_t i = 1; i < result.round_trip_curve.size(); ++i)
        CHECK(result.round_trip_curve[i] <= result.round_trip_curve[i - 1] * 1.05);
    CHECK(result.round_trip_curve.back() < result.round_trip_curve.front());
}

TEST_CASE("prior training drives the masked NLL below uniform") {
    vq::VqConfig cfg = toy_config();
    cfg.frames = 4;
    cfg.height = 8;
    cfg.width = 8;
    vq::VqModel model(cfg, 16);

    std::vector<std::pair<Tensor, std::string>> items;
    rng::Prng prng(17);
    for (int i = 0; i < 4; ++i) {
        items.emplace_back(
            Tensor::from_data({4, 8, 8, 3}, prng.normal_vector(static_cast<size_t>(4 * 8 * 8 * 3))),
            i % 2 ? "cartoon\tprobe a" : "real\tprobe b");
    }
    vq::PriorFitOptions opt;
    opt.steps = 120;
    opt.seed = 18;
    opt.log_every = 0;
    const std::vector<double> curve = vq::fit_prior(model, items, opt);
    REQUIRE(!curve.empty());
    double tail = 0.0;
    for (size_t i = curve.size() - 10; i < curve.size(); ++i) tail += curve[i];
    tail /= 10.0;
    CHECK(tail < std::log(static_cast<double>(cfg.codebook_size)));
}

}  // TEST_SUITE
