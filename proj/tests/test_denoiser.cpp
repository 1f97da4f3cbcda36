#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "vsd/denoiser.h"
#include "vsd/io/checkpoint.h"
#include "vsd/io/vsdt.h"
#include "vsd/ops.h"
#include "vsd/rng.h"
#include "vsd/synthgen.h"

using namespace vsd;
using denoiser::Denoiser;
using denoiser::DenoiserConfig;
using denoiser::TemporalKind;
using tensor::Tensor;
namespace fs = std::filesystem;

namespace {

Tensor random_tensor(tensor::Shape shape, uint64_t seed, double scale = 1.0) {
    rng::Prng prng(seed);
    std::vector<double> data(static_cast<size_t>(tensor::shape_numel(shape)));
    for (auto& v : data) v = prng.normal() * scale;
    return Tensor::from_data(std::move(shape), std::move(data));
}

DenoiserConfig toy_config(TemporalKind kind) {
    DenoiserConfig cfg;
    cfg.base_channels = 4;
    cfg.depth = 2;
    cfg.temporal = kind;
    cfg.gamma = 2;
    cfg.frame_kernel = 3;
    cfg.text_dim = 8;
    cfg.vocab_size = 64;
    cfg.time_dim = 8;
    cfg.frames = 4;
    cfg.height = 8;
    cfg.width = 8;
    return cfg;
}

std::vector<denoiser::TrainItem> toy_items(int n, int frames, int size) {
    std::vector<denoiser::TrainItem> items;
    for (int i = 0; i < n; ++i) {
        synthgen::SceneSpec spec;
        spec.domain = i % 2 ? "cartoon" : "real";
        spec.shape = static_cast<synthgen::SubjectShape>(i % 4);
        spec.motion = static_cast<synthgen::MotionKind>(i % 5);
        spec.color_index = i % synthgen::color_count();
        const synthgen::GeneratedClip clip = synthgen::gen_clip(spec, 900 + static_cast<uint64_t>(i));
        // crop into the toy geometry
        Tensor full = clip::to_model_tensor(clip.media);
        std::vector<double> cropped(static_cast<size_t>(frames) * size * size * 3);
        for (int f = 0; f < frames; ++f)
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    for (int c = 0; c < 3; ++c)
                        cropped[static_cast<size_t>(((f * size + y) * size + x) * 3 + c)] =
                            full.at({f, y + 8, x + 8, c});
        items.push_back({Tensor::from_data({frames, size, size, 3}, std::move(cropped)),
                         clip.caption});
    }
    return items;
}

}  // namespace

TEST_SUITE("denoiser") {

TEST_CASE("encode_text: start token, determinism, domain prefix") {
    const Tensor table = random_tensor({64, 8}, 5, 0.1);

    const denoiser::TextEmbedding empty = denoiser::encode_text("", table);
    CHECK(empty.token_ids == std::vector<int64_t>{denoiser::kStartTokenId});
    CHECK(empty.tokens.shape() == tensor::Shape{1, 8});

    const auto a = denoiser::encode_text("cartoon\tA bear waving", table);
    const auto b = denoiser::encode_text("cartoon\tA bear waving", table);
    CHECK(a.token_ids == b.token_ids);
    for (size_t i = 0; i < a.tokens.data().size(); ++i)
        CHECK(a.tokens.data()[i] == b.tokens.data()[i]);

    const auto c = denoiser::encode_text("real\tA bear waving", table);
    REQUIRE(a.token_ids.size() == c.token_ids.size());
    CHECK(a.token_ids[0] == c.token_ids[0]);  // shared start token
    CHECK(a.token_ids[1] != c.token_ids[1]);  // the domain token differs
    for (size_t i = 2; i < a.token_ids.size(); ++i) CHECK(a.token_ids[i] == c.token_ids[i]);
}

TEST_CASE("tokenizer lowercases, splits on any whitespace, caps length") {
    const auto ids = denoiser::tokenize("Hello\tWORLD  hello\nworld", 64);
    REQUIRE(ids.size() == 5);
    CHECK(ids[1] == ids[3]);
    CHECK(ids[2] == ids[4]);

    std::string longcap;
    for (int i = 0; i < 50; ++i) longcap += "w" + std::to_string(i) + " ";
    CHECK(static_cast<int64_t>(denoiser::tokenize(longcap, 64).size()) ==
          denoiser::kMaxCaptionTokens);
}

TEST_CASE("zero-initialized head predicts zero noise") {
    const DenoiserConfig cfg = toy_config(TemporalKind::sti);
    const Denoiser model(cfg, 3);
    const Tensor x = random_tensor({4, 8, 8, 3}, 6);
    const Tensor out = model.denoise(x, 500, "cartoon\ta toy");
    for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("output shape matches input for the full clip geometry") {
    DenoiserConfig cfg;
    cfg.base_channels = 8;
    cfg.frames = 8;
    const Denoiser model(cfg, 4);
    const Tensor x = random_tensor({8, 32, 32, 3}, 7);
    const Tensor out = model.denoise(x, 123, "real\ta blue square waving side to side");
    CHECK(out.shape() == x.shape());
    CHECK_THROWS_AS((void)model.denoise(random_tensor({8, 16, 16, 3}, 8), 1, "x"),
                    std::invalid_argument);
}

TEST_CASE("parameter count grows none < conv1d < sti") {
    const Denoiser none(toy_config(TemporalKind::none), 1);
    const Denoiser conv(toy_config(TemporalKind::conv1d), 1);
    const Denoiser sti(toy_config(TemporalKind::sti), 1);
    CHECK(none.param_count() < conv.param_count());
    CHECK(conv.param_count() < sti.param_count());
}

TEST_CASE("temporal kind none keeps frames independent; sti does not") {
    for (const TemporalKind kind : {TemporalKind::none, TemporalKind::sti}) {
        DenoiserConfig cfg = toy_config(kind);
        Denoiser model(cfg, 11);
        // randomize so zero-initialized layers do not mask cross-frame paths
        rng::Prng prng(12);
        for (auto& [name, t] : model.params()) {
            std::vector<double> data(static_cast<size_t>(t.numel()));
            for (auto& v : data) v = prng.normal() * 0.2;
            t = Tensor::from_data(t.shape(), std::move(data));
        }

        Tensor a = random_tensor({4, 8, 8, 3}, 13);
        std::vector<double> bd = a.data_copy();
        const int64_t plane = 8 * 8 * 3;
        for (int64_t i = 0; i < plane; ++i) bd[static_cast<size_t>(3 * plane + i)] += 0.5;
        const Tensor b = Tensor::from_data(a.shape(), std::move(bd));

        const std::string caption = "cartoon\ta probe";
        const Tensor fa = model.denoise(a, 400, caption);
        const Tensor fb = model.denoise(b, 400, caption);
        double frame0_diff = 0.0;
        for (int64_t i = 0; i < plane; ++i)
            frame0_diff +=
                std::abs(fa.data()[static_cast<size_t>(i)] - fb.data()[static_cast<size_t>(i)]);
        if (kind == TemporalKind::none) {
            CHECK(frame0_diff == 0.0);
        } else {
            CHECK(frame0_diff > 1e-8);
        }
    }
}

TEST_CASE("overfitting a tiny batch cuts the loss below 20% of the start") {
    DenoiserConfig cfg = toy_config(TemporalKind::sti);
    cfg.base_channels = 8;
    cfg.frames = 4;
    cfg.height = 16;
    cfg.width = 16;
    Denoiser model(cfg, 21);

    const auto items = toy_items(2, 4, 16);
    denoiser::FitOptions opt;
    opt.steps = 500;
    opt.batch_size = 2;
    opt.seed = 22;
    opt.log_every = 0;
    const denoiser::FitResult result = denoiser::fit(model, items, opt);

    const double initial = result.loss_curve.front();
    // the tail average smooths single-step noise in the (t, eps) draws
    double tail = 0.0;
    for (size_t i = result.loss_curve.size() - 20; i < result.loss_curve.size(); ++i)
        tail += result.loss_curve[i];
    tail /= 20.0;
    CHECK(tail < 0.2 * initial);
}

TEST_CASE("training is deterministic per seed") {
    const auto items = toy_items(2, 4, 8);
    denoiser::FitOptions opt;
    opt.steps = 12;
    opt.batch_size = 2;
    opt.seed = 33;
    opt.log_every = 0;

    DenoiserConfig cfg = toy_config(TemporalKind::conv1d);
    cfg.frames = 4;
    Denoiser m1(cfg, 31);
    Denoiser m2(cfg, 31);
    const auto r1 = denoiser::fit(m1, items, opt);
    const auto r2 = denoiser::fit(m2, items, opt);
    REQUIRE(r1.loss_curve.size() == r2.loss_curve.size());
    for (size_t i = 0; i < r1.loss_curve.size(); ++i)
        CHECK(r1.loss_curve[i] == r2.loss_curve[i]);
}

TEST_CASE("checkpoint round trip reproduces outputs bit-for-bit") {
    const fs::path dir = fs::temp_directory_path() / "vsd_denoiser_ckpt";
    fs::remove_all(dir);
    fs::create_directories(dir);

    DenoiserConfig cfg = toy_config(TemporalKind::sti);
    Denoiser model(cfg, 41);
    const auto items = toy_items(2, 4, 8);
    denoiser::FitOptions opt;
    opt.steps = 5;
    opt.seed = 42;
    opt.log_every = 0;
    (void)denoiser::fit(model, items, opt);

    io::save_checkpoint(dir / "m.vsdck", {"{}", model.params()});
    const io::Checkpoint back = io::load_checkpoint(dir / "m.vsdck");
    const Denoiser restored(cfg, back.params);

    const Tensor x = random_tensor({4, 8, 8, 3}, 43);
    const Tensor a = model.denoise(x, 250, "cartoon\tprobe");
    const Tensor b = restored.denoise(x, 250, "cartoon\tprobe");
    for (size_t i = 0; i < a.data().size(); ++i) CHECK(a.data()[i] == b.data()[i]);
    fs::remove_all(dir);
}

TEST_CASE("validation loss is a pure function of checkpoint and batch") {
    DenoiserConfig cfg = toy_config(TemporalKind::none);
    cfg.frames = 4;
    const Denoiser model(cfg, 51);
    const auto items = toy_items(3, 4, 8);
    const diffusion::NoiseSchedule schedule = diffusion::make_schedule(1000);
    const double v1 = denoiser::validation_loss(model, items, schedule, 7);
    const double v2 = denoiser::validation_loss(model, items, schedule, 7);
    CHECK(v1 == v2);
    CHECK(v1 > 0.0);
}

TEST_CASE("undecodable manifest items are skipped; empty result is an error") {
    const fs::path dir = fs::temp_directory_path() / "vsd_denoiser_load";
    fs::remove_all(dir);
    fs::create_directories(dir / "media");

    const synthgen::GenDatasetResult data = synthgen::gen_dataset(2, 61, dir);
    std::vector<manifest::Record> records = data.records;
    manifest::Record broken = records[0];
    broken.id = "broken";
    broken.path = "media/broken.gif";
    io::write_file_bytes(dir / broken.path, {'n', 'o', 't', 'a', 'g', 'i', 'f'});
    records.push_back(broken);

    const auto items = denoiser::load_training_items(records, dir, 8);
    CHECK(items.size() == 2);
    CHECK(items[0].x0.shape() == tensor::Shape{8, 32, 32, 3});
    CHECK(items[0].caption.find('\t') != std::string::npos);

    const std::vector<manifest::Record> only_broken{broken};
    CHECK_THROWS_AS((void)denoiser::load_training_items(only_broken, dir, 8), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("config validation rejects impossible geometry") {
    DenoiserConfig cfg = toy_config(TemporalKind::sti);
    cfg.gamma = 3;  // does not divide 8
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = toy_config(TemporalKind::sti);
    cfg.frame_kernel = 2;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = toy_config(TemporalKind::sti);
    cfg.height = 10;  // not divisible by 2^depth
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

}  // TEST_SUITE
