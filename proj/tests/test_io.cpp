#include <doctest.h>

#include <filesystem>

#include "vsd/clip.h"
#include "vsd/io/checkpoint.h"
#include "vsd/io/gif.h"
#include "vsd/io/png.h"
#include "vsd/io/vsdt.h"
#include "vsd/manifest.h"
#include "vsd/rng.h"

using namespace vsd;
using tensor::Tensor;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("vsd_io_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<uint8_t> random_frame(int w, int h, uint64_t seed) {
    rng::Prng prng(seed);
    std::vector<uint8_t> rgb(static_cast<size_t>(w) * h * 3);
    for (auto& v : rgb) v = static_cast<uint8_t>(prng.below(256));
    return rgb;
}

std::vector<uint8_t> quantized_332(const std::vector<uint8_t>& rgb) {
    std::vector<uint8_t> out(rgb.size());
    for (size_t p = 0; p < rgb.size() / 3; ++p) {
        const uint8_t idx = io::palette_index_332(rgb[p * 3], rgb[p * 3 + 1], rgb[p * 3 + 2]);
        io::palette_color_332(idx, out.data() + p * 3);
    }
    return out;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("vsdt round trip is bit exact") {
    rng::Prng prng(7);
    Tensor t = Tensor::from_data({3, 4, 2}, prng.normal_vector(24));
    const std::vector<uint8_t> bytes = io::encode_vsdt(t);
    CHECK(bytes[0] == 'V');
    CHECK(bytes[1] == 'S');
    CHECK(bytes[2] == 'D');
    CHECK(bytes[3] == 'T');
    Tensor back = io::decode_vsdt(bytes.data(), bytes.size());
    CHECK(back.shape() == t.shape());
    for (size_t i = 0; i < t.data().size(); ++i) CHECK(back.data()[i] == t.data()[i]);

    // scalar tensors (ndim 0) also round trip
    Tensor s = Tensor::scalar(-2.5);
    const auto sbytes = io::encode_vsdt(s);
    CHECK(io::decode_vsdt(sbytes.data(), sbytes.size()).value() == -2.5);
}

TEST_CASE("vsdt rejects corrupt input") {
    std::vector<uint8_t> bytes = io::encode_vsdt(Tensor::scalar(1.0));
    bytes[0] = 'X';
    CHECK_THROWS_AS((void)io::decode_vsdt(bytes.data(), bytes.size()), std::runtime_error);
    bytes[0] = 'V';
    CHECK_THROWS_AS((void)io::decode_vsdt(bytes.data(), bytes.size() - 4), std::runtime_error);
}

TEST_CASE("gif encode/decode recovers palette-exact frames") {
    io::GifFrames frames;
    frames.width = 16;
    frames.height = 12;
    for (int f = 0; f < 3; ++f)
        frames.frames.push_back(quantized_332(random_frame(16, 12, 100 + static_cast<uint64_t>(f))));
    frames.delays_cs = {10, 10, 10};

    const std::vector<uint8_t> bytes = io::encode_gif(frames);
    const io::GifFrames back = io::decode_gif(bytes);
    REQUIRE(back.frames.size() == 3);
    CHECK(back.width == 16);
    CHECK(back.height == 12);
    for (int f = 0; f < 3; ++f)
        for (size_t i = 0; i < frames.frames[static_cast<size_t>(f)].size(); ++i)
            CHECK(back.frames[static_cast<size_t>(f)][i] == frames.frames[static_cast<size_t>(f)][i]);
}

TEST_CASE("gif decode equals palette quantization of arbitrary input") {
    io::GifFrames frames;
    frames.width = 9;
    frames.height = 7;
    frames.frames.push_back(random_frame(9, 7, 5));
    const io::GifFrames back = io::decode_gif(io::encode_gif(frames));
    const std::vector<uint8_t> expect = quantized_332(frames.frames[0]);
    for (size_t i = 0; i < expect.size(); ++i) CHECK(back.frames[0][i] == expect[i]);
}

TEST_CASE("gif encoding is deterministic") {
    io::GifFrames frames;
    frames.width = 8;
    frames.height = 8;
    frames.frames.push_back(random_frame(8, 8, 9));
    frames.frames.push_back(random_frame(8, 8, 10));
    CHECK(io::encode_gif(frames) == io::encode_gif(frames));
}

TEST_CASE("gif file round trip and clip loading") {
    const fs::path dir = temp_dir("gif");
    io::GifFrames frames;
    frames.width = 10;
    frames.height = 10;
    for (int f = 0; f < 4; ++f)
        frames.frames.push_back(quantized_332(random_frame(10, 10, 20 + static_cast<uint64_t>(f))));
    io::write_gif(dir / "clip.gif", frames, 12);

    const clip::ClipU8 media = clip::load_media(dir / "clip.gif");
    CHECK(media.frames == 4);
    CHECK(media.height == 10);
    CHECK(media.width == 10);
    for (size_t i = 0; i < frames.frames[0].size(); ++i)
        CHECK(media.frame(0)[i] == frames.frames[0][i]);
    fs::remove_all(dir);
}

TEST_CASE("png frame directories load in numeric order") {
    const fs::path dir = temp_dir("png");
    for (int i : {0, 1, 2, 10}) {
        io::ImageU8 img;
        img.width = 6;
        img.height = 5;
        img.rgb.assign(static_cast<size_t>(6) * 5 * 3, static_cast<uint8_t>(i * 20));
        io::write_png(dir / ("frame_" + std::to_string(i) + ".png"), img);
    }
    const clip::ClipU8 media = clip::load_media(dir);
    CHECK(media.frames == 4);
    CHECK(media.frame(3)[0] == 200);  // frame_10 sorts numerically last
    CHECK(media.frame(1)[0] == 20);
    fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip preserves params and config") {
    const fs::path dir = temp_dir("ckpt");
    rng::Prng prng(31);
    io::Checkpoint ckpt;
    ckpt.config_json = R"({"kind":"test","alpha":2})";
    ckpt.params["a.w"] = Tensor::from_data({2, 3}, prng.normal_vector(6));
    ckpt.params["b"] = Tensor::scalar(0.25);
    io::save_checkpoint(dir / "model.vsdck", ckpt);

    const io::Checkpoint back = io::load_checkpoint(dir / "model.vsdck");
    CHECK(back.params.size() == 2);
    CHECK(back.params.at("b").value() == 0.25);
    const auto& w = ckpt.params.at("a.w").data();
    const auto& w2 = back.params.at("a.w").data();
    for (size_t i = 0; i < w.size(); ++i) CHECK(w[i] == w2[i]);
    CHECK(back.config_json.find("\"kind\":\"test\"") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("manifest record json round trip") {
    manifest::Record r;
    r.id = "clip_00042";
    r.path = "media/clip_00042.gif";
    r.frame_count = 8;
    r.width = 32;
    r.height = 32;
    r.domain = "cartoon";
    r.caption = "a red circle sliding across";
    r.trigger_words = {"red", "circle", "slide"};
    r.ocr_text = "";
    r.split = "train";

    const manifest::Record back = manifest::from_json_line(manifest::to_json_line(r));
    CHECK(back.id == r.id);
    CHECK(back.path == r.path);
    CHECK(back.frame_count == 8);
    CHECK(back.domain == "cartoon");
    CHECK(back.trigger_words == r.trigger_words);
    CHECK(back.ocr_text.has_value());
    CHECK(back.split == "train");

    CHECK(manifest::training_caption(r) == "cartoon\ta red circle sliding across");
}

TEST_CASE("manifest without ocr field keeps nullopt") {
    const manifest::Record r = manifest::from_json_line(
        R"({"id":"x","path":"p.gif","frame_count":1,"width":8,"height":8,)"
        R"("domain":"real","caption":"c","trigger_words":[],"split":"unassigned"})");
    CHECK_FALSE(r.ocr_text.has_value());
}

TEST_CASE("clip tensor conversions") {
    clip::ClipU8 media;
    media.frames = 1;
    media.height = 2;
    media.width = 2;
    media.rgb = {0, 255, 128, 64, 32, 16, 8, 4, 2, 1, 0, 255};
    const Tensor unit = clip::to_unit_tensor(media);
    CHECK(unit.at({0, 0, 0, 0}) == 0.0);
    CHECK(unit.at({0, 0, 0, 1}) == 1.0);
    const clip::ClipU8 back = clip::from_unit_tensor(unit);
    for (size_t i = 0; i < media.rgb.size(); ++i) CHECK(back.rgb[i] == media.rgb[i]);

    const Tensor model = clip::to_model_tensor(media);
    CHECK(model.at({0, 0, 0, 0}) == -1.0);
    CHECK(model.at({0, 0, 0, 1}) == 1.0);
}

}  // TEST_SUITE
