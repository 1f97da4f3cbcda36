#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace vsd::io {

struct GifFrames {
    int width = 0;
    int height = 0;
    std::vector<std::vector<uint8_t>> frames;  // each width*height*3, interleaved RGB
    std::vector<int> delays_cs;                // per frame, centiseconds
};

// GIF89a with a fixed 3-3-2 global palette, looping forever. Deterministic:
// the same frames always produce the same bytes.
std::vector<uint8_t> encode_gif(const GifFrames& frames, int default_delay_cs = 10);
GifFrames decode_gif(const std::vector<uint8_t>& bytes);

void write_gif(const std::filesystem::path& path, const GifFrames& frames, int default_delay_cs = 10);
GifFrames read_gif(const std::filesystem::path& path);

// Palette quantization used by the encoder, exposed for round-trip tests.
uint8_t palette_index_332(uint8_t r, uint8_t g, uint8_t b);
void palette_color_332(uint8_t index, uint8_t* rgb_out);

}  // namespace vsd::io
