#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace vsd::io {

struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;  // width*height*3
};

// 8-bit PNG of any color type, returned as interleaved RGB.
ImageU8 read_png(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const ImageU8& image);

// Paths of the *.png files in a directory, ordered by the first integer in
// the stem (then by name); used for frame directories like 000.png, 001.png.
std::vector<std::filesystem::path> list_numbered_pngs(const std::filesystem::path& dir);

}  // namespace vsd::io
