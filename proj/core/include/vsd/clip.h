#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vsd/tensor.h"

namespace vsd::clip {

using tensor::Tensor;

// Interleaved RGB frame stack, the storage form of a sticker clip.
struct ClipU8 {
    int frames = 0;
    int height = 0;
    int width = 0;
    std::vector<uint8_t> rgb;  // frames*height*width*3

    size_t frame_bytes() const { return static_cast<size_t>(height) * width * 3; }
    const uint8_t* frame(int f) const { return rgb.data() + static_cast<size_t>(f) * frame_bytes(); }
    uint8_t* frame(int f) { return rgb.data() + static_cast<size_t>(f) * frame_bytes(); }
};

// F x H x W x 3 tensor with values in [0,1]
Tensor to_unit_tensor(const ClipU8& clip);
// F x H x W x 3 tensor with values in [-1,1], the denoiser's pixel space
Tensor to_model_tensor(const ClipU8& clip);

ClipU8 from_unit_tensor(const Tensor& t);
Tensor model_to_unit(const Tensor& t);  // (x+1)/2 clamped to [0,1]
Tensor unit_to_model(const Tensor& t);

// Decodes an animated GIF file or a directory of numbered PNG frames.
ClipU8 load_media(const std::filesystem::path& path);

}  // namespace vsd::clip
