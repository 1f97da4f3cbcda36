#include "vsd/clip.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vsd/io/gif.h"
#include "vsd/io/png.h"
#include "vsd/ops.h"

namespace vsd::clip {

Tensor to_unit_tensor(const ClipU8& clip) {
    std::vector<double> data(clip.rgb.size());
    for (size_t i = 0; i < clip.rgb.size(); ++i) data[i] = clip.rgb[i] / 255.0;
    return Tensor::from_data({clip.frames, clip.height, clip.width, 3}, std::move(data));
}

Tensor to_model_tensor(const ClipU8& clip) {
    std::vector<double> data(clip.rgb.size());
    for (size_t i = 0; i < clip.rgb.size(); ++i) data[i] = clip.rgb[i] / 255.0 * 2.0 - 1.0;
    return Tensor::from_data({clip.frames, clip.height, clip.width, 3}, std::move(data));
}

ClipU8 from_unit_tensor(const Tensor& t) {
    if (t.ndim() != 4 || t.dim(3) != 3)
        throw std::invalid_argument("clip: expected F,H,W,3 tensor, got " + tensor::shape_str(t.shape()));
    ClipU8 clip;
    clip.frames = static_cast<int>(t.dim(0));
    clip.height = static_cast<int>(t.dim(1));
    clip.width = static_cast<int>(t.dim(2));
    clip.rgb.resize(t.data().size());
    const auto& d = t.data();
    for (size_t i = 0; i < d.size(); ++i) {
        const double v = std::clamp(d[i], 0.0, 1.0);
        clip.rgb[i] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    return clip;
}

Tensor model_to_unit(const Tensor& t) {
    std::vector<double> data = t.data_copy();
    for (auto& v : data) v = std::clamp((v + 1.0) * 0.5, 0.0, 1.0);
    return Tensor::from_data(t.shape(), std::move(data));
}

Tensor unit_to_model(const Tensor& t) {
    std::vector<double> data = t.data_copy();
    for (auto& v : data) v = v * 2.0 - 1.0;
    return Tensor::from_data(t.shape(), std::move(data));
}

ClipU8 load_media(const std::filesystem::path& path) {
    if (std::filesystem::is_directory(path)) {
        const auto files = io::list_numbered_pngs(path);
        if (files.empty()) throw std::runtime_error("clip: no PNG frames in " + path.string());
        ClipU8 clip;
        for (const auto& file : files) {
            const io::ImageU8 img = io::read_png(file);
            if (clip.frames == 0) {
                clip.height = img.height;
                clip.width = img.width;
            } else if (img.height != clip.height || img.width != clip.width) {
                throw std::runtime_error("clip: frame size mismatch in " + path.string());
            }
            clip.rgb.insert(clip.rgb.end(), img.rgb.begin(), img.rgb.end());
            ++clip.frames;
        }
        return clip;
    }
    const io::GifFrames gif = io::read_gif(path);
    ClipU8 clip;
    clip.frames = static_cast<int>(gif.frames.size());
    clip.height = gif.height;
    clip.width = gif.width;
    clip.rgb.reserve(static_cast<size_t>(clip.frames) * clip.frame_bytes());
    for (const auto& f : gif.frames) clip.rgb.insert(clip.rgb.end(), f.begin(), f.end());
    return clip;
}

}  // namespace vsd::clip
