#include "vsd/io/png.h"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace vsd::io {

ImageU8 read_png(const std::filesystem::path& path) {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!fp) throw std::runtime_error("png: cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png: allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png: allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png: failed to decode " + path.string());
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_expand(png);               // palettes and low bit depths to 8-bit
    png_set_strip_16(png);             // 16-bit to 8-bit
    png_set_strip_alpha(png);          // drop alpha
    png_set_gray_to_rgb(png);          // grayscale to RGB
    png_read_update_info(png, info);

    ImageU8 img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    const size_t row_bytes = png_get_rowbytes(png, info);
    if (row_bytes != static_cast<size_t>(img.width) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png: unexpected row layout in " + path.string());
    }
    img.rgb.resize(static_cast<size_t>(img.width) * img.height * 3);
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y) rows[static_cast<size_t>(y)] = img.rgb.data() + static_cast<size_t>(y) * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::filesystem::path& path, const ImageU8& image) {
    if (image.rgb.size() != static_cast<size_t>(image.width) * image.height * 3)
        throw std::invalid_argument("png: image buffer size mismatch");
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw std::runtime_error("png: cannot write " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png: allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png: allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png: failed to encode " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(image.height));
    for (int y = 0; y < image.height; ++y)
        rows[static_cast<size_t>(y)] =
            const_cast<png_bytep>(image.rgb.data() + static_cast<size_t>(y) * image.width * 3);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::vector<std::filesystem::path> list_numbered_pngs(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png") files.push_back(entry.path());
    }
    auto number_of = [](const std::filesystem::path& p) -> long long {
        const std::string stem = p.stem().string();
        size_t i = 0;
        while (i < stem.size() && !std::isdigit(static_cast<unsigned char>(stem[i]))) ++i;
        if (i == stem.size()) return -1;
        return std::stoll(stem.substr(i));
    };
    std::sort(files.begin(), files.end(), [&](const auto& a, const auto& b) {
        const long long na = number_of(a), nb = number_of(b);
        if (na != nb) return na < nb;
        return a.filename().string() < b.filename().string();
    });
    return files;
}

}  // namespace vsd::io
