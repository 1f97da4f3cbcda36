#include "vsd/io/gif.h"

#include <cstring>
#include <stdexcept>
#include <unordered_map>

#include "vsd/io/vsdt.h"

namespace vsd::io {

namespace {

constexpr int kMaxCodeWidth = 12;
constexpr int kMaxCodes = 1 << kMaxCodeWidth;

void put_u16le(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

class BitWriter {
public:
    void write(uint32_t code, int width) {
        acc_ |= static_cast<uint64_t>(code) << bits_;
        bits_ += width;
        while (bits_ >= 8) {
            bytes_.push_back(static_cast<uint8_t>(acc_ & 0xff));
            acc_ >>= 8;
            bits_ -= 8;
        }
    }
    std::vector<uint8_t> finish() {
        if (bits_ > 0) bytes_.push_back(static_cast<uint8_t>(acc_ & 0xff));
        bits_ = 0;
        acc_ = 0;
        return std::move(bytes_);
    }

private:
    std::vector<uint8_t> bytes_;
    uint64_t acc_ = 0;
    int bits_ = 0;
};

std::vector<uint8_t> lzw_encode(const std::vector<uint8_t>& indices, int min_code_size) {
    const int clear = 1 << min_code_size;
    const int eoi = clear + 1;
    BitWriter bits;
    int width = min_code_size + 1;
    int next_code = eoi + 1;
    std::unordered_map<uint32_t, uint16_t> table;
    table.reserve(4096);

    bits.write(static_cast<uint32_t>(clear), width);
    if (indices.empty()) {
        bits.write(static_cast<uint32_t>(eoi), width);
        return bits.finish();
    }
    int prefix = indices[0];
    for (size_t i = 1; i < indices.size(); ++i) {
        const int c = indices[i];
        const uint32_t key = (static_cast<uint32_t>(prefix) << 8) | static_cast<uint32_t>(c);
        auto it = table.find(key);
        if (it != table.end()) {
            prefix = it->second;
            continue;
        }
        bits.write(static_cast<uint32_t>(prefix), width);
        if (next_code < kMaxCodes) {
            table.emplace(key, static_cast<uint16_t>(next_code));
            if (next_code == (1 << width) && width < kMaxCodeWidth) ++width;
            ++next_code;
        } else {
            bits.write(static_cast<uint32_t>(clear), width);
            table.clear();
            width = min_code_size + 1;
            next_code = eoi + 1;
        }
        prefix = c;
    }
    bits.write(static_cast<uint32_t>(prefix), width);
    bits.write(static_cast<uint32_t>(eoi), width);
    return bits.finish();
}

class BitReader {
public:
    BitReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
    int read(int width) {
        while (bits_ < width) {
            if (pos_ >= size_) return -1;
            acc_ |= static_cast<uint64_t>(data_[pos_++]) << bits_;
            bits_ += 8;
        }
        const int code = static_cast<int>(acc_ & ((1u << width) - 1));
        acc_ >>= width;
        bits_ -= width;
        return code;
    }

private:
    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
    uint64_t acc_ = 0;
    int bits_ = 0;
};

std::vector<uint8_t> lzw_decode(const std::vector<uint8_t>& data, int min_code_size,
                                size_t expected_pixels) {
    const int clear = 1 << min_code_size;
    const int eoi = clear + 1;
    BitReader bits(data.data(), data.size());

    std::vector<int> prefix(kMaxCodes, -1);
    std::vector<uint8_t> suffix(kMaxCodes, 0);
    for (int i = 0; i < clear; ++i) suffix[static_cast<size_t>(i)] = static_cast<uint8_t>(i);

    std::vector<uint8_t> out;
    out.reserve(expected_pixels);
    std::vector<uint8_t> seq;

    auto expand = [&](int code) {
        seq.clear();
        while (code >= 0) {
            seq.push_back(suffix[static_cast<size_t>(code)]);
            code = prefix[static_cast<size_t>(code)];
        }
        for (size_t i = seq.size(); i-- > 0;) out.push_back(seq[i]);
    };
    auto first_of = [&](int code) {
        while (prefix[static_cast<size_t>(code)] >= 0) code = prefix[static_cast<size_t>(code)];
        return suffix[static_cast<size_t>(code)];
    };

    int width = min_code_size + 1;
    int next_code = eoi + 1;
    int prev = -1;
    while (out.size() < expected_pixels) {
        const int code = bits.read(width);
        if (code < 0 || code == eoi) break;
        if (code == clear) {
            width = min_code_size + 1;
            next_code = eoi + 1;
            prev = -1;
            continue;
        }
        if (prev < 0) {
            if (code >= clear) throw std::runtime_error("gif: bad first LZW code");
            expand(code);
            prev = code;
            continue;
        }
        if (code < next_code && code != clear && code != eoi) {
            expand(code);
            if (next_code < kMaxCodes) {
                prefix[static_cast<size_t>(next_code)] = prev;
                suffix[static_cast<size_t>(next_code)] = first_of(code);
                ++next_code;
            }
        } else if (code == next_code && next_code < kMaxCodes) {
            prefix[static_cast<size_t>(next_code)] = prev;
            suffix[static_cast<size_t>(next_code)] = first_of(prev);
            ++next_code;
            expand(code);
        } else {
            throw std::runtime_error("gif: corrupt LZW stream");
        }
        if (next_code == (1 << width) && width < kMaxCodeWidth) ++width;
        prev = code;
    }
    return out;
}

void append_sub_blocks(std::vector<uint8_t>& out, const std::vector<uint8_t>& payload) {
    size_t pos = 0;
    while (pos < payload.size()) {
        const size_t n = std::min<size_t>(255, payload.size() - pos);
        out.push_back(static_cast<uint8_t>(n));
        out.insert(out.end(), payload.begin() + static_cast<long>(pos),
                   payload.begin() + static_cast<long>(pos + n));
        pos += n;
    }
    out.push_back(0);
}

struct ByteCursor {
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;

    uint8_t u8() {
        if (pos >= bytes.size()) throw std::runtime_error("gif: truncated file");
        return bytes[pos++];
    }
    uint16_t u16() {
        const uint16_t lo = u8();
        return static_cast<uint16_t>(lo | (static_cast<uint16_t>(u8()) << 8));
    }
    void skip(size_t n) {
        if (pos + n > bytes.size()) throw std::runtime_error("gif: truncated file");
        pos += n;
    }
    std::vector<uint8_t> sub_blocks() {
        std::vector<uint8_t> data;
        while (true) {
            const uint8_t n = u8();
            if (n == 0) break;
            if (pos + n > bytes.size()) throw std::runtime_error("gif: truncated sub-block");
            data.insert(data.end(), bytes.begin() + static_cast<long>(pos),
                        bytes.begin() + static_cast<long>(pos + n));
            pos += n;
        }
        return data;
    }
    void skip_sub_blocks() {
        while (true) {
            const uint8_t n = u8();
            if (n == 0) break;
            skip(n);
        }
    }
};

}  // namespace

uint8_t palette_index_332(uint8_t r, uint8_t g, uint8_t b) {
    const int ri = (r * 7 + 127) / 255;
    const int gi = (g * 7 + 127) / 255;
    const int bi = (b * 3 + 127) / 255;
    return static_cast<uint8_t>((ri << 5) | (gi << 2) | bi);
}

void palette_color_332(uint8_t index, uint8_t* rgb_out) {
    rgb_out[0] = static_cast<uint8_t>(((index >> 5) & 7) * 255 / 7);
    rgb_out[1] = static_cast<uint8_t>(((index >> 2) & 7) * 255 / 7);
    rgb_out[2] = static_cast<uint8_t>((index & 3) * 255 / 3);
}

std::vector<uint8_t> encode_gif(const GifFrames& frames, int default_delay_cs) {
    if (frames.frames.empty()) throw std::invalid_argument("gif: no frames to encode");
    const size_t frame_bytes = static_cast<size_t>(frames.width) * frames.height * 3;
    for (const auto& f : frames.frames)
        if (f.size() != frame_bytes) throw std::invalid_argument("gif: frame size mismatch");

    std::vector<uint8_t> out;
    out.insert(out.end(), {'G', 'I', 'F', '8', '9', 'a'});
    put_u16le(out, static_cast<uint16_t>(frames.width));
    put_u16le(out, static_cast<uint16_t>(frames.height));
    out.push_back(0xF7);  // global table, 8-bit color resolution, 256 entries
    out.push_back(0);     // background index
    out.push_back(0);     // aspect
    for (int i = 0; i < 256; ++i) {
        uint8_t rgb[3];
        palette_color_332(static_cast<uint8_t>(i), rgb);
        out.insert(out.end(), rgb, rgb + 3);
    }

    // NETSCAPE loop-forever extension
    out.insert(out.end(), {0x21, 0xFF, 0x0B});
    const char* app = "NETSCAPE2.0";
    out.insert(out.end(), app, app + 11);
    out.insert(out.end(), {0x03, 0x01, 0x00, 0x00, 0x00});

    const size_t pixels = static_cast<size_t>(frames.width) * frames.height;
    for (size_t fi = 0; fi < frames.frames.size(); ++fi) {
        const int delay = fi < frames.delays_cs.size() ? frames.delays_cs[fi] : default_delay_cs;
        out.insert(out.end(), {0x21, 0xF9, 0x04, 0x04});  // GCE, disposal "leave"
        put_u16le(out, static_cast<uint16_t>(delay));
        out.push_back(0);  // transparent index (unused)
        out.push_back(0);  // block terminator

        out.push_back(0x2C);  // image descriptor
        put_u16le(out, 0);
        put_u16le(out, 0);
        put_u16le(out, static_cast<uint16_t>(frames.width));
        put_u16le(out, static_cast<uint16_t>(frames.height));
        out.push_back(0);  // no local table, not interlaced

        std::vector<uint8_t> indices(pixels);
        const uint8_t* src = frames.frames[fi].data();
        for (size_t p = 0; p < pixels; ++p)
            indices[p] = palette_index_332(src[p * 3], src[p * 3 + 1], src[p * 3 + 2]);
        out.push_back(8);  // LZW minimum code size
        append_sub_blocks(out, lzw_encode(indices, 8));
    }
    out.push_back(0x3B);
    return out;
}

GifFrames decode_gif(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 13 || std::memcmp(bytes.data(), "GIF8", 4) != 0)
        throw std::runtime_error("gif: bad signature");
    ByteCursor cur{bytes, 6};

    GifFrames result;
    result.width = cur.u16();
    result.height = cur.u16();
    const uint8_t packed = cur.u8();
    const uint8_t bg_index = cur.u8();
    cur.u8();  // aspect

    std::vector<uint8_t> global_palette;
    if (packed & 0x80) {
        const size_t n = size_t{2} << (packed & 0x07);
        global_palette.resize(n * 3);
        for (auto& v : global_palette) v = cur.u8();
    }

    const size_t pixels = static_cast<size_t>(result.width) * result.height;
    std::vector<uint8_t> canvas(pixels * 3, 0);
    if (!global_palette.empty() && static_cast<size_t>(bg_index) * 3 + 2 < global_palette.size()) {
        for (size_t p = 0; p < pixels; ++p)
            std::memcpy(canvas.data() + p * 3, global_palette.data() + bg_index * 3, 3);
    }

    int transparent_index = -1;
    int disposal = 0;
    int delay_cs = 0;

    while (true) {
        const uint8_t block = cur.u8();
        if (block == 0x3B) break;  // trailer
        if (block == 0x21) {       // extension
            const uint8_t label = cur.u8();
            if (label == 0xF9) {
                const uint8_t size = cur.u8();
                const uint8_t flags = cur.u8();
                delay_cs = cur.u16();
                const uint8_t tindex = cur.u8();
                if (size > 4) cur.skip(size - 4);
                cur.u8();  // terminator
                disposal = (flags >> 2) & 0x07;
                transparent_index = (flags & 0x01) ? tindex : -1;
            } else {
                cur.skip_sub_blocks();
            }
            continue;
        }
        if (block != 0x2C) throw std::runtime_error("gif: unexpected block 0x" + std::to_string(block));

        const int left = cur.u16();
        const int top = cur.u16();
        const int w = cur.u16();
        const int h = cur.u16();
        const uint8_t img_packed = cur.u8();
        std::vector<uint8_t> local_palette;
        if (img_packed & 0x80) {
            const size_t n = size_t{2} << (img_packed & 0x07);
            local_palette.resize(n * 3);
            for (auto& v : local_palette) v = cur.u8();
        }
        const std::vector<uint8_t>& palette = local_palette.empty() ? global_palette : local_palette;
        if (palette.empty()) throw std::runtime_error("gif: no palette for image");

        const int min_code_size = cur.u8();
        const std::vector<uint8_t> compressed = cur.sub_blocks();
        const std::vector<uint8_t> indices =
            lzw_decode(compressed, min_code_size, static_cast<size_t>(w) * h);
        if (indices.size() < static_cast<size_t>(w) * h)
            throw std::runtime_error("gif: short image data");

        std::vector<uint8_t> saved;
        if (disposal == 3) saved = canvas;

        // interlaced images deliver rows in four passes
        std::vector<int> row_order(static_cast<size_t>(h));
        if (img_packed & 0x40) {
            int r = 0;
            for (int y = 0; y < h; y += 8) row_order[static_cast<size_t>(r++)] = y;
            for (int y = 4; y < h; y += 8) row_order[static_cast<size_t>(r++)] = y;
            for (int y = 2; y < h; y += 4) row_order[static_cast<size_t>(r++)] = y;
            for (int y = 1; y < h; y += 2) row_order[static_cast<size_t>(r++)] = y;
        } else {
            for (int y = 0; y < h; ++y) row_order[static_cast<size_t>(y)] = y;
        }

        for (int r = 0; r < h; ++r) {
            const int y = row_order[static_cast<size_t>(r)] + top;
            if (y < 0 || y >= result.height) continue;
            for (int x = 0; x < w; ++x) {
                const int cx = left + x;
                if (cx < 0 || cx >= result.width) continue;
                const int idx = indices[static_cast<size_t>(r) * w + x];
                if (idx == transparent_index) continue;
                if (static_cast<size_t>(idx) * 3 + 2 >= palette.size()) continue;
                std::memcpy(canvas.data() + (static_cast<size_t>(y) * result.width + cx) * 3,
                            palette.data() + static_cast<size_t>(idx) * 3, 3);
            }
        }

        result.frames.push_back(canvas);
        result.delays_cs.push_back(delay_cs);

        if (disposal == 2) {
            uint8_t bg[3] = {0, 0, 0};
            if (!global_palette.empty() && static_cast<size_t>(bg_index) * 3 + 2 < global_palette.size())
                std::memcpy(bg, global_palette.data() + bg_index * 3, 3);
            for (int y = top; y < top + h && y < result.height; ++y)
                for (int x = left; x < left + w && x < result.width; ++x)
                    if (y >= 0 && x >= 0)
                        std::memcpy(canvas.data() + (static_cast<size_t>(y) * result.width + x) * 3, bg, 3);
        } else if (disposal == 3) {
            canvas = std::move(saved);
        }
        transparent_index = -1;
        disposal = 0;
    }
    if (result.frames.empty()) throw std::runtime_error("gif: no image data");
    return result;
}

void write_gif(const std::filesystem::path& path, const GifFrames& frames, int default_delay_cs) {
    write_file_bytes(path, encode_gif(frames, default_delay_cs));
}

GifFrames read_gif(const std::filesystem::path& path) { return decode_gif(read_file_bytes(path)); }

}  // namespace vsd::io
