#include "vsd/io/vsdt.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace vsd::io {

namespace {
constexpr char kMagic[4] = {'V', 'S', 'D', 'T'};
}

void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64le(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64le(std::vector<uint8_t>& out, double v) { put_u64le(out, std::bit_cast<uint64_t>(v)); }

uint32_t get_u32le(const uint8_t* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    return v;
}

uint64_t get_u64le(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

double get_f64le(const uint8_t* p) { return std::bit_cast<double>(get_u64le(p)); }

std::vector<uint8_t> encode_vsdt(const tensor::Tensor& t) {
    std::vector<uint8_t> out;
    out.reserve(16 + t.shape().size() * 8 + static_cast<size_t>(t.numel()) * 8);
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32le(out, kVsdtVersion);
    put_u32le(out, static_cast<uint32_t>(t.ndim()));
    for (int64_t d : t.shape()) put_u64le(out, static_cast<uint64_t>(d));
    for (double v : t.data()) put_f64le(out, v);
    return out;
}

tensor::Tensor decode_vsdt(const uint8_t* data, size_t size, size_t* consumed) {
    if (size < 12 || std::memcmp(data, kMagic, 4) != 0)
        throw std::runtime_error("vsdt: bad magic");
    const uint32_t version = get_u32le(data + 4);
    if (version != kVsdtVersion)
        throw std::runtime_error("vsdt: unsupported version " + std::to_string(version));
    const uint32_t ndim = get_u32le(data + 8);
    size_t off = 12;
    if (size < off + static_cast<size_t>(ndim) * 8) throw std::runtime_error("vsdt: truncated header");
    tensor::Shape shape(ndim);
    uint64_t count = 1;
    for (uint32_t i = 0; i < ndim; ++i) {
        const uint64_t d = get_u64le(data + off);
        off += 8;
        shape[i] = static_cast<int64_t>(d);
        count *= d;
    }
    if (size < off + count * 8) throw std::runtime_error("vsdt: truncated payload");
    std::vector<double> payload(count);
    for (uint64_t i = 0; i < count; ++i) {
        payload[i] = get_f64le(data + off);
        off += 8;
    }
    if (consumed) *consumed = off;
    return tensor::Tensor::from_data(std::move(shape), std::move(payload));
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("io: cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("io: cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("io: short write to " + path.string());
}

void write_vsdt(const std::filesystem::path& path, const tensor::Tensor& t) {
    write_file_bytes(path, encode_vsdt(t));
}

tensor::Tensor read_vsdt(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return decode_vsdt(bytes.data(), bytes.size());
}

}  // namespace vsd::io
