#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vsd/tensor.h"

namespace vsd::io {

// Tensor container used repo-wide: magic "VSDT", u32 version, u32 ndim,
// extents as u64 little-endian, then the payload as little-endian 64-bit
// floats, row-major.
inline constexpr uint32_t kVsdtVersion = 1;

std::vector<uint8_t> encode_vsdt(const tensor::Tensor& t);
tensor::Tensor decode_vsdt(const uint8_t* data, size_t size, size_t* consumed = nullptr);

void write_vsdt(const std::filesystem::path& path, const tensor::Tensor& t);
tensor::Tensor read_vsdt(const std::filesystem::path& path);

// little-endian scalar helpers shared by the binary writers
void put_u32le(std::vector<uint8_t>& out, uint32_t v);
void put_u64le(std::vector<uint8_t>& out, uint64_t v);
void put_f64le(std::vector<uint8_t>& out, double v);
uint32_t get_u32le(const uint8_t* p);
uint64_t get_u64le(const uint8_t* p);
double get_f64le(const uint8_t* p);

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);

}  // namespace vsd::io
