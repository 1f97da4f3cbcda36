#pragma once

#include <filesystem>
#include <string>

#include "vsd/nn.h"

namespace vsd::io {

// Checkpoint file: u32 header length, JSON header {"config", "tensors":
// [{"name","offset","size"}...]}, then the named tensors as concatenated
// VSDT records. Offsets are relative to the end of the header.
struct Checkpoint {
    std::string config_json;  // config echo, serialized JSON object
    nn::ParamStore params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vsd::io
