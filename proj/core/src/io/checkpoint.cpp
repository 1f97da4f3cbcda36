#include "vsd/io/checkpoint.h"

#include <json.hpp>
#include <stdexcept>

#include "vsd/io/vsdt.h"

namespace vsd::io {

using nlohmann::json;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    json tensors = json::array();
    std::vector<uint8_t> blob;
    for (const auto& [name, t] : ckpt.params) {
        const std::vector<uint8_t> rec = encode_vsdt(t);
        tensors.push_back({{"name", name}, {"offset", blob.size()}, {"size", rec.size()}});
        blob.insert(blob.end(), rec.begin(), rec.end());
    }
    json header;
    header["format"] = "vsd-checkpoint";
    header["version"] = 1;
    header["config"] = ckpt.config_json.empty() ? json::object() : json::parse(ckpt.config_json);
    header["tensors"] = tensors;
    const std::string header_str = header.dump();

    std::vector<uint8_t> out;
    put_u32le(out, static_cast<uint32_t>(header_str.size()));
    out.insert(out.end(), header_str.begin(), header_str.end());
    out.insert(out.end(), blob.begin(), blob.end());
    write_file_bytes(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::vector<uint8_t> bytes = read_file_bytes(path);
    if (bytes.size() < 4) throw std::runtime_error("checkpoint: truncated " + path.string());
    const uint32_t header_len = get_u32le(bytes.data());
    if (bytes.size() < 4 + header_len) throw std::runtime_error("checkpoint: truncated header");
    const json header = json::parse(std::string(bytes.begin() + 4, bytes.begin() + 4 + header_len));
    if (header.value("format", "") != "vsd-checkpoint")
        throw std::runtime_error("checkpoint: unrecognized format in " + path.string());

    Checkpoint ckpt;
    ckpt.config_json = header.at("config").dump();
    const size_t base = 4 + header_len;
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const size_t offset = entry.at("offset").get<size_t>();
        const size_t size = entry.at("size").get<size_t>();
        if (base + offset + size > bytes.size())
            throw std::runtime_error("checkpoint: tensor '" + name + "' out of bounds");
        ckpt.params.emplace(name, decode_vsdt(bytes.data() + base + offset, size));
    }
    return ckpt;
}

}  // namespace vsd::io
