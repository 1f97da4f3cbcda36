#include "vsd/manifest.h"

#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace vsd::manifest {

using nlohmann::json;

std::string to_json_line(const Record& r) {
    json j;
    j["id"] = r.id;
    j["path"] = r.path;
    j["frame_count"] = r.frame_count;
    j["width"] = r.width;
    j["height"] = r.height;
    j["domain"] = r.domain;
    j["caption"] = r.caption;
    j["trigger_words"] = r.trigger_words;
    if (r.ocr_text) j["ocr_text"] = *r.ocr_text;
    j["split"] = r.split;
    return j.dump();
}

Record from_json_line(const std::string& line) {
    const json j = json::parse(line);
    Record r;
    r.id = j.at("id").get<std::string>();
    r.path = j.at("path").get<std::string>();
    r.frame_count = j.at("frame_count").get<int>();
    r.width = j.at("width").get<int>();
    r.height = j.at("height").get<int>();
    r.domain = j.at("domain").get<std::string>();
    r.caption = j.at("caption").get<std::string>();
    r.trigger_words = j.at("trigger_words").get<std::vector<std::string>>();
    if (j.contains("ocr_text")) r.ocr_text = j.at("ocr_text").get<std::string>();
    r.split = j.value("split", "unassigned");
    return r;
}

std::vector<Record> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest: cannot open " + path.string());
    std::vector<Record> records;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            records.push_back(from_json_line(line));
        } catch (const std::exception& e) {
            throw std::runtime_error("manifest: " + path.string() + ":" + std::to_string(lineno) +
                                     ": " + e.what());
        }
    }
    return records;
}

void write_manifest(const std::filesystem::path& path, const std::vector<Record>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("manifest: cannot write " + path.string());
    for (const auto& r : records) out << to_json_line(r) << "\n";
    if (!out) throw std::runtime_error("manifest: short write to " + path.string());
}

std::string training_caption(const Record& r) { return r.domain + "\t" + r.caption; }

}  // namespace vsd::manifest
