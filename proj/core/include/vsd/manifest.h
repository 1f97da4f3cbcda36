#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vsd::manifest {

// One dataset item: JSON Lines on disk, one object per line, UTF-8.
// Keys: id, path, frame_count, width, height, domain, caption,
// trigger_words, ocr_text (optional), split.
struct Record {
    std::string id;
    std::string path;  // media file relative to the manifest's directory
    int frame_count = 0;
    int width = 0;
    int height = 0;
    std::string domain;  // "real" or "cartoon"
    std::string caption;
    std::vector<std::string> trigger_words;
    std::optional<std::string> ocr_text;
    std::string split = "unassigned";  // train | test-r | test-c | unassigned
};

std::string to_json_line(const Record& r);
Record from_json_line(const std::string& line);

std::vector<Record> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<Record>& records);

// "[Domain] \t [Description]" form used for conditioning
std::string training_caption(const Record& r);

}  // namespace vsd::manifest
