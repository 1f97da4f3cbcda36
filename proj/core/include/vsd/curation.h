#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vsd/clip.h"
#include "vsd/manifest.h"

namespace vsd::curation {

struct FilterOptions {
    double entropy_bits = 3.0;  // drop below
    double max_aspect = 2.0;    // keep up to and including
    int max_ocr_chars = 30;     // keep up to and including, counted in code points
    int top_k_trigger_words = 500;
};

struct FilterDecision {
    bool keep = true;
    std::string rule;  // empty when kept with no caveat
    double score = 0.0;
};

// Shannon entropy in bits of the 256-bin grayscale histogram of one frame.
double frame_entropy_bits(const uint8_t* rgb, size_t pixels);
double first_frame_entropy_bits(const clip::ClipU8& media);

FilterDecision entropy_filter(const clip::ClipU8& media, double threshold_bits = 3.0);
FilterDecision aspect_filter(int width, int height, double max_ratio = 2.0);
FilterDecision ocr_length_filter(const manifest::Record& record, int max_chars = 30);

// Ping-pong frame extension without repeated endpoints; n >= target returns
// the first target frames.
std::vector<int> flip_pad_indices(int n, int target = 8);
clip::ClipU8 flip_pad(const clip::ClipU8& media, int target = 8);

struct RecordDecision {
    std::string id;
    bool kept = true;
    std::string dropped_by;  // rule name
    double entropy_bits = 0.0;
    double aspect_ratio = 0.0;
    int ocr_chars = 0;
};

struct FilterReport {
    int64_t input_count = 0;
    int64_t kept_count = 0;
    std::map<std::string, int64_t> dropped_by_rule;
    std::vector<RecordDecision> decisions;

    std::string to_json() const;
};

struct CurationResult {
    std::vector<manifest::Record> kept;
    FilterReport report;
};

// Applies the three filters against decoded media, then assigns splits.
CurationResult curate(const std::vector<manifest::Record>& records,
                      const std::filesystem::path& media_root, const FilterOptions& options);

// Per domain, ranks trigger words by record frequency and reserves the first
// record (by id order) of each of the top-k words for the domain test split.
void split_dataset(std::vector<manifest::Record>& records, int top_k);

struct ManifestStats {
    int64_t record_count = 0;
    double multi_frame_ratio = 0.0;
    double ave_frames_multi = 0.0;  // over multi-frame items only
    double cartoon_ratio = 0.0;
    double optical_character_ratio = 0.0;
    double ave_description_tokens = 0.0;
    double ave_trigger_words = 0.0;
    std::vector<std::pair<std::string, int64_t>> top_caption_words;   // descending
    std::vector<std::pair<std::string, int64_t>> top_trigger_words;

    std::string to_json() const;
};

ManifestStats manifest_stats(const std::vector<manifest::Record>& records, int top_words = 35);

}  // namespace vsd::curation
