#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vsd/clip.h"
#include "vsd/manifest.h"

namespace vsd::synthgen {

inline constexpr int kFrameCount = 8;
inline constexpr int kFrameSize = 32;

enum class SubjectShape { circle, square, triangle, star };
enum class MotionKind { translate, bounce, wave, rotate, blink };

const char* to_string(SubjectShape s);
const char* to_string(MotionKind m);
const char* motion_phrase(MotionKind m);

struct SceneSpec {
    SubjectShape shape = SubjectShape::circle;
    MotionKind motion = MotionKind::translate;
    int color_index = 0;       // palette below
    int background_index = 0;  // gradient pair
    std::string domain = "cartoon";  // or "real"
};

int color_count();
int background_count();
const char* color_name(int index);
void color_rgb(int index, uint8_t rgb_out[3]);

struct GeneratedClip {
    clip::ClipU8 media;
    std::string caption;  // "<domain>\t<description>"
    std::string description;
    std::vector<std::string> trigger_words;
};

// 8 frames of 32x32 RGB, deterministic per (spec, seed). Subjects always stay
// inside the frame and move at least one pixel between consecutive frames.
GeneratedClip gen_clip(const SceneSpec& spec, uint64_t seed);

struct GenDatasetResult {
    std::filesystem::path manifest_path;
    std::vector<manifest::Record> records;
};

// n clips balanced across domains and motions, written as GIFs plus a
// JSON-Lines manifest under out_dir.
GenDatasetResult gen_dataset(int n, uint64_t seed, const std::filesystem::path& out_dir);

}  // namespace vsd::synthgen
