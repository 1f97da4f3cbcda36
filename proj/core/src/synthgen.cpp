#include "vsd/synthgen.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vsd/io/gif.h"
#include "vsd/rng.h"

namespace vsd::synthgen {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Rgb {
    uint8_t r, g, b;
};

constexpr Rgb kColors[] = {
    {220, 40, 40},    // red
    {40, 180, 60},    // green
    {60, 100, 230},   // blue
    {235, 205, 40},   // yellow
    {205, 60, 205},   // magenta
    {60, 205, 205},   // cyan
    {240, 145, 40},   // orange
    {245, 245, 245},  // white
};
constexpr const char* kColorNames[] = {"red",     "green", "blue",   "yellow",
                                       "magenta", "cyan",  "orange", "white"};

struct GradientPair {
    Rgb top, bottom;
};
// wide-luma gradients so the first-frame histogram clears the entropy filter
// with margin even after GIF palette quantization
constexpr GradientPair kBackgrounds[] = {
    {{10, 14, 40}, {190, 210, 250}},
    {{46, 10, 26}, {250, 185, 205}},
    {{12, 42, 18}, {195, 250, 205}},
    {{34, 26, 12}, {250, 230, 190}},
};

// inside test for a subject at origin, scaled so s is the nominal radius
bool inside_shape(SubjectShape shape, double dx, double dy, double s, double angle) {
    switch (shape) {
        case SubjectShape::circle:
            return dx * dx + dy * dy <= s * s;
        case SubjectShape::square: {
            const double half = s * 0.85;
            return std::abs(dx) <= half && std::abs(dy) <= half;
        }
        case SubjectShape::triangle: {
            // equilateral, apex up
            const double x0 = 0.0, y0 = -s;
            const double x1 = -0.866 * s, y1 = 0.5 * s;
            const double x2 = 0.866 * s, y2 = 0.5 * s;
            auto side = [&](double ax, double ay, double bx, double by) {
                return (bx - ax) * (dy - ay) - (by - ay) * (dx - ax);
            };
            const double d0 = side(x0, y0, x1, y1);
            const double d1 = side(x1, y1, x2, y2);
            const double d2 = side(x2, y2, x0, y0);
            const bool has_neg = d0 < 0 || d1 < 0 || d2 < 0;
            const bool has_pos = d0 > 0 || d1 > 0 || d2 > 0;
            return !(has_neg && has_pos);
        }
        case SubjectShape::star: {
            const double rad = std::sqrt(dx * dx + dy * dy);
            if (rad > s) return false;
            const double phi = std::atan2(dy, dx) - angle;
            // triangular spike profile with five points
            double frac = phi * 5.0 / (2.0 * kPi);
            frac -= std::floor(frac);
            const double spike = 1.0 - 2.0 * std::abs(frac - 0.5);  // 1 at point, 0 between
            const double limit = s * (0.45 + 0.55 * spike);
            return rad <= limit;
        }
    }
    return false;
}

struct Trajectory {
    double cx[kFrameCount];
    double cy[kFrameCount];
    bool visible[kFrameCount];
};

int triangle_wave(int t, int period) {  // 0..period/2..0
    const int j = t % period;
    return j <= period / 2 ? j : period - j;
}

Trajectory make_trajectory(MotionKind motion, double radius, rng::Prng& prng) {
    Trajectory traj{};
    std::fill(std::begin(traj.visible), std::end(traj.visible), true);
    const double lo = radius + 1.5;
    const double hi = kFrameSize - 1 - radius - 1.5;
    switch (motion) {
        case MotionKind::translate: {
            // whole-pixel velocity and an integer start keep the rendered
            // subject an exact translate of itself frame to frame
            const double vx = 2.0;
            const bool rightward = prng.uniform() < 0.5;
            const double start = rightward ? std::ceil(lo) : std::floor(hi);
            const double cy = std::floor(prng.uniform(lo, hi));
            for (int t = 0; t < kFrameCount; ++t) {
                traj.cx[t] = start + (rightward ? 1.0 : -1.0) * vx * t;
                traj.cy[t] = cy;
            }
            break;
        }
        case MotionKind::bounce: {
            const double cx = prng.uniform(lo, hi);
            const double base = hi;
            for (int t = 0; t < kFrameCount; ++t) {
                traj.cx[t] = cx;
                traj.cy[t] = base - 3.0 * triangle_wave(t, 6);
            }
            break;
        }
        case MotionKind::wave: {
            const double cy = prng.uniform(lo, hi);
            const double base = lo;
            for (int t = 0; t < kFrameCount; ++t) {
                traj.cx[t] = base + 3.0 * triangle_wave(t, 6);
                traj.cy[t] = cy;
            }
            break;
        }
        case MotionKind::rotate: {
            const double orbit = std::min(8.0, 13.0 - radius);
            const double phase = prng.uniform(0.0, 2.0 * kPi);
            for (int t = 0; t < kFrameCount; ++t) {
                const double theta = phase + 2.0 * kPi * t / kFrameCount;
                traj.cx[t] = kFrameSize / 2.0 + orbit * std::cos(theta);
                traj.cy[t] = kFrameSize / 2.0 + orbit * std::sin(theta);
            }
            break;
        }
        case MotionKind::blink: {
            const double cx = prng.uniform(lo, hi);
            const double cy = prng.uniform(lo, hi);
            for (int t = 0; t < kFrameCount; ++t) {
                traj.cx[t] = cx;
                traj.cy[t] = cy;
                traj.visible[t] = t % 2 == 0;
            }
            break;
        }
    }
    for (int t = 0; t < kFrameCount; ++t) {
        traj.cx[t] = std::clamp(traj.cx[t], lo, hi);
        traj.cy[t] = std::clamp(traj.cy[t], lo, hi);
    }
    return traj;
}

}  // namespace

const char* to_string(SubjectShape s) {
    switch (s) {
        case SubjectShape::circle: return "circle";
        case SubjectShape::square: return "square";
        case SubjectShape::triangle: return "triangle";
        case SubjectShape::star: return "star";
    }
    return "?";
}

const char* to_string(MotionKind m) {
    switch (m) {
        case MotionKind::translate: return "slide";
        case MotionKind::bounce: return "bounce";
        case MotionKind::wave: return "wave";
        case MotionKind::rotate: return "orbit";
        case MotionKind::blink: return "blink";
    }
    return "?";
}

const char* motion_phrase(MotionKind m) {
    switch (m) {
        case MotionKind::translate: return "sliding across";
        case MotionKind::bounce: return "bouncing up and down";
        case MotionKind::wave: return "waving side to side";
        case MotionKind::rotate: return "circling around";
        case MotionKind::blink: return "blinking in place";
    }
    return "?";
}

int color_count() { return static_cast<int>(std::size(kColors)); }
int background_count() { return static_cast<int>(std::size(kBackgrounds)); }
const char* color_name(int index) { return kColorNames[index]; }

void color_rgb(int index, uint8_t rgb_out[3]) {
    rgb_out[0] = kColors[index].r;
    rgb_out[1] = kColors[index].g;
    rgb_out[2] = kColors[index].b;
}

GeneratedClip gen_clip(const SceneSpec& spec, uint64_t seed) {
    if (spec.color_index < 0 || spec.color_index >= color_count())
        throw std::invalid_argument("synthgen: bad color index");
    if (spec.background_index < 0 || spec.background_index >= background_count())
        throw std::invalid_argument("synthgen: bad background index");
    if (spec.domain != "cartoon" && spec.domain != "real")
        throw std::invalid_argument("synthgen: domain must be cartoon or real");

    rng::Prng prng(rng::mix(seed, rng::hash_str(spec.domain) ^
                                       static_cast<uint64_t>(spec.color_index * 131 +
                                                             spec.background_index * 17)));
    const double radius = prng.uniform(4.0, 6.5);
    if (radius * 2.0 + 4.0 > kFrameSize) throw std::invalid_argument("synthgen: subject too large");
    const Trajectory traj = make_trajectory(spec.motion, radius, prng);
    const bool cartoon = spec.domain == "cartoon";
    const Rgb color = kColors[spec.color_index];
    const GradientPair bg = kBackgrounds[spec.background_index];

    // the background is rendered once and shared by all frames
    std::vector<uint8_t> background(static_cast<size_t>(kFrameSize) * kFrameSize * 3);
    rng::Prng noise(rng::mix(seed, 0x626b6764ULL));
    for (int y = 0; y < kFrameSize; ++y) {
        for (int x = 0; x < kFrameSize; ++x) {
            // mostly vertical with a diagonal component; the blend spreads the
            // quantized histogram across more luma bins
            const double f = 0.75 * y / (kFrameSize - 1.0) + 0.25 * x / (kFrameSize - 1.0);
            double r = bg.top.r + f * (bg.bottom.r - bg.top.r);
            double g = bg.top.g + f * (bg.bottom.g - bg.top.g);
            double b = bg.top.b + f * (bg.bottom.b - bg.top.b);
            // texture spreads the luma histogram across quantization bins:
            // an ordered dither for the flat cartoon look, film-like noise
            // for the real domain
            static constexpr int kBayer[4][4] = {
                {0, 8, 2, 10}, {12, 4, 14, 6}, {3, 11, 1, 9}, {15, 7, 13, 5}};
            if (cartoon) {
                const double jitter = (kBayer[y % 4][x % 4] / 15.0 - 0.5) * 24.0;
                r += jitter;
                g += jitter;
                b += jitter;
            } else {
                r += noise.uniform(-18.0, 18.0);
                g += noise.uniform(-18.0, 18.0);
                b += noise.uniform(-18.0, 18.0);
            }
            uint8_t* px = background.data() + (static_cast<size_t>(y) * kFrameSize + x) * 3;
            px[0] = static_cast<uint8_t>(std::clamp(r, 0.0, 255.0));
            px[1] = static_cast<uint8_t>(std::clamp(g, 0.0, 255.0));
            px[2] = static_cast<uint8_t>(std::clamp(b, 0.0, 255.0));
        }
    }

    GeneratedClip out;
    out.media.frames = kFrameCount;
    out.media.height = kFrameSize;
    out.media.width = kFrameSize;
    out.media.rgb.resize(static_cast<size_t>(kFrameCount) * kFrameSize * kFrameSize * 3);

    const double star_angle = prng.uniform(0.0, 2.0 * kPi);
    for (int t = 0; t < kFrameCount; ++t) {
        uint8_t* frame = out.media.frame(t);
        std::copy(background.begin(), background.end(), frame);
        if (!traj.visible[t]) continue;
        const double cx = traj.cx[t], cy = traj.cy[t];
        for (int y = 0; y < kFrameSize; ++y) {
            for (int x = 0; x < kFrameSize; ++x) {
                const double dx = x - cx, dy = y - cy;
                const bool body = inside_shape(spec.shape, dx, dy, radius, star_angle);
                uint8_t* px = frame + (static_cast<size_t>(y) * kFrameSize + x) * 3;
                if (body) {
                    double shade = 1.0;
                    if (!cartoon) {
                        const double d = std::sqrt(dx * dx + dy * dy) / (radius + 1e-9);
                        shade = 1.1 - 0.35 * d;  // soft radial highlight
                    }
                    px[0] = static_cast<uint8_t>(std::clamp(color.r * shade, 0.0, 255.0));
                    px[1] = static_cast<uint8_t>(std::clamp(color.g * shade, 0.0, 255.0));
                    px[2] = static_cast<uint8_t>(std::clamp(color.b * shade, 0.0, 255.0));
                } else if (cartoon && inside_shape(spec.shape, dx, dy, radius + 1.4, star_angle)) {
                    px[0] = px[1] = px[2] = 10;  // outline
                }
            }
        }
    }

    out.description = std::string("a ") + color_name(spec.color_index) + " " +
                      to_string(spec.shape) + " " + motion_phrase(spec.motion);
    out.caption = spec.domain + "\t" + out.description;
    out.trigger_words = {color_name(spec.color_index), to_string(spec.shape),
                         to_string(spec.motion)};
    return out;
}

GenDatasetResult gen_dataset(int n, uint64_t seed, const std::filesystem::path& out_dir) {
    if (n < 1) throw std::invalid_argument("gen_dataset: n must be >= 1");
    std::filesystem::create_directories(out_dir / "media");

    GenDatasetResult result;
    rng::Prng prng(rng::mix(seed, 0x6a656e64ULL));
    for (int i = 0; i < n; ++i) {
        SceneSpec spec;
        spec.domain = i % 2 == 0 ? "real" : "cartoon";
        spec.motion = static_cast<MotionKind>((i / 2) % 5);
        spec.shape = static_cast<SubjectShape>(prng.below(4));
        spec.color_index = static_cast<int>(prng.below(static_cast<uint64_t>(color_count())));
        spec.background_index = static_cast<int>(prng.below(static_cast<uint64_t>(background_count())));

        const GeneratedClip clip = gen_clip(spec, rng::mix(seed, static_cast<uint64_t>(i)));
        char name[32];
        std::snprintf(name, sizeof(name), "clip_%05d", i);
        const std::string gif_rel = std::string("media/") + name + ".gif";

        io::GifFrames frames;
        frames.width = clip.media.width;
        frames.height = clip.media.height;
        for (int f = 0; f < clip.media.frames; ++f)
            frames.frames.emplace_back(clip.media.frame(f),
                                       clip.media.frame(f) + clip.media.frame_bytes());
        io::write_gif(out_dir / gif_rel, frames, 12);

        manifest::Record record;
        record.id = name;
        record.path = gif_rel;
        record.frame_count = clip.media.frames;
        record.width = clip.media.width;
        record.height = clip.media.height;
        record.domain = spec.domain;
        record.caption = clip.description;
        record.trigger_words = clip.trigger_words;
        record.ocr_text = "";
        result.records.push_back(std::move(record));
    }
    result.manifest_path = out_dir / "manifest.jsonl";
    manifest::write_manifest(result.manifest_path, result.records);
    return result;
}

}  // namespace vsd::synthgen
