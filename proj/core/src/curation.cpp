#include "vsd/curation.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>

namespace vsd::curation {

using nlohmann::json;

namespace {

// counts UTF-8 code points; malformed bytes count as one each
int utf8_length(const std::string& s) {
    int n = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++n;
    return n;
}

std::vector<std::string> whitespace_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

}  // namespace

double frame_entropy_bits(const uint8_t* rgb, size_t pixels) {
    if (pixels == 0) return 0.0;
    std::array<int64_t, 256> hist{};
    for (size_t p = 0; p < pixels; ++p) {
        // integer Rec.601 luma
        const int luma = (299 * rgb[p * 3] + 587 * rgb[p * 3 + 1] + 114 * rgb[p * 3 + 2]) / 1000;
        ++hist[static_cast<size_t>(std::clamp(luma, 0, 255))];
    }
    double entropy = 0.0;
    const double inv = 1.0 / static_cast<double>(pixels);
    for (int64_t count : hist) {
        if (count == 0) continue;
        const double p = static_cast<double>(count) * inv;
        entropy -= p * std::log2(p);
    }
    return entropy;
}

double first_frame_entropy_bits(const clip::ClipU8& media) {
    if (media.frames < 1) return 0.0;
    return frame_entropy_bits(media.frame(0), static_cast<size_t>(media.height) * media.width);
}

FilterDecision entropy_filter(const clip::ClipU8& media, double threshold_bits) {
    FilterDecision d;
    d.score = first_frame_entropy_bits(media);
    if (d.score < threshold_bits) {
        d.keep = false;
        d.rule = "entropy";
    }
    return d;
}

FilterDecision aspect_filter(int width, int height, double max_ratio) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("aspect_filter: non-positive dimensions");
    FilterDecision d;
    d.score = static_cast<double>(std::max(width, height)) / std::min(width, height);
    if (d.score > max_ratio) {
        d.keep = false;
        d.rule = "aspect";
    }
    return d;
}

FilterDecision ocr_length_filter(const manifest::Record& record, int max_chars) {
    FilterDecision d;
    if (!record.ocr_text) {
        std::cerr << "warning: record '" << record.id << "' has no ocr_text field, keeping\n";
        d.score = 0.0;
        return d;
    }
    d.score = utf8_length(*record.ocr_text);
    if (d.score > max_chars) {
        d.keep = false;
        d.rule = "ocr";
    }
    return d;
}

std::vector<int> flip_pad_indices(int n, int target) {
    if (n < 1) throw std::invalid_argument("flip_pad: need at least one frame");
    if (target < 1) throw std::invalid_argument("flip_pad: bad target");
    std::vector<int> out(static_cast<size_t>(target));
    if (n == 1) {
        std::fill(out.begin(), out.end(), 0);
        return out;
    }
    const int period = 2 * n - 2;
    for (int i = 0; i < target; ++i) {
        const int j = i % period;
        out[static_cast<size_t>(i)] = j < n ? j : period - j;
    }
    return out;
}

clip::ClipU8 flip_pad(const clip::ClipU8& media, int target) {
    if (media.frames >= target) {
        clip::ClipU8 out = media;
        out.frames = target;
        out.rgb.resize(static_cast<size_t>(target) * media.frame_bytes());
        return out;
    }
    const std::vector<int> order = flip_pad_indices(media.frames, target);
    clip::ClipU8 out;
    out.frames = target;
    out.height = media.height;
    out.width = media.width;
    out.rgb.resize(static_cast<size_t>(target) * media.frame_bytes());
    for (int i = 0; i < target; ++i)
        std::memcpy(out.frame(i), media.frame(order[static_cast<size_t>(i)]), media.frame_bytes());
    return out;
}

CurationResult curate(const std::vector<manifest::Record>& records,
                      const std::filesystem::path& media_root, const FilterOptions& options) {
    CurationResult result;
    result.report.input_count = static_cast<int64_t>(records.size());
    for (const auto& record : records) {
        RecordDecision decision;
        decision.id = record.id;

        clip::ClipU8 media;
        bool decodable = true;
        try {
            media = clip::load_media(media_root / record.path);
        } catch (const std::exception& e) {
            decodable = false;
            decision.kept = false;
            decision.dropped_by = "undecodable";
            std::cerr << "warning: dropping '" << record.id << "': " << e.what() << "\n";
        }

        if (decodable) {
            const FilterDecision entropy = entropy_filter(media, options.entropy_bits);
            const FilterDecision aspect = aspect_filter(record.width, record.height, options.max_aspect);
            const FilterDecision ocr = ocr_length_filter(record, options.max_ocr_chars);
            decision.entropy_bits = entropy.score;
            decision.aspect_ratio = aspect.score;
            decision.ocr_chars = static_cast<int>(ocr.score);
            // rule order is reporting detail only; the kept set is the
            // conjunction and does not depend on it
            if (!entropy.keep) {
                decision.kept = false;
                decision.dropped_by = entropy.rule;
            } else if (!aspect.keep) {
                decision.kept = false;
                decision.dropped_by = aspect.rule;
            } else if (!ocr.keep) {
                decision.kept = false;
                decision.dropped_by = ocr.rule;
            }
        }

        if (decision.kept) {
            result.kept.push_back(record);
            ++result.report.kept_count;
        } else {
            ++result.report.dropped_by_rule[decision.dropped_by];
        }
        result.report.decisions.push_back(std::move(decision));
    }
    split_dataset(result.kept, options.top_k_trigger_words);
    return result;
}

void split_dataset(std::vector<manifest::Record>& records, int top_k) {
    if (top_k < 1) throw std::invalid_argument("split_dataset: top_k must be positive");
    for (auto& r : records) r.split = "train";

    for (const std::string& domain : {std::string("real"), std::string("cartoon")}) {
        const std::string split_name = domain == "real" ? "test-r" : "test-c";

        std::map<std::string, int64_t> freq;  // record frequency per trigger word
        for (const auto& r : records) {
            if (r.domain != domain) continue;
            for (const auto& w : r.trigger_words) ++freq[w];
        }
        std::vector<std::pair<std::string, int64_t>> ranked(freq.begin(), freq.end());
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        if (static_cast<int>(ranked.size()) < top_k)
            std::cerr << "warning: domain '" << domain << "' has only " << ranked.size()
                      << " distinct trigger words (top_k=" << top_k << ")\n";

        // id-ordered view so "first sample per word" is deterministic
        std::vector<manifest::Record*> by_id;
        for (auto& r : records)
            if (r.domain == domain) by_id.push_back(&r);
        std::sort(by_id.begin(), by_id.end(),
                  [](const auto* a, const auto* b) { return a->id < b->id; });

        const int words = std::min<int>(top_k, static_cast<int>(ranked.size()));
        for (int wi = 0; wi < words; ++wi) {
            const std::string& word = ranked[static_cast<size_t>(wi)].first;
            for (manifest::Record* r : by_id) {
                if (r->split != "train") continue;
                if (std::find(r->trigger_words.begin(), r->trigger_words.end(), word) ==
                    r->trigger_words.end())
                    continue;
                r->split = split_name;
                break;
            }
        }
    }
}

ManifestStats manifest_stats(const std::vector<manifest::Record>& records, int top_words) {
    ManifestStats stats;
    stats.record_count = static_cast<int64_t>(records.size());
    if (records.empty()) {
        std::cerr << "warning: manifest_stats on empty manifest\n";
        return stats;
    }

    int64_t multi = 0, cartoon = 0, with_ocr = 0;
    int64_t multi_frames_total = 0, caption_tokens_total = 0, trigger_total = 0;
    std::map<std::string, int64_t> caption_freq, trigger_freq;
    for (const auto& r : records) {
        if (r.frame_count > 1) {
            ++multi;
            multi_frames_total += r.frame_count;
        }
        if (r.domain == "cartoon") ++cartoon;
        if (r.ocr_text && !r.ocr_text->empty()) ++with_ocr;
        const auto tokens = whitespace_tokens(r.caption);
        caption_tokens_total += static_cast<int64_t>(tokens.size());
        for (const auto& t : tokens) ++caption_freq[t];
        trigger_total += static_cast<int64_t>(r.trigger_words.size());
        for (const auto& w : r.trigger_words) ++trigger_freq[w];
    }
    const double n = static_cast<double>(records.size());
    stats.multi_frame_ratio = static_cast<double>(multi) / n;
    stats.ave_frames_multi = multi > 0 ? static_cast<double>(multi_frames_total) / multi : 0.0;
    stats.cartoon_ratio = static_cast<double>(cartoon) / n;
    stats.optical_character_ratio = static_cast<double>(with_ocr) / n;
    stats.ave_description_tokens = static_cast<double>(caption_tokens_total) / n;
    stats.ave_trigger_words = static_cast<double>(trigger_total) / n;

    auto top_of = [top_words](const std::map<std::string, int64_t>& freq) {
        std::vector<std::pair<std::string, int64_t>> ranked(freq.begin(), freq.end());
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        if (static_cast<int>(ranked.size()) > top_words) ranked.resize(static_cast<size_t>(top_words));
        return ranked;
    };
    stats.top_caption_words = top_of(caption_freq);
    stats.top_trigger_words = top_of(trigger_freq);
    return stats;
}

std::string FilterReport::to_json() const {
    json j;
    j["input_count"] = input_count;
    j["kept_count"] = kept_count;
    j["dropped_by_rule"] = dropped_by_rule;
    json decs = json::array();
    for (const auto& d : decisions) {
        decs.push_back({{"id", d.id},
                        {"kept", d.kept},
                        {"dropped_by", d.dropped_by},
                        {"entropy_bits", d.entropy_bits},
                        {"aspect_ratio", d.aspect_ratio},
                        {"ocr_chars", d.ocr_chars}});
    }
    j["decisions"] = decs;
    return j.dump(2);
}

std::string ManifestStats::to_json() const {
    json j;
    j["record_count"] = record_count;
    j["multi_frame_ratio"] = multi_frame_ratio;
    j["ave_frames_multi"] = ave_frames_multi;
    j["cartoon_ratio"] = cartoon_ratio;
    j["optical_character_ratio"] = optical_character_ratio;
    j["ave_description_tokens"] = ave_description_tokens;
    j["ave_trigger_words"] = ave_trigger_words;
    auto words = [](const std::vector<std::pair<std::string, int64_t>>& list) {
        json arr = json::array();
        for (const auto& [word, count] : list) arr.push_back({{"word", word}, {"count", count}});
        return arr;
    };
    j["top_caption_words"] = words(top_caption_words);
    j["top_trigger_words"] = words(top_trigger_words);
    return j.dump(2);
}

}  // namespace vsd::curation
