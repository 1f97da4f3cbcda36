#include "vsd/cli.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "vsd/clip.h"
#include "vsd/curation.h"
#include "vsd/denoiser.h"
#include "vsd/diffusion.h"
#include "vsd/gradsuite.h"
#include "vsd/io/checkpoint.h"
#include "vsd/io/gif.h"
#include "vsd/io/vsdt.h"
#include "vsd/manifest.h"
#include "vsd/metrics.h"
#include "vsd/rng.h"
#include "vsd/synthgen.h"
#include "vsd/vq.h"

namespace vsd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kUsage = R"(usage: vsd <command> [--key value ...]

commands:
  gen        synthesize a sticker clip dataset
             --out DIR --n N --seed S
  curate     filter and split a dataset manifest
             --manifest FILE [--media-root DIR] --out DIR
             [--entropy-bits B] [--max-aspect R] [--max-ocr-chars N] [--top-k K]
  train      fit a model on a curated manifest
             --manifest FILE [--media-root DIR] --out DIR [--seed S]
             [--model.kind diffusion|vq|encoder] [--steps N] [--batch B] [--lr F]
             [--split NAME] [--model.temporal sti|conv1d|none] [--model.gamma G]
             [--model.k K] [--model.base-channels C] [--model.depth D]
             [--vq.prior-steps N]
  sample     draw clips from a diffusion checkpoint (DDIM, 25 steps)
             --checkpoint FILE --out DIR --n N [--seed S]
             [--captions FILE | --manifest FILE [--split NAME]]
  eval       metrics for generated clips against a real test split
             --real-manifest FILE --samples DIR --out DIR [--media-root DIR]
             [--split NAME] [--encoder FILE] [--encoder.steps N] [--encoder.batch B]
  gradcheck  finite-difference verification of every differentiable operation
             [--seed S] [--out DIR]

Every option can also come from --config FILE, a JSON object with the same
flat dotted keys; command-line flags override file values. VSD_SEED is the
seed fallback.
)";

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Options {
public:
    Options(std::string command, std::map<std::string, std::string> defaults,
            std::set<std::string> required)
        : command_(std::move(command)), values_(std::move(defaults)), required_(std::move(required)) {
        values_.emplace("config", "");
        values_.emplace("seed", "");
    }

    void parse(const std::vector<std::string>& args) {
        std::set<std::string> cli_given;
        for (size_t i = 0; i < args.size(); ++i) {
            std::string key = args[i];
            if (key.rfind("--", 0) != 0)
                throw UsageError(command_ + ": unexpected argument '" + key + "'");
            key = key.substr(2);
            std::string value;
            const size_t eq = key.find('=');
            if (eq != std::string::npos) {
                value = key.substr(eq + 1);
                key = key.substr(0, eq);
            } else {
                if (i + 1 >= args.size())
                    throw UsageError(command_ + ": option '--" + key + "' needs a value");
                value = args[++i];
            }
            if (values_.find(key) == values_.end())
                throw UsageError(command_ + ": unknown option '--" + key + "'");
            values_[key] = value;
            cli_given.insert(key);
        }

        if (!values_["config"].empty()) {
            std::ifstream in(values_["config"]);
            if (!in) throw std::runtime_error("config: cannot open " + values_["config"]);
            json j;
            in >> j;
            if (!j.is_object()) throw std::runtime_error("config: expected a JSON object");
            for (const auto& [key, value] : j.items()) {
                if (values_.find(key) == values_.end())
                    throw std::runtime_error("config: unknown key '" + key + "'");
                if (cli_given.count(key)) continue;  // flags win
                values_[key] = value.is_string() ? value.get<std::string>() : value.dump();
            }
        }

        if (values_["seed"].empty()) {
            const char* env = std::getenv("VSD_SEED");
            values_["seed"] = env ? env : "0";
        }
        for (const auto& key : required_)
            if (values_.at(key).empty())
                throw UsageError(command_ + ": missing required option '--" + key + "'");
    }

    const std::string& str(const std::string& key) const { return values_.at(key); }
    bool has(const std::string& key) const { return !values_.at(key).empty(); }

    int64_t integer(const std::string& key) const {
        try {
            return std::stoll(values_.at(key));
        } catch (...) {
            throw UsageError(command_ + ": option '--" + key + "' expects an integer, got '" +
                             values_.at(key) + "'");
        }
    }

    double number(const std::string& key) const {
        try {
            return std::stod(values_.at(key));
        } catch (...) {
            throw UsageError(command_ + ": option '--" + key + "' expects a number, got '" +
                             values_.at(key) + "'");
        }
    }

    uint64_t seed() const { return static_cast<uint64_t>(integer("seed")); }

    json resolved() const {
        json j;
        for (const auto& [key, value] : values_) {
            if (key == "config") continue;
            char* end = nullptr;
            const double num = std::strtod(value.c_str(), &end);
            if (!value.empty() && end && *end == '\0')
                j[key] = value.find('.') == std::string::npos &&
                                 value.find('e') == std::string::npos &&
                                 value.find('E') == std::string::npos
                             ? json(static_cast<int64_t>(num))
                             : json(num);
            else
                j[key] = value;
        }
        return j;
    }

private:
    std::string command_;
    std::map<std::string, std::string> values_;
    std::set<std::string> required_;
};

// Output directory bookkeeping: resolved-config echo, the produced-file
// manifest, and removal of partial outputs when a command fails.
class RunDir {
public:
    RunDir(fs::path root, std::string command, const Options& options)
        : root_(std::move(root)), command_(std::move(command)) {
        created_ = !fs::exists(root_);
        fs::create_directories(root_);
        std::ofstream cfg(root_ / "config.json");
        cfg << options.resolved().dump(2) << "\n";
        track("config.json");
    }

    const fs::path& root() const { return root_; }

    fs::path file(const std::string& rel) {
        track(rel);
        return root_ / rel;
    }

    void track(const std::string& rel) { files_.push_back(rel); }

    void finish() {
        json j;
        j["command"] = command_;
        std::sort(files_.begin(), files_.end());
        j["files"] = files_;
        std::ofstream out(root_ / "artifacts.json");
        out << j.dump(2) << "\n";
        finished_ = true;
    }

    void abort() {
        if (finished_) return;
        std::error_code ec;
        for (const auto& rel : files_) fs::remove(root_ / rel, ec);
        fs::remove(root_ / "artifacts.json", ec);
        if (created_ && fs::exists(root_) && fs::is_empty(root_, ec)) fs::remove(root_, ec);
    }

private:
    fs::path root_;
    std::string command_;
    std::vector<std::string> files_;
    bool created_ = false;
    bool finished_ = false;
};

std::vector<manifest::Record> records_in_split(const std::vector<manifest::Record>& all,
                                               const std::string& split) {
    std::vector<manifest::Record> out;
    for (const auto& r : all) {
        const bool match = split == "all" || r.split == split ||
                           (split == "test" && (r.split == "test-r" || r.split == "test-c"));
        if (match) out.push_back(r);
    }
    return out;
}

// ---- checkpoint config (de)serialization ----

json denoiser_config_json(const denoiser::DenoiserConfig& cfg) {
    json j;
    j["kind"] = "diffusion";
    j["base_channels"] = cfg.base_channels;
    j["depth"] = cfg.depth;
    j["temporal"] = denoiser::to_string(cfg.temporal);
    j["gamma"] = cfg.gamma;
    j["frame_kernel"] = cfg.frame_kernel;
    j["text_dim"] = cfg.text_dim;
    j["vocab_size"] = cfg.vocab_size;
    j["time_dim"] = cfg.time_dim;
    j["frames"] = cfg.frames;
    j["height"] = cfg.height;
    j["width"] = cfg.width;
    j["channels"] = cfg.channels;
    return j;
}

denoiser::DenoiserConfig denoiser_config_from_json(const json& j) {
    denoiser::DenoiserConfig cfg;
    cfg.base_channels = j.at("base_channels").get<int>();
    cfg.depth = j.at("depth").get<int>();
    cfg.temporal = denoiser::temporal_kind_from_string(j.at("temporal").get<std::string>());
    cfg.gamma = j.at("gamma").get<int>();
    cfg.frame_kernel = j.at("frame_kernel").get<int>();
    cfg.text_dim = j.at("text_dim").get<int>();
    cfg.vocab_size = j.at("vocab_size").get<int64_t>();
    cfg.time_dim = j.at("time_dim").get<int>();
    cfg.frames = j.at("frames").get<int>();
    cfg.height = j.at("height").get<int>();
    cfg.width = j.at("width").get<int>();
    cfg.channels = j.at("channels").get<int>();
    return cfg;
}

json vq_config_json(const vq::VqConfig& cfg) {
    json j;
    j["kind"] = "vq";
    j["codebook_size"] = cfg.codebook_size;
    j["code_dim"] = cfg.code_dim;
    j["patch"] = cfg.patch;
    j["hidden"] = cfg.hidden;
    j["frames"] = cfg.frames;
    j["height"] = cfg.height;
    j["width"] = cfg.width;
    j["channels"] = cfg.channels;
    j["prior_dim"] = cfg.prior_dim;
    j["prior_vocab"] = cfg.prior_vocab;
    return j;
}

vq::VqConfig vq_config_from_json(const json& j) {
    vq::VqConfig cfg;
    cfg.codebook_size = j.at("codebook_size").get<int64_t>();
    cfg.code_dim = j.at("code_dim").get<int64_t>();
    cfg.patch = j.at("patch").get<int>();
    cfg.hidden = j.at("hidden").get<int64_t>();
    cfg.frames = j.at("frames").get<int>();
    cfg.height = j.at("height").get<int>();
    cfg.width = j.at("width").get<int>();
    cfg.channels = j.at("channels").get<int>();
    cfg.prior_dim = j.at("prior_dim").get<int64_t>();
    cfg.prior_vocab = j.at("prior_vocab").get<int64_t>();
    return cfg;
}

json encoder_config_json(const metrics::EncoderConfig& cfg) {
    json j;
    j["kind"] = "encoder";
    j["c1"] = cfg.c1;
    j["c2"] = cfg.c2;
    j["c3"] = cfg.c3;
    j["feat_dim"] = cfg.feat_dim;
    j["embed_dim"] = cfg.embed_dim;
    j["text_dim"] = cfg.text_dim;
    j["vocab"] = cfg.vocab;
    j["frames"] = cfg.frames;
    j["height"] = cfg.height;
    j["width"] = cfg.width;
    j["channels"] = cfg.channels;
    j["temperature"] = cfg.temperature;
    return j;
}

metrics::EncoderConfig encoder_config_from_json(const json& j) {
    metrics::EncoderConfig cfg;
    cfg.c1 = j.at("c1").get<int>();
    cfg.c2 = j.at("c2").get<int>();
    cfg.c3 = j.at("c3").get<int>();
    cfg.feat_dim = j.at("feat_dim").get<int64_t>();
    cfg.embed_dim = j.at("embed_dim").get<int64_t>();
    cfg.text_dim = j.at("text_dim").get<int64_t>();
    cfg.vocab = j.at("vocab").get<int64_t>();
    cfg.frames = j.at("frames").get<int>();
    cfg.height = j.at("height").get<int>();
    cfg.width = j.at("width").get<int>();
    cfg.channels = j.at("channels").get<int>();
    cfg.temperature = j.at("temperature").get<double>();
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("io: cannot write " + path.string());
    out << text;
    if (!text.empty() && text.back() != '\n') out << "\n";
}

// ---- commands ----

int cmd_gen(const std::vector<std::string>& args) {
    Options opt("gen", {{"out", ""}, {"n", "200"}}, {"out"});
    opt.parse(args);
    RunDir rd(opt.str("out"), "gen", opt);
    try {
        const synthgen::GenDatasetResult result =
            synthgen::gen_dataset(static_cast<int>(opt.integer("n")), opt.seed(), rd.root());
        rd.track("manifest.jsonl");
        for (const auto& r : result.records) rd.track(r.path);
        rd.finish();
        std::cout << "generated " << result.records.size() << " clips under " << rd.root() << "\n";
        return 0;
    } catch (...) {
        rd.abort();
        throw;
    }
}

int cmd_curate(const std::vector<std::string>& args) {
    Options opt("curate",
                {{"manifest", ""},
                 {"media-root", ""},
                 {"out", ""},
                 {"entropy-bits", "3.0"},
                 {"max-aspect", "2.0"},
                 {"max-ocr-chars", "30"},
                 {"top-k", "500"}},
                {"manifest", "out"});
    opt.parse(args);
    const fs::path manifest_path = opt.str("manifest");
    const fs::path media_root =
        opt.has("media-root") ? fs::path(opt.str("media-root")) : manifest_path.parent_path();

    RunDir rd(opt.str("out"), "curate", opt);
    try {
        const std::vector<manifest::Record> records = manifest::read_manifest(manifest_path);
        curation::FilterOptions fopt;
        fopt.entropy_bits = opt.number("entropy-bits");
        fopt.max_aspect = opt.number("max-aspect");
        fopt.max_ocr_chars = static_cast<int>(opt.integer("max-ocr-chars"));
        fopt.top_k_trigger_words = static_cast<int>(opt.integer("top-k"));

        curation::CurationResult result = curation::curate(records, media_root, fopt);
        manifest::write_manifest(rd.file("curated.jsonl"), result.kept);
        write_text(rd.file("filter_report.json"), result.report.to_json());
        write_text(rd.file("stats.json"), curation::manifest_stats(result.kept).to_json());
        rd.finish();
        std::cout << "kept " << result.report.kept_count << " of " << result.report.input_count
                  << " records\n";
        return 0;
    } catch (...) {
        rd.abort();
        throw;
    }
}

int cmd_train(const std::vector<std::string>& args) {
    Options opt("train",
                {{"manifest", ""},
                 {"media-root", ""},
                 {"out", ""},
                 {"split", "train"},
                 {"model.kind", "diffusion"},
                 {"steps", "300"},
                 {"batch", "2"},
                 {"lr", "1e-3"},
                 {"model.temporal", "sti"},
                 {"model.gamma", "2"},
                 {"model.k", "3"},
                 {"model.base-channels", "16"},
                 {"model.depth", "2"},
                 {"vq.prior-steps", "100"}},
                {"manifest", "out"});
    opt.parse(args);
    const fs::path manifest_path = opt.str("manifest");
    const fs::path media_root =
        opt.has("media-root") ? fs::path(opt.str("media-root")) : manifest_path.parent_path();

    RunDir rd(opt.str("out"), "train", opt);
    try {
        const std::vector<manifest::Record> all = manifest::read_manifest(manifest_path);
        std::vector<manifest::Record> records = records_in_split(all, opt.str("split"));
        if (records.empty()) {
            std::cerr << "warning: no records in split '" << opt.str("split")
                      << "', training on the whole manifest\n";
            records = all;
        }
        if (records.empty()) throw std::runtime_error("train: empty manifest");

        const std::string kind = opt.str("model.kind");
        const int steps = static_cast<int>(opt.integer("steps"));

        if (kind == "diffusion") {
            denoiser::DenoiserConfig cfg;
            cfg.base_channels = static_cast<int>(opt.integer("model.base-channels"));
            cfg.depth = static_cast<int>(opt.integer("model.depth"));
            cfg.temporal = denoiser::temporal_kind_from_string(opt.str("model.temporal"));
            cfg.gamma = static_cast<int>(opt.integer("model.gamma"));
            cfg.frame_kernel = static_cast<int>(opt.integer("model.k"));
            cfg.validate();

            const std::vector<denoiser::TrainItem> items =
                denoiser::load_training_items(records, media_root, cfg.frames);
            denoiser::Denoiser model(cfg, opt.seed());
            denoiser::FitOptions fopt;
            fopt.steps = steps;
            fopt.batch_size = static_cast<int>(opt.integer("batch"));
            fopt.lr = opt.number("lr");
            fopt.seed = opt.seed();
            const denoiser::FitResult fit = denoiser::fit(model, items, fopt);

            io::Checkpoint ckpt{denoiser_config_json(cfg).dump(), model.params()};
            io::save_checkpoint(rd.file("checkpoint.vsdck"), ckpt);
            std::ostringstream log;
            for (size_t i = 0; i < fit.loss_curve.size(); ++i)
                log << json{{"step", i}, {"loss", fit.loss_curve[i]}}.dump() << "\n";
            write_text(rd.file("train_log.jsonl"), log.str());
        } else if (kind == "vq") {
            vq::VqConfig cfg;
            const std::vector<denoiser::TrainItem> items =
                denoiser::load_training_items(records, media_root, cfg.frames);
            std::vector<tensor::Tensor> clips;
            std::vector<std::pair<tensor::Tensor, std::string>> pairs;
            for (const auto& item : items) {
                clips.push_back(item.x0);
                pairs.emplace_back(item.x0, item.caption);
            }
            vq::VqModel model(cfg, opt.seed());
            vq::VqFitOptions fopt;
            fopt.steps = steps;
            fopt.batch_size = static_cast<int>(opt.integer("batch"));
            fopt.lr = opt.number("lr");
            fopt.seed = opt.seed();
            const vq::VqFitResult fit = vq::fit_vq(model, clips, fopt);

            const int prior_steps = static_cast<int>(opt.integer("vq.prior-steps"));
            if (prior_steps > 0) {
                vq::PriorFitOptions popt;
                popt.steps = prior_steps;
                popt.lr = opt.number("lr");
                popt.seed = opt.seed();
                vq::fit_prior(model, pairs, popt);
            }

            io::Checkpoint ckpt{vq_config_json(cfg).dump(), model.params()};
            io::save_checkpoint(rd.file("checkpoint.vsdck"), ckpt);
            std::ostringstream log;
            for (size_t i = 0; i < fit.loss_curve.size(); ++i)
                log << json{{"step", i}, {"loss", fit.loss_curve[i]}}.dump() << "\n";
            write_text(rd.file("train_log.jsonl"), log.str());
            std::ostringstream rt;
            for (size_t i = 0; i < fit.round_trip_curve.size(); ++i)
                rt << json{{"log_index", i}, {"round_trip_mse", fit.round_trip_curve[i]}}.dump()
                   << "\n";
            write_text(rd.file("round_trip_log.jsonl"), rt.str());
        } else if (kind == "encoder") {
            metrics::EncoderConfig cfg;
            const std::vector<denoiser::TrainItem> items =
                denoiser::load_training_items(records, media_root, cfg.frames);
            std::vector<std::pair<tensor::Tensor, std::string>> pairs;
            for (const auto& item : items)
                pairs.emplace_back(clip::model_to_unit(item.x0), item.caption);
            metrics::DualEncoder model(cfg, opt.seed());
            metrics::EncoderFitOptions fopt;
            fopt.steps = steps;
            fopt.batch_size = static_cast<int>(opt.integer("batch"));
            fopt.lr = opt.number("lr");
            fopt.seed = opt.seed();
            const std::vector<double> curve = metrics::train_dual_encoder(model, pairs, fopt);

            io::Checkpoint ckpt{encoder_config_json(cfg).dump(), model.params()};
            io::save_checkpoint(rd.file("checkpoint.vsdck"), ckpt);
            std::ostringstream log;
            for (size_t i = 0; i < curve.size(); ++i)
                log << json{{"step", i}, {"loss", curve[i]}}.dump() << "\n";
            write_text(rd.file("train_log.jsonl"), log.str());
        } else {
            throw UsageError("train: unknown model.kind '" + kind + "'");
        }
        rd.finish();
        std::cout << "checkpoint written to " << (rd.root() / "checkpoint.vsdck") << "\n";
        return 0;
    } catch (...) {
        rd.abort();
        throw;
    }
}

int cmd_sample(const std::vector<std::string>& args) {
    Options opt("sample",
                {{"checkpoint", ""}, {"out", ""}, {"n", "8"}, {"captions", ""}, {"manifest", ""},
                 {"split", "test"}},
                {"checkpoint", "out"});
    opt.parse(args);

    RunDir rd(opt.str("out"), "sample", opt);
    try {
        const io::Checkpoint ckpt = io::load_checkpoint(opt.str("checkpoint"));
        const json cfg_json = json::parse(ckpt.config_json);
        if (cfg_json.value("kind", "") != "diffusion")
            throw std::runtime_error("sample: checkpoint is not a diffusion model");
        const denoiser::DenoiserConfig cfg = denoiser_config_from_json(cfg_json);
        const denoiser::Denoiser model(cfg, ckpt.params);

        std::vector<std::string> captions;
        if (opt.has("captions")) {
            std::ifstream in(opt.str("captions"));
            if (!in) throw std::runtime_error("sample: cannot open " + opt.str("captions"));
            std::string line;
            while (std::getline(in, line))
                if (!line.empty()) captions.push_back(line);
        } else if (opt.has("manifest")) {
            auto records = records_in_split(manifest::read_manifest(opt.str("manifest")),
                                            opt.str("split"));
            std::sort(records.begin(), records.end(),
                      [](const auto& a, const auto& b) { return a.id < b.id; });
            for (const auto& r : records) captions.push_back(manifest::training_caption(r));
        } else {
            throw UsageError("sample: provide --captions or --manifest");
        }
        if (captions.empty()) throw std::runtime_error("sample: no captions available");

        const diffusion::NoiseSchedule schedule = diffusion::make_schedule(1000);
        const tensor::Shape shape{cfg.frames, cfg.height, cfg.width, cfg.channels};
        const int n = static_cast<int>(opt.integer("n"));

        json samples = json::array();
        for (int i = 0; i < n; ++i) {
            const std::string& caption = captions[static_cast<size_t>(i) % captions.size()];
            const uint64_t clip_seed = rng::mix(opt.seed(), static_cast<uint64_t>(i));
            const tensor::Tensor x =
                diffusion::ddim_sample(model.as_denoise_fn(), caption, schedule, shape, clip_seed);
            const tensor::Tensor unit = clip::model_to_unit(x);

            char name[32];
            std::snprintf(name, sizeof(name), "sample_%03d", i);
            const std::string gif_rel = std::string(name) + ".gif";
            const std::string vsdt_rel = std::string(name) + ".vsdt";

            const clip::ClipU8 media = clip::from_unit_tensor(unit);
            io::GifFrames frames;
            frames.width = media.width;
            frames.height = media.height;
            for (int f = 0; f < media.frames; ++f)
                frames.frames.emplace_back(media.frame(f), media.frame(f) + media.frame_bytes());
            io::write_gif(rd.file(gif_rel), frames, 12);
            io::write_vsdt(rd.file(vsdt_rel), unit);
            samples.push_back({{"gif", gif_rel},
                               {"vsdt", vsdt_rel},
                               {"caption", caption},
                               {"seed", clip_seed}});
        }
        write_text(rd.file("samples.json"), samples.dump(2));
        rd.finish();
        std::cout << "wrote " << n << " samples under " << rd.root() << "\n";
        return 0;
    } catch (...) {
        rd.abort();
        throw;
    }
}

int cmd_eval(const std::vector<std::string>& args) {
    Options opt("eval",
                {{"real-manifest", ""},
                 {"media-root", ""},
                 {"split", "test"},
                 {"samples", ""},
                 {"encoder", ""},
                 {"encoder.steps", "300"},
                 {"encoder.batch", "16"},
                 {"out", ""}},
                {"real-manifest", "samples", "out"});
    opt.parse(args);
    const fs::path manifest_path = opt.str("real-manifest");
    const fs::path media_root =
        opt.has("media-root") ? fs::path(opt.str("media-root")) : manifest_path.parent_path();
    const fs::path samples_dir = opt.str("samples");

    RunDir rd(opt.str("out"), "eval", opt);
    try {
        const std::vector<manifest::Record> all = manifest::read_manifest(manifest_path);
        const std::vector<manifest::Record> test_records = records_in_split(all, opt.str("split"));
        if (test_records.size() < 2)
            throw std::runtime_error("eval: split '" + opt.str("split") + "' has fewer than 2 records");

        metrics::EncoderConfig enc_cfg;
        std::optional<metrics::DualEncoder> encoder;
        if (opt.has("encoder")) {
            const io::Checkpoint ckpt = io::load_checkpoint(opt.str("encoder"));
            const json cfg_json = json::parse(ckpt.config_json);
            if (cfg_json.value("kind", "") != "encoder")
                throw std::runtime_error("eval: --encoder checkpoint is not a dual encoder");
            enc_cfg = encoder_config_from_json(cfg_json);
            encoder.emplace(enc_cfg, ckpt.params);
        } else {
            // no pretrained scorer at desk scale: train the toy dual encoder
            // on the train split, deterministically from the seed
            std::vector<manifest::Record> train_records = records_in_split(all, "train");
            if (train_records.empty()) train_records = all;
            const std::vector<denoiser::TrainItem> items =
                denoiser::load_training_items(train_records, media_root, enc_cfg.frames);
            std::vector<std::pair<tensor::Tensor, std::string>> pairs;
            for (const auto& item : items)
                pairs.emplace_back(clip::model_to_unit(item.x0), item.caption);
            encoder.emplace(enc_cfg, opt.seed());
            metrics::EncoderFitOptions fopt;
            fopt.steps = static_cast<int>(opt.integer("encoder.steps"));
            fopt.batch_size = static_cast<int>(opt.integer("encoder.batch"));
            fopt.seed = opt.seed();
            metrics::train_dual_encoder(*encoder, pairs, fopt);
        }

        std::vector<tensor::Tensor> real_clips;
        std::vector<std::string> candidates;
        for (const auto& r : test_records) {
            candidates.push_back(manifest::training_caption(r));
            try {
                clip::ClipU8 media = clip::load_media(media_root / r.path);
                media = curation::flip_pad(media, enc_cfg.frames);
                real_clips.push_back(clip::to_unit_tensor(media));
            } catch (const std::exception& e) {
                std::cerr << "warning: skipping real clip '" << r.id << "': " << e.what() << "\n";
            }
        }
        if (real_clips.size() < 2) throw std::runtime_error("eval: fewer than 2 decodable real clips");

        std::ifstream sj(samples_dir / "samples.json");
        if (!sj) throw std::runtime_error("eval: cannot open " + (samples_dir / "samples.json").string());
        json samples;
        sj >> samples;
        std::vector<tensor::Tensor> gen_clips;
        std::vector<std::string> gen_captions;
        for (const auto& s : samples) {
            gen_clips.push_back(io::read_vsdt(samples_dir / s.at("vsdt").get<std::string>()));
            gen_captions.push_back(s.at("caption").get<std::string>());
        }
        if (gen_clips.size() < 2) throw std::runtime_error("eval: fewer than 2 generated clips");

        metrics::MetricsReport report;
        report.n_real = static_cast<int64_t>(real_clips.size());
        report.n_gen = static_cast<int64_t>(gen_clips.size());
        report.fvd = metrics::fvd(real_clips, gen_clips, *encoder);

        std::vector<double> ranks;
        double sim_total = 0.0, disc_total = 0.0;
        for (size_t i = 0; i < gen_clips.size(); ++i) {
            std::vector<std::string> cands = candidates;
            int true_index = -1;
            for (size_t c = 0; c < cands.size(); ++c)
                if (cands[c] == gen_captions[i]) {
                    true_index = static_cast<int>(c);
                    break;
                }
            if (true_index < 0) {
                cands.push_back(gen_captions[i]);
                true_index = static_cast<int>(cands.size()) - 1;
            }
            const metrics::SimilarityResult sim =
                metrics::clip_similarity(gen_clips[i], cands, true_index, *encoder);
            sim_total += sim.true_score;
            ranks.push_back(static_cast<double>(sim.true_rank));
            disc_total += metrics::discreteness(gen_clips[i]);
        }
        report.clip_sim_mean = sim_total / static_cast<double>(gen_clips.size());
        report.discreteness_mean = disc_total / static_cast<double>(gen_clips.size());
        std::sort(ranks.begin(), ranks.end());
        const size_t mid = ranks.size() / 2;
        report.clip_rank_median =
            ranks.size() % 2 == 1 ? ranks[mid] : 0.5 * (ranks[mid - 1] + ranks[mid]);

        write_text(rd.file("metrics.json"), report.to_json());
        rd.finish();
        std::cout << report.to_json() << "\n";
        return 0;
    } catch (...) {
        rd.abort();
        throw;
    }
}

int cmd_gradcheck(const std::vector<std::string>& args) {
    Options opt("gradcheck", {{"out", ""}, {"tolerance", "1e-4"}}, {});
    opt.parse(args);

    const std::vector<gradsuite::Entry> entries = gradsuite::run_suite(opt.seed());
    const double tolerance = opt.number("tolerance");
    json report = json::array();
    bool ok = true;
    for (const auto& e : entries) {
        const bool pass = e.max_rel_error < tolerance;
        ok = ok && pass;
        std::cout << (pass ? "  ok   " : "  FAIL ") << e.name << "  max_rel_err=" << e.max_rel_error
                  << "  coords=" << e.coords << "\n";
        report.push_back({{"name", e.name},
                          {"max_rel_error", e.max_rel_error},
                          {"coords", e.coords},
                          {"pass", pass}});
    }
    std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (" << entries.size()
              << " checks, tolerance " << tolerance << ")\n";

    if (opt.has("out")) {
        RunDir rd(opt.str("out"), "gradcheck", opt);
        try {
            write_text(rd.file("gradcheck.json"),
                       json{{"tolerance", tolerance}, {"checks", report}, {"pass", ok}}.dump(2));
            rd.finish();
        } catch (...) {
            rd.abort();
            throw;
        }
    }
    return ok ? 0 : 1;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    if (args.empty() || args[0] == "--help" || args[0] == "help" || args[0] == "-h") {
        std::cout << kUsage;
        return args.empty() ? 2 : 0;
    }
    const std::string command = args[0];
    const std::vector<std::string> rest(args.begin() + 1, args.end());
    try {
        if (command == "gen") return cmd_gen(rest);
        if (command == "curate") return cmd_curate(rest);
        if (command == "train") return cmd_train(rest);
        if (command == "sample") return cmd_sample(rest);
        if (command == "eval") return cmd_eval(rest);
        if (command == "gradcheck") return cmd_gradcheck(rest);
        std::cerr << "vsd: unknown command '" << command << "'\n" << kUsage;
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "vsd: " << e.what() << "\n" << kUsage;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "vsd: error: " << e.what() << "\n";
        return 1;
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace vsd::cli
