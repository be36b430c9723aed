#include "bivad/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace bivad {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        fail(ErrorCode::config_error, key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used == v.size()) return out;
    } catch (const std::exception&) {
    }
    fail(ErrorCode::config_error, key + ": expected a number, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail(ErrorCode::config_error, key + ": expected true or false, got '" + v + "'");
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Field {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define SIZE_FIELD(key, member)                                                                    \
    {key, Field{[](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_size(k, v); }, \
                [](const RunConfig& c) { return std::to_string(c.member); }}}
#define REAL_FIELD(key, member)                                                                    \
    {key, Field{[](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_double(k, v); }, \
                [](const RunConfig& c) { return num(c.member); }}}
#define BOOL_FIELD(key, member)                                                                    \
    {key, Field{[](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_bool(k, v); }, \
                [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}}
#define TEXT_FIELD(key, member)                                                                    \
    {key, Field{[](RunConfig& c, const std::string&, const std::string& v) { c.member = v; },    \
                [](const RunConfig& c) { return c.member; }}}

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        SIZE_FIELD("model.image_height", model.image_height),
        SIZE_FIELD("model.image_width", model.image_width),
        SIZE_FIELD("model.image_channels", model.image_channels),
        SIZE_FIELD("model.ch1", model.ch1),
        SIZE_FIELD("model.ch2", model.ch2),
        SIZE_FIELD("model.ch_feat", model.ch_feat),
        SIZE_FIELD("model.heads", model.heads),
        SIZE_FIELD("model.blocks", model.blocks),
        SIZE_FIELD("model.ffn_hidden", model.ffn_hidden),
        SIZE_FIELD("model.codec_kernel", model.codec_kernel),
        SIZE_FIELD("model.attention_kernel", model.attention_kernel),
        SIZE_FIELD("model.bridge_kernel", model.bridge_kernel),
        SIZE_FIELD("clip.n", model.n),
        SIZE_FIELD("clip.m", model.m),
        SIZE_FIELD("clip.stride", model.stride),
        REAL_FIELD("model.eta", model.eta),
        REAL_FIELD("loss.lambda", model.lambda),
        REAL_FIELD("model.leaky_slope", model.slope),
        {"model.bridge_mode",
         Field{[](RunConfig& c, const std::string&, const std::string& v) { c.model.bridge_mode = parse_bridge_mode(v); },
               [](const RunConfig& c) { return to_string(c.model.bridge_mode); }}},
        {"model.direction_mode",
         Field{[](RunConfig& c, const std::string&, const std::string& v) {
                   c.model.direction_mode = parse_direction_mode(v);
               },
               [](const RunConfig& c) { return to_string(c.model.direction_mode); }}},
        BOOL_FIELD("model.positional_encoding", model.positional_encoding),
        SIZE_FIELD("model.seed", model.seed),
        SIZE_FIELD("loss.window", loss.window),
        REAL_FIELD("loss.sigma", loss.sigma),
        SIZE_FIELD("train.batch_size", train.batch_size),
        REAL_FIELD("train.lr", train.lr),
        REAL_FIELD("train.lr_decay", train.lr_decay),
        SIZE_FIELD("train.plateau_patience", train.plateau_patience),
        SIZE_FIELD("train.early_stop_patience", train.early_stop_patience),
        SIZE_FIELD("train.max_epochs", train.max_epochs),
        REAL_FIELD("train.max_minutes", train.max_minutes),
        REAL_FIELD("train.val_fraction", train.val_fraction),
        SIZE_FIELD("train.clips_per_epoch", train.clips_per_epoch),
        SIZE_FIELD("train.val_clips", train.val_clips),
        SIZE_FIELD("train.prefetch", train.prefetch),
        SIZE_FIELD("train.seed", train.seed),
        TEXT_FIELD("infer.checkpoint", infer.checkpoint),
        BOOL_FIELD("infer.export_maps", infer.export_maps),
        BOOL_FIELD("infer.per_video_normalization", infer.per_video_normalization),
        BOOL_FIELD("eval.rbdc", eval.rbdc),
        BOOL_FIELD("eval.tbdc", eval.tbdc),
        REAL_FIELD("eval.alpha", eval.alpha),
        REAL_FIELD("eval.beta", eval.beta),
        TEXT_FIELD("eval.overlap", eval.overlap),
        SIZE_FIELD("eval.min_area", eval.min_area),
        SIZE_FIELD("eval.thresholds", eval.thresholds),
        TEXT_FIELD("eval.scores_dir", eval.scores_dir),
        SIZE_FIELD("synth.train_videos", synth.train_videos),
        SIZE_FIELD("synth.test_videos", synth.test_videos),
        SIZE_FIELD("synth.train_length", synth.train_length),
        SIZE_FIELD("synth.test_length", synth.test_length),
        SIZE_FIELD("synth.height", synth.height),
        SIZE_FIELD("synth.width", synth.width),
        SIZE_FIELD("synth.sprites", synth.sprites),
        SIZE_FIELD("synth.sprite_size", synth.sprite_size),
        REAL_FIELD("synth.speed_min", synth.speed_min),
        REAL_FIELD("synth.speed_max", synth.speed_max),
        SIZE_FIELD("synth.anomalies_per_video", synth.anomalies_per_video),
        SIZE_FIELD("synth.anomaly_length", synth.anomaly_length),
        SIZE_FIELD("synth.seed", synth.seed),
        SIZE_FIELD("bench.frames", bench.frames),
        SIZE_FIELD("bench.warmup", bench.warmup),
        BOOL_FIELD("bench.random_init", bench.random_init),
        TEXT_FIELD("data.root", data_root),
        TEXT_FIELD("output.dir", output_dir),
    };
    return table;
}

#undef SIZE_FIELD
#undef REAL_FIELD
#undef BOOL_FIELD
#undef TEXT_FIELD

void apply_preset(RunConfig& c, const std::string& name) {
    if (name == "full") c.model = ModelConfig::full();
    else if (name == "desk") c.model = ModelConfig::desk();
    else if (name == "micro") c.model = ModelConfig::micro();
    else fail(ErrorCode::config_error, "unknown model preset '" + name + "'");
}

} // namespace

std::pair<std::string, std::string> split_assignment(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos)
        fail(ErrorCode::config_error, "expected key=value, got '" + text + "'");
    return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "model.preset") {
        apply_preset(*this, value);
        return;
    }
    for (const auto& [name, field] : fields())
        if (name == key) {
            field.set(*this, key, value);
            return;
        }
    fail(ErrorCode::config_error, "unknown config key '" + key + "'");
}

void RunConfig::validate() const {
    model.validate();
    auto check = [](bool ok, const std::string& msg) { require(ok, ErrorCode::config_error, msg); };
    check(train.batch_size >= 1, "train.batch_size must be at least 1");
    check(train.lr > 0.0, "train.lr must be positive");
    check(train.lr_decay > 0.0 && train.lr_decay <= 1.0, "train.lr_decay must lie in (0, 1]");
    check(train.val_fraction > 0.0 && train.val_fraction < 1.0, "train.val_fraction must lie in (0, 1)");
    check(train.prefetch >= 1, "train.prefetch must be at least 1");
    check(loss.window % 2 == 1 && loss.window <= model.image_height && loss.window <= model.image_width,
          "loss.window must be odd and fit inside the frame");
    check(loss.sigma > 0.0, "loss.sigma must be positive");
    check(eval.overlap == "iou" || eval.overlap == "gt_fraction", "eval.overlap must be iou or gt_fraction");
    check(eval.beta > 0.0 && eval.beta <= 1.0, "eval.beta must lie in (0, 1]");
    check(eval.alpha > 0.0 && eval.alpha <= 1.0, "eval.alpha must lie in (0, 1]");
    check(eval.thresholds >= 1, "eval.thresholds must be at least 1");
}

std::string RunConfig::dump() const {
    std::string out;
    for (const auto& [name, field] : fields()) out += name + "=" + field.get(*this) + "\n";
    return out;
}

std::filesystem::path RunConfig::checkpoint_path() const {
    return infer.checkpoint.empty() ? std::filesystem::path(output_dir) / "model.bva"
                                    : std::filesystem::path(infer.checkpoint);
}

std::filesystem::path RunConfig::scores_path() const {
    return eval.scores_dir.empty() ? std::filesystem::path(output_dir) / "scores"
                                   : std::filesystem::path(eval.scores_dir);
}

RunConfig RunConfig::parse(const std::string& text,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.find('=') == std::string::npos)
            fail(ErrorCode::config_error, "line " + std::to_string(line_no) + ": expected key=value");
        entries.push_back(split_assignment(line));
    }
    entries.insert(entries.end(), overrides.begin(), overrides.end());
    RunConfig c;
    for (const auto& [k, v] : entries)
        if (k == "model.preset") c.set(k, v);
    for (const auto& [k, v] : entries)
        if (k != "model.preset") c.set(k, v);
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, std::string>>& overrides) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io_error, "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), overrides);
}

} // namespace bivad
