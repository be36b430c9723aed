#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bivad/pipeline.hpp"

namespace bivad {

struct LossConfig {
    std::size_t window = 11;
    double sigma = 1.5;
};

struct TrainConfig {
    std::size_t batch_size = 4;
    double lr = 1e-3;
    double lr_decay = 0.5;
    std::size_t plateau_patience = 3;
    std::size_t early_stop_patience = 8;
    std::size_t max_epochs = 60;
    double max_minutes = 0.0;         // 0: no wall-clock cap
    double val_fraction = 0.1;
    std::size_t clips_per_epoch = 0; // 0: every training clip
    std::size_t val_clips = 0;       // 0: every validation clip
    std::size_t prefetch = 2;
    std::uint64_t seed = 1;
};

struct InferConfig {
    std::string checkpoint; // default <output>/model.bva
    bool export_maps = false;
    bool per_video_normalization = true;
};

struct EvalConfig {
    bool rbdc = false;
    bool tbdc = false;
    double alpha = 0.1;
    double beta = 0.1;
    std::string overlap = "iou"; // iou | gt_fraction
    std::size_t min_area = 9;
    std::size_t thresholds = 50;
    std::string scores_dir; // default <output>/scores
};

struct SynthConfig {
    std::size_t train_videos = 16;
    std::size_t test_videos = 6;
    std::size_t train_length = 640;
    std::size_t test_length = 400;
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t sprites = 3;
    std::size_t sprite_size = 8;
    double speed_min = 1.0;
    double speed_max = 2.0;
    std::size_t anomalies_per_video = 3;
    std::size_t anomaly_length = 40;
    std::uint64_t seed = 7;
};

struct BenchConfig {
    std::size_t frames = 200;
    std::size_t warmup = 10;
    bool random_init = false;
};

/// Everything a command needs. Text form: key=value lines, '#' comments,
/// dotted keys (model.heads=8).
struct RunConfig {
    ModelConfig model = ModelConfig::desk();
    LossConfig loss;
    TrainConfig train;
    InferConfig infer;
    EvalConfig eval;
    SynthConfig synth;
    BenchConfig bench;
    std::string data_root = "data";
    std::string output_dir = "run";

    /// Applies one key; throws config-error for unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    void validate() const;
    /// Every key with its current value, loadable by parse().
    std::string dump() const;

    std::filesystem::path checkpoint_path() const;
    std::filesystem::path scores_path() const;

    /// Entries apply in order, except model.preset which applies first.
    static RunConfig parse(const std::string& text,
                           const std::vector<std::pair<std::string, std::string>>& overrides = {});
    static RunConfig load(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, std::string>>& overrides = {});
};

/// Splits "key=value"; config-error when there is no '='.
std::pair<std::string, std::string> split_assignment(const std::string& text);

} // namespace bivad
