#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bivad/metrics.hpp"
#include "bivad/tensor.hpp"

namespace bivad {

/// Native-resolution pixels [C,H,W] and the range they span.
struct Frame {
    Tensor<float> pixels;
    float lo = 0.0f;
    float hi = 255.0f;
};

struct VideoSource {
    std::string id;
    std::vector<Frame> frames;
    std::optional<std::vector<int>> labels;
    std::optional<std::vector<Tensor<float>>> masks; // [1,H,W] per frame, object ids

    GroundTruth ground_truth() const;
};

/// PNG (8/16-bit, gray or color; alpha dropped) or binary/ASCII PGM/PPM.
Frame read_image(const std::filesystem::path& path);
/// pixels [1,H,W] or [3,H,W] (or [H,W]) mapped from [lo,hi] to 0..255.
void write_png(const std::filesystem::path& path, const Tensor<float>& pixels, float lo, float hi);
void write_pgm(const std::filesystem::path& path, const Tensor<float>& pixels, float lo, float hi);

/// A directory of images (sorted by file name, byte-wise) or a BVT1 file
/// [T,C,H,W] already in [-1,1].
VideoSource load_video(const std::filesystem::path& path);

/// Videos under `root/split`, sorted by id. For test splits, `<id>_gt.bvt`
/// and `<id>_masks.bvt` are attached when present.
std::vector<VideoSource> load_split(const std::filesystem::path& root, const std::string& split);

/// Half-pixel bilinear resize to height x width, color-to-gray conversion
/// when asked, and a linear map of [lo,hi] onto [-1,1].
Tensor<float> preprocess(const Frame& frame, std::size_t height, std::size_t width,
                         std::size_t channels);
std::vector<Tensor<float>> preprocess_video(const VideoSource& video, std::size_t height,
                                            std::size_t width, std::size_t channels);

/// Seeded shuffle, then the first round(fraction * N) items go to validation.
template <typename Item>
std::pair<std::vector<Item>, std::vector<Item>> split_train_val(std::vector<Item> items,
                                                                double fraction,
                                                                std::uint64_t seed) {
    require(fraction > 0.0 && fraction < 1.0, ErrorCode::invalid_argument,
            "validation fraction must lie in (0, 1)");
    std::mt19937_64 rng(seed);
    std::shuffle(items.begin(), items.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(items.size())));
    std::vector<Item> val(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<Item> train(items.begin() + static_cast<std::ptrdiff_t>(n_val), items.end());
    return {std::move(train), std::move(val)};
}

enum class AnomalyKind { speed_jump, direction_reversal, novel_shape, off_path };

std::string to_string(AnomalyKind kind);
AnomalyKind parse_anomaly_kind(const std::string& text);

struct AnomalyWindow {
    AnomalyKind kind = AnomalyKind::speed_jump;
    std::size_t begin = 0; // inclusive
    std::size_t end = 0;   // inclusive
    std::size_t sprite = 0;
};

struct SynthSpec {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t length = 600;
    std::size_t sprites = 3;
    std::size_t sprite_size = 8;
    double speed_min = 1.0;
    double speed_max = 2.0;
    std::vector<AnomalyWindow> anomalies;
    std::uint64_t seed = 0;
};

/// Sprites moving horizontally in lanes and bouncing off the walls. Frames
/// are [1,H,W] in [0,1]; labels and masks mark the anomaly windows.
VideoSource synth_generate(const SynthSpec& spec, const std::string& id = "synth");

/// Draws `count` non-overlapping windows of `window` frames, cycling through
/// the anomaly kinds, away from the first and last `margin` frames.
std::vector<AnomalyWindow> plan_anomalies(std::size_t length, std::size_t count, std::size_t window,
                                          std::size_t margin, std::size_t sprites,
                                          std::uint64_t seed);

/// Writes frames as PNG under `<root>/<split>/<id>/`, plus ground truth next
/// to test videos.
void write_video(const std::filesystem::path& root, const std::string& split,
                 const VideoSource& video);

} // namespace bivad
