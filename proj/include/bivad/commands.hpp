#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "bivad/config.hpp"
#include "bivad/data.hpp"
#include "bivad/objective.hpp"

namespace bivad {

/// Halves (by `decay`) the learning rate after `patience` epochs without a
/// new best validation loss, and signals early stopping after
/// `stop_patience` such epochs.
class PlateauScheduler {
public:
    PlateauScheduler(double lr, double decay, std::size_t patience, std::size_t stop_patience);

    /// Returns true when `val_loss` is a new best.
    bool observe(double val_loss);
    double lr() const noexcept { return lr_; }
    double best() const noexcept { return best_; }
    bool should_stop() const noexcept { return since_best_ >= stop_patience_; }

private:
    double lr_, decay_;
    std::size_t patience_, stop_patience_;
    double best_;
    std::size_t since_best_ = 0;
    std::size_t since_decay_ = 0;
};

/// Worker threads from BIVAD_THREADS, else the hardware concurrency.
std::size_t worker_threads();

struct ClipRef {
    std::size_t video = 0;
    std::size_t center = 0;
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    double seconds = 0.0;
    bool improved = false;
};

struct TrainResult {
    std::vector<EpochStats> epochs;
    double mfl = 0.0; // best validation loss
    std::size_t train_clips = 0;
    std::size_t val_clips = 0;
    bool early_stopped = false;
};

/// Mean combined loss over the fused predictions of one clip.
template <typename T>
Var<T> clip_loss(const BiVadModel<T>& model, const ClipSample<T>& clip, const GaussianWindow& w);

/// Trains in place; `on_best` runs whenever validation improves (the model
/// then holds the best weights so far).
TrainResult train_model(BiVadModel<float>& model, const RunConfig& cfg,
                        const std::vector<std::vector<Tensor<float>>>& videos, std::ostream* log,
                        const std::function<void()>& on_best = {});

/// Scores of every frame with a full clip, for several fusion weights from
/// one bi-directional pass. first_index is the video index of entry 0.
struct VideoScores {
    std::size_t first_index = 0;
    std::vector<std::vector<double>> raw; // [eta][frame]
    std::vector<Tensor<float>> maps;      // [H,W] per frame, for etas.front()
};

VideoScores score_video(const BiVadModel<float>& model, const std::vector<Tensor<float>>& frames,
                        const GaussianWindow& w, const std::vector<double>& etas,
                        std::size_t threads, bool want_maps);

/// Min-max normalization per video, or jointly over all videos. Empty
/// series stay empty.
std::vector<std::vector<double>> normalize_scores(const std::vector<std::vector<double>>& raw,
                                                  bool per_video);

struct EvalInput {
    std::string id;
    std::vector<double> scores; // normalized, scored frames only
    GroundTruth gt;             // full video
    std::vector<Tensor<float>> maps; // optional, scored frames only
};

EvalReport evaluate(const std::vector<EvalInput>& videos, const EvalConfig& cfg);

// Commands. Each prints progress to `out` and throws bivad::Error.
void cmd_synth(const RunConfig& cfg, std::ostream& out);
TrainResult cmd_train(const RunConfig& cfg, std::ostream& out);
void cmd_infer(const RunConfig& cfg, std::ostream& out);
EvalReport cmd_eval(const RunConfig& cfg, std::ostream& out);

struct BenchResult {
    double median_ms = 0.0;
    double mean_ms = 0.0;
    double fps = 0.0;
    std::size_t frames = 0;
    std::size_t latency_frames = 0;
};
BenchResult cmd_bench(const RunConfig& cfg, std::ostream& out);

/// Plain-text score series, one value per line.
void write_series(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<double> read_series(const std::filesystem::path& path);

} // namespace bivad
