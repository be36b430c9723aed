#include "bivad/commands.hpp"

#include <cblas.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include "bivad/bounded_queue.hpp"

namespace bivad {

namespace fs = std::filesystem;

PlateauScheduler::PlateauScheduler(double lr, double decay, std::size_t patience,
                                   std::size_t stop_patience)
    : lr_(lr),
      decay_(decay),
      patience_(patience),
      stop_patience_(stop_patience),
      best_(std::numeric_limits<double>::infinity()) {}

bool PlateauScheduler::observe(double val_loss) {
    if (val_loss < best_) {
        best_ = val_loss;
        since_best_ = since_decay_ = 0;
        return true;
    }
    ++since_best_;
    if (++since_decay_ >= patience_) {
        lr_ *= decay_;
        since_decay_ = 0;
    }
    return false;
}

std::size_t worker_threads() {
    if (const char* env = std::getenv("BIVAD_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        require(end != env && *end == '\0' && v >= 1, ErrorCode::config_error,
                "BIVAD_THREADS must be a positive integer");
        return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

void set_blas_threads(std::size_t n) { openblas_set_num_threads(static_cast<int>(n)); }

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorCode::io_error, "cannot create " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
    return out;
}

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

} // namespace

template <typename T>
Var<T> clip_loss(const BiVadModel<T>& model, const ClipSample<T>& clip, const GaussianWindow& w) {
    const auto bundle = model.forward(clip);
    const auto positions = clip.predicted();
    Var<T> total;
    for (std::size_t i = 0; i < positions.size(); ++i) {
        auto l = combined_loss(Var<T>(clip.frames[positions[i]]), bundle.fused[i], w,
                               model.config().lambda)
                     .total;
        total = total.defined() ? ops::add(total, l) : l;
    }
    return ops::scale(total, static_cast<T>(1.0 / static_cast<double>(positions.size())));
}

template Var<float> clip_loss(const BiVadModel<float>&, const ClipSample<float>&, const GaussianWindow&);
template Var<double> clip_loss(const BiVadModel<double>&, const ClipSample<double>&, const GaussianWindow&);

TrainResult train_model(BiVadModel<float>& model, const RunConfig& cfg,
                        const std::vector<std::vector<Tensor<float>>>& videos, std::ostream* log,
                        const std::function<void()>& on_best) {
    const auto& mc = model.config();
    const auto& tc = cfg.train;
    std::vector<ClipRef> refs;
    for (std::size_t v = 0; v < videos.size(); ++v)
        for (auto t : clip_centers(videos[v].size(), mc.stride, mc.n)) refs.push_back({v, t});
    if (refs.size() < 2) fail(ErrorCode::config_error, "training data yields fewer than two clips");
    auto [train, val] = split_train_val(refs, tc.val_fraction, tc.seed);
    if (train.empty() || val.empty())
        fail(ErrorCode::config_error, "train/validation split left one side empty");
    if (tc.val_clips && val.size() > tc.val_clips) val.resize(tc.val_clips);

    const auto window = GaussianWindow::make(cfg.loss.window, cfg.loss.sigma);
    auto make = [&](const ClipRef& r) {
        return make_clip(videos[r.video], r.center, mc.stride, mc.n, mc.m);
    };
    const auto params = model.trainable_parameters();
    PlateauScheduler sched(tc.lr, tc.lr_decay, tc.plateau_patience, tc.early_stop_patience);
    TrainResult result;
    result.train_clips = train.size();
    result.val_clips = val.size();
    const auto start = std::chrono::steady_clock::now();

    for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        std::vector<ClipRef> order = train;
        std::mt19937_64 rng(tc.seed * 1000003ULL + epoch);
        std::shuffle(order.begin(), order.end(), rng);
        if (tc.clips_per_epoch && order.size() > tc.clips_per_epoch) order.resize(tc.clips_per_epoch);

        // Batches are materialized on a producer thread.
        using Batch = std::vector<ClipSample<float>>;
        BoundedQueue<Batch> queue(tc.prefetch);
        std::exception_ptr producer_error;
        std::thread producer([&] {
            try {
                for (std::size_t b = 0; b < order.size(); b += tc.batch_size) {
                    Batch batch;
                    for (std::size_t i = b; i < std::min(order.size(), b + tc.batch_size); ++i)
                        batch.push_back(make(order[i]));
                    if (!queue.push(std::move(batch))) break;
                }
            } catch (...) {
                producer_error = std::current_exception();
            }
            queue.close();
        });
        struct Joiner {
            BoundedQueue<Batch>& q;
            std::thread& t;
            ~Joiner() {
                q.close();
                if (t.joinable()) t.join();
            }
        } joiner{queue, producer};

        double loss_sum = 0.0;
        std::size_t seen = 0;
        while (auto batch = queue.pop()) {
            const auto scale = static_cast<float>(1.0 / static_cast<double>(batch->size()));
            for (const auto& clip : *batch) {
                auto loss = clip_loss(model, clip, window);
                loss_sum += loss.value()[0];
                ++seen;
                backward(ops::scale(loss, scale));
            }
            adam_step<float>(params, AdamConfig{sched.lr()});
        }
        producer.join();
        if (producer_error) std::rethrow_exception(producer_error);

        double val_sum = 0.0;
        {
            NoGradGuard guard;
            for (const auto& r : val) val_sum += clip_loss(model, make(r), window).value()[0];
        }
        EpochStats s;
        s.epoch = epoch;
        s.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
        s.val_loss = val_sum / static_cast<double>(val.size());
        s.lr = sched.lr();
        require(std::isfinite(s.train_loss) && std::isfinite(s.val_loss), ErrorCode::numeric_error,
                "training diverged at epoch " + std::to_string(epoch));
        s.improved = sched.observe(s.val_loss);
        s.seconds = seconds_since(epoch_start);
        result.epochs.push_back(s);
        if (s.improved && on_best) on_best();
        if (log)
            *log << "epoch " << epoch << " train_loss=" << fmt("%.6f", s.train_loss)
                 << " val_loss=" << fmt("%.6f", s.val_loss) << " lr=" << fmt("%.3g", s.lr)
                 << (s.improved ? " *" : "") << " (" << fmt("%.1f", s.seconds) << " s)" << std::endl;
        if (sched.should_stop()) {
            result.early_stopped = true;
            break;
        }
        if (tc.max_minutes > 0.0 && seconds_since(start) > 60.0 * tc.max_minutes) break;
    }
    result.mfl = sched.best();
    return result;
}

VideoScores score_video(const BiVadModel<float>& model, const std::vector<Tensor<float>>& frames,
                        const GaussianWindow& w, const std::vector<double>& etas,
                        std::size_t threads, bool want_maps) {
    require(!etas.empty(), ErrorCode::invalid_argument, "at least one fusion weight is required");
    const auto& mc = model.config();
    const auto centers = clip_centers(frames.size(), mc.stride, mc.n);
    VideoScores out;
    out.first_index = mc.margin();
    out.raw.assign(etas.size(), std::vector<double>(centers.size(), 0.0));
    if (want_maps) out.maps.resize(centers.size());
    if (centers.empty()) return out;

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        NoGradGuard guard;
        try {
            for (std::size_t i = next++; i < centers.size(); i = next++) {
                const auto clip = make_clip(frames, centers[i], mc.stride, mc.n, mc.m);
                const auto bundle = model.forward(clip);
                const auto& target = clip.frames[mc.n];
                const bool both = !bundle.forward.empty() && !bundle.backward.empty();
                for (std::size_t e = 0; e < etas.size(); ++e) {
                    const auto pred = both ? fuse<float>({bundle.forward[mc.m]}, {bundle.backward[mc.m]},
                                                         etas[e])[0]
                                           : bundle.fused[mc.m];
                    out.raw[e][i] = anomaly_score(target, pred.value(), w, mc.lambda);
                    if (want_maps && e == 0) out.maps[i] = error_map(target, pred.value(), w);
                }
            }
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next = centers.size();
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, centers.size()));
    if (threads == 1) {
        worker();
    } else {
        set_blas_threads(1);
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
    return out;
}

std::vector<std::vector<double>> normalize_scores(const std::vector<std::vector<double>>& raw,
                                                  bool per_video) {
    std::vector<std::vector<double>> out(raw.size());
    if (per_video) {
        for (std::size_t i = 0; i < raw.size(); ++i)
            if (!raw[i].empty()) out[i] = minmax_normalize(raw[i]);
        return out;
    }
    std::vector<double> all;
    for (const auto& r : raw) all.insert(all.end(), r.begin(), r.end());
    if (all.empty()) return out;
    const auto joint = minmax_normalize(all);
    auto it = joint.begin();
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i].assign(it, it + static_cast<std::ptrdiff_t>(raw[i].size()));
        it += static_cast<std::ptrdiff_t>(raw[i].size());
    }
    return out;
}

EvalReport evaluate(const std::vector<EvalInput>& videos, const EvalConfig& cfg) {
    require(!videos.empty(), ErrorCode::invalid_argument, "nothing to evaluate");
    EvalReport report;
    report.alpha = cfg.alpha;
    report.beta = cfg.beta;
    std::vector<double> scores;
    std::vector<int> labels;
    GroundTruth combined;
    std::vector<float> pixels;
    for (const auto& v : videos) {
        const std::size_t total = v.gt.frames(), scored = v.scores.size();
        if (scored > total || (total - scored) % 2 != 0)
            fail(ErrorCode::format_error, "video " + v.id + ": " + std::to_string(scored) +
                                              " scores cannot align with " + std::to_string(total) +
                                              " labels");
        const std::size_t margin = (total - scored) / 2;
        const auto gt = v.gt.slice(margin, scored);
        scores.insert(scores.end(), v.scores.begin(), v.scores.end());
        labels.insert(labels.end(), gt.frame_labels.begin(), gt.frame_labels.end());
        try {
            report.per_video_auc[v.id] = frame_auc(v.scores, gt.frame_labels);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::undefined_metric) throw;
        }
        if (cfg.rbdc || cfg.tbdc) {
            if (!gt.has_regions)
                fail(ErrorCode::unsupported_metric, "video " + v.id + " has no region masks");
            if (v.maps.size() != scored)
                fail(ErrorCode::format_error, "video " + v.id + " lacks error maps for its scores");
            for (const auto& m : v.maps) pixels.insert(pixels.end(), m.data().begin(), m.data().end());
        }
        combined.append(gt);
    }
    report.frames = scores.size();
    report.regions = combined.regions.size();
    report.auc = frame_auc(scores, labels);
    if (!(cfg.rbdc || cfg.tbdc)) return report;

    const auto rule = cfg.overlap == "iou" ? OverlapRule::iou : OverlapRule::gt_fraction;
    std::vector<DetectionSet> detections;
    for (double thr : quantile_thresholds(std::move(pixels), cfg.thresholds)) {
        DetectionSet set{thr, {}};
        std::size_t frame = 0;
        for (const auto& v : videos)
            for (const auto& m : v.maps) {
                auto boxes = extract_regions(m, thr, cfg.min_area, frame++);
                set.boxes.insert(set.boxes.end(), boxes.begin(), boxes.end());
            }
        detections.push_back(std::move(set));
    }
    if (cfg.rbdc) report.rbdc = rbdc(detections, combined, cfg.beta, rule);
    if (cfg.tbdc) report.tbdc = tbdc(detections, combined, cfg.alpha, cfg.beta, rule);
    return report;
}

void write_series(const fs::path& path, const std::vector<double>& values) {
    auto out = open_out(path);
    char buf[64];
    for (double v : values) {
        std::snprintf(buf, sizeof buf, "%.17g\n", v);
        out << buf;
    }
    if (!out) fail(ErrorCode::io_error, "failed writing " + path.string());
}

std::vector<double> read_series(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
    std::vector<double> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(std::stod(line));
        } catch (const std::exception&) {
            fail(ErrorCode::format_error, path.string() + ": malformed value '" + line + "'");
        }
    }
    return out;
}

void cmd_synth(const RunConfig& cfg, std::ostream& out) {
    const auto& s = cfg.synth;
    const fs::path root(cfg.data_root);
    ensure_dir(root / "train");
    ensure_dir(root / "test");
    auto spec_for = [&](std::size_t length, std::uint64_t seed) {
        SynthSpec spec;
        spec.height = s.height;
        spec.width = s.width;
        spec.length = length;
        spec.sprites = s.sprites;
        spec.sprite_size = s.sprite_size;
        spec.speed_min = s.speed_min;
        spec.speed_max = s.speed_max;
        spec.seed = seed;
        return spec;
    };
    char id[32];
    for (std::size_t i = 0; i < s.train_videos; ++i) {
        std::snprintf(id, sizeof id, "train_%03zu", i);
        auto video = synth_generate(spec_for(s.train_length, s.seed * 7919 + i), id);
        video.labels.reset();
        video.masks.reset();
        write_video(root, "train", video);
    }
    auto windows_log = open_out(root / "test" / "anomalies.txt");
    for (std::size_t i = 0; i < s.test_videos; ++i) {
        std::snprintf(id, sizeof id, "test_%03zu", i);
        auto spec = spec_for(s.test_length, s.seed * 7919 + 100000 + i);
        spec.anomalies = plan_anomalies(s.test_length, s.anomalies_per_video, s.anomaly_length,
                                        cfg.model.margin() + 4, s.sprites, spec.seed + 1);
        for (const auto& a : spec.anomalies)
            windows_log << id << " " << to_string(a.kind) << " " << a.begin << " " << a.end
                        << " sprite=" << a.sprite << "\n";
        write_video(root, "test", synth_generate(spec, id));
    }
    out << "wrote " << s.train_videos << " training and " << s.test_videos << " test videos to "
        << root.string() << "\n";
}

namespace {

std::vector<std::vector<Tensor<float>>> load_frames(const std::vector<VideoSource>& videos,
                                                    const ModelConfig& mc) {
    std::vector<std::vector<Tensor<float>>> out;
    for (const auto& v : videos)
        out.push_back(preprocess_video(v, mc.image_height, mc.image_width, mc.image_channels));
    return out;
}

} // namespace

TrainResult cmd_train(const RunConfig& cfg, std::ostream& out) {
    const fs::path dir(cfg.output_dir);
    ensure_dir(dir);
    open_out(dir / "config.txt") << cfg.dump();
    const auto videos = load_split(cfg.data_root, "train");
    const auto frames = load_frames(videos, cfg.model);
    std::size_t total = 0;
    for (const auto& f : frames) total += f.size();
    if (total == 0) fail(ErrorCode::config_error, "training split is empty");
    out << "loaded " << videos.size() << " training videos (" << total << " frames)" << std::endl;

    set_blas_threads(worker_threads());
    BiVadModel<float> model(cfg.model);
    out << "model parameters: " << model.store().total_elements() << std::endl;
    const auto ckpt = cfg.checkpoint_path();
    auto result = train_model(model, cfg, frames, &out, [&] { save_checkpoint(ckpt, model.store()); });

    auto log = open_out(dir / "train_log.csv");
    log << "epoch,train_loss,val_loss,lr,seconds\n";
    for (const auto& e : result.epochs)
        log << e.epoch << "," << fmt("%.9g", e.train_loss) << "," << fmt("%.9g", e.val_loss) << ","
            << fmt("%.9g", e.lr) << "," << fmt("%.3f", e.seconds) << "\n";
    auto summary = open_out(dir / "train_summary.txt");
    summary << "mfl=" << fmt("%.17g", result.mfl) << "\n"
            << "epochs=" << result.epochs.size() << "\n"
            << "early_stopped=" << (result.early_stopped ? "true" : "false") << "\n"
            << "train_clips=" << result.train_clips << "\n"
            << "val_clips=" << result.val_clips << "\n";
    out << "MFL (best validation loss) " << fmt("%.6f", result.mfl) << ", checkpoint "
        << ckpt.string() << std::endl;
    return result;
}

void cmd_infer(const RunConfig& cfg, std::ostream& out) {
    BiVadModel<float> model(cfg.model);
    load_checkpoint(cfg.checkpoint_path(), model.store());
    const auto videos = load_split(cfg.data_root, "test");
    const auto window = GaussianWindow::make(cfg.loss.window, cfg.loss.sigma);
    const auto dir = cfg.scores_path();
    for (const auto* sub : {"raw", "normalized", "errors"}) ensure_dir(dir / sub);
    const std::size_t threads = worker_threads();

    std::vector<std::vector<double>> raw;
    for (const auto& v : videos) {
        const auto frames = preprocess_video(v, cfg.model.image_height, cfg.model.image_width,
                                             cfg.model.image_channels);
        auto scores = score_video(model, frames, window, {cfg.model.eta}, threads, true);
        if (scores.raw[0].empty()) {
            out << v.id << ": too short for a full clip, skipped" << std::endl;
            raw.emplace_back();
            continue;
        }
        write_series(dir / "raw" / (v.id + ".txt"), scores.raw[0]);
        const std::size_t h = cfg.model.image_height, w = cfg.model.image_width;
        Tensor<float> maps({scores.maps.size(), 1, h, w});
        for (std::size_t i = 0; i < scores.maps.size(); ++i)
            std::copy_n(scores.maps[i].ptr(), h * w, maps.ptr() + i * h * w);
        save_bvt(dir / "errors" / (v.id + ".bvt"), maps);
        if (cfg.infer.export_maps) {
            const auto map_dir = dir / "maps" / v.id;
            ensure_dir(map_dir);
            float peak = 1e-6f;
            for (const auto& m : scores.maps)
                for (float x : m.data()) peak = std::max(peak, x);
            char name[32];
            for (std::size_t i = 0; i < scores.maps.size(); ++i) {
                std::snprintf(name, sizeof name, "%06zu.pgm", scores.first_index + i);
                write_pgm(map_dir / name, scores.maps[i], 0.0f, peak);
            }
        }
        out << v.id << ": scored frames " << scores.first_index << ".."
            << scores.first_index + scores.raw[0].size() - 1 << std::endl;
        raw.push_back(std::move(scores.raw[0]));
    }

    const auto normalized = normalize_scores(raw, cfg.infer.per_video_normalization);
    for (std::size_t i = 0; i < videos.size(); ++i)
        if (!normalized[i].empty())
            write_series(dir / "normalized" / (videos[i].id + ".txt"), normalized[i]);
}

namespace {

// Nearest-neighbour resample of an id mask to the scoring resolution.
Tensor<float> resample_mask(const Tensor<float>& mask, std::size_t h, std::size_t w) {
    const std::size_t mh = mask.dim(mask.rank() - 2), mw = mask.dim(mask.rank() - 1);
    if (mh == h && mw == w) return mask.reshaped({h, w});
    Tensor<float> out({h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const auto sy = std::min(mh - 1, static_cast<std::size_t>((y + 0.5) * mh / h));
            const auto sx = std::min(mw - 1, static_cast<std::size_t>((x + 0.5) * mw / w));
            out[y * w + x] = mask[sy * mw + sx];
        }
    return out;
}

} // namespace

EvalReport cmd_eval(const RunConfig& cfg, std::ostream& out) {
    const auto videos = load_split(cfg.data_root, "test");
    const auto dir = cfg.scores_path();
    const bool regions = cfg.eval.rbdc || cfg.eval.tbdc;
    std::vector<EvalInput> inputs;
    for (const auto& v : videos) {
        if (!v.labels) fail(ErrorCode::format_error, "video " + v.id + " has no frame labels");
        const auto path = dir / "normalized" / (v.id + ".txt");
        if (!fs::exists(path)) {
            out << v.id << ": no scores, skipped" << std::endl;
            continue;
        }
        EvalInput in;
        in.id = v.id;
        in.scores = read_series(path);
        if (regions) {
            if (!v.masks)
                fail(ErrorCode::unsupported_metric, "RBDC/TBDC need region masks; " + v.id + " has none");
            const auto maps = load_bvt(dir / "errors" / (v.id + ".bvt"));
            require(maps.rank() == 4 && maps.dim(0) == in.scores.size() && maps.dim(1) == 1,
                    ErrorCode::format_error, "error maps of " + v.id + " do not match its scores");
            const std::size_t h = maps.dim(2), w = maps.dim(3);
            for (std::size_t i = 0; i < maps.dim(0); ++i)
                in.maps.emplace_back(Shape{h, w},
                                     std::vector<float>(maps.ptr() + i * h * w, maps.ptr() + (i + 1) * h * w));
            std::vector<Tensor<float>> masks;
            for (const auto& m : *v.masks) masks.push_back(resample_mask(m, h, w));
            in.gt = GroundTruth::from_masks(*v.labels, masks);
        } else {
            in.gt = GroundTruth::from_labels(*v.labels);
        }
        inputs.push_back(std::move(in));
    }
    if (inputs.empty()) fail(ErrorCode::io_error, "no score files under " + dir.string());
    const auto report = evaluate(inputs, cfg.eval);
    ensure_dir(cfg.output_dir);
    report.write_text(fs::path(cfg.output_dir) / "report.txt");
    report.write_csv(fs::path(cfg.output_dir) / "report.csv");
    out << "frame AUC " << fmt("%.4f", report.auc);
    if (report.rbdc) out << ", RBDC " << fmt("%.4f", *report.rbdc);
    if (report.tbdc) out << ", TBDC " << fmt("%.4f", *report.tbdc);
    out << " over " << report.frames << " frames" << std::endl;
    return report;
}

BenchResult cmd_bench(const RunConfig& cfg, std::ostream& out) {
    const auto& mc = cfg.model;
    BiVadModel<float> model(mc);
    if (!cfg.bench.random_init) load_checkpoint(cfg.checkpoint_path(), model.store());
    set_blas_threads(1);
    const auto window = GaussianWindow::make(cfg.loss.window, cfg.loss.sigma);

    SynthSpec spec;
    spec.height = mc.image_height;
    spec.width = mc.image_width;
    spec.length = cfg.bench.frames + cfg.bench.warmup + 2 * mc.margin();
    spec.sprite_size = std::max<std::size_t>(2, mc.image_width / 8);
    spec.sprites = std::max<std::size_t>(1, std::min<std::size_t>(3, mc.image_height / spec.sprite_size));
    spec.seed = cfg.synth.seed;
    const auto frames = preprocess_video(synth_generate(spec, "bench"), mc.image_height,
                                         mc.image_width, mc.image_channels);

    const auto centers = clip_centers(frames.size(), mc.stride, mc.n);
    std::vector<double> times;
    NoGradGuard guard;
    for (std::size_t i = 0; i < centers.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto clip = make_clip(frames, centers[i], mc.stride, mc.n, mc.m);
        const auto bundle = model.forward(clip);
        volatile double score = anomaly_score(clip.frames[mc.n], bundle.fused[mc.m].value(), window, mc.lambda);
        (void)score;
        const double ms = 1000.0 * seconds_since(t0);
        if (i >= cfg.bench.warmup) times.push_back(ms);
    }
    BenchResult r;
    r.frames = times.size();
    r.latency_frames = mc.n * mc.stride;
    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t k = sorted.size();
    r.median_ms = k == 0 ? 0.0 : (k % 2 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]));
    double sum = 0.0;
    for (double t : times) sum += t;
    r.mean_ms = k ? sum / static_cast<double>(k) : 0.0;
    r.fps = r.median_ms > 0.0 ? 1000.0 / r.median_ms : 0.0;
    out << "direction_mode=" << to_string(mc.direction_mode) << "\n"
        << "frames=" << r.frames << "\n"
        << "ms_per_frame=" << fmt("%.3f", r.median_ms) << "\n"
        << "mean_ms_per_frame=" << fmt("%.3f", r.mean_ms) << "\n"
        << "frames_per_second=" << fmt("%.2f", r.fps) << "\n"
        << "latency_frames=" << r.latency_frames << std::endl;
    return r;
}

} // namespace bivad
