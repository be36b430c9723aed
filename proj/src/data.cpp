#include "bivad/data.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace bivad {

namespace fs = std::filesystem;

namespace {

std::string lower_extension(const fs::path& p) {
    auto ext = p.extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return ext;
}

bool is_image(const fs::path& p) {
    const auto ext = lower_extension(p);
    return ext == ".png" || ext == ".pgm" || ext == ".ppm";
}

Frame read_png(const fs::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        fail(ErrorCode::io_error, "cannot read PNG " + path.string() + ": " + image.message);
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&image);
        fail(ErrorCode::format_error, "cannot decode PNG " + path.string() + ": " + image.message);
    }
    const std::size_t c = color ? 3 : 1, h = image.height, w = image.width;
    Frame f{Tensor<float>({c, h, w}), 0.0f, 255.0f};
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch)
                f.pixels[(ch * h + y) * w + x] = buffer[(y * w + x) * c + ch];
    return f;
}

// Reads the next header token, skipping whitespace and '#' comments.
std::string pnm_token(std::istream& in) {
    std::string tok;
    char ch = 0;
    while (in.get(ch)) {
        if (ch == '#') {
            std::string rest;
            std::getline(in, rest);
        } else if (!std::isspace(static_cast<unsigned char>(ch))) {
            tok.push_back(ch);
            break;
        }
    }
    while (in.get(ch) && !std::isspace(static_cast<unsigned char>(ch))) tok.push_back(ch);
    return tok;
}

Frame read_pnm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
    const auto magic = pnm_token(in);
    require(magic == "P2" || magic == "P3" || magic == "P5" || magic == "P6", ErrorCode::format_error,
            path.string() + " is not a PGM/PPM file");
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(pnm_token(in));
        h = std::stoul(pnm_token(in));
        maxval = std::stoul(pnm_token(in));
    } catch (const std::exception&) {
        fail(ErrorCode::format_error, "malformed header in " + path.string());
    }
    require(w > 0 && h > 0 && maxval > 0 && maxval < 65536, ErrorCode::format_error,
            "unsupported PNM header in " + path.string());
    const std::size_t c = (magic == "P3" || magic == "P6") ? 3 : 1;
    Frame f{Tensor<float>({c, h, w}), 0.0f, static_cast<float>(maxval)};
    const bool ascii = magic == "P2" || magic == "P3";
    for (std::size_t i = 0; i < h * w * c; ++i) {
        unsigned v = 0;
        if (ascii) {
            const auto tok = pnm_token(in);
            require(!tok.empty(), ErrorCode::format_error, "truncated " + path.string());
            v = static_cast<unsigned>(std::stoul(tok));
        } else if (maxval < 256) {
            const int b = in.get();
            require(b != EOF, ErrorCode::format_error, "truncated " + path.string());
            v = static_cast<unsigned>(b);
        } else {
            const int hi = in.get(), lo = in.get();
            require(lo != EOF, ErrorCode::format_error, "truncated " + path.string());
            v = static_cast<unsigned>(hi) << 8 | static_cast<unsigned>(lo);
        }
        const std::size_t pix = i / c, ch = i % c;
        f.pixels[ch * h * w + pix] = static_cast<float>(v);
    }
    return f;
}

std::vector<std::uint8_t> to_bytes(const Tensor<float>& pixels, float lo, float hi,
                                   std::size_t& c, std::size_t& h, std::size_t& w) {
    require(pixels.rank() == 2 || pixels.rank() == 3, ErrorCode::invalid_argument,
            "image pixels must be [H,W] or [C,H,W]");
    c = pixels.rank() == 3 ? pixels.dim(0) : 1;
    h = pixels.dim(pixels.rank() - 2);
    w = pixels.dim(pixels.rank() - 1);
    require(c == 1 || c == 3, ErrorCode::invalid_argument, "images need 1 or 3 channels");
    require(hi > lo, ErrorCode::invalid_argument, "pixel range must be increasing");
    std::vector<std::uint8_t> out(c * h * w);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h * w; ++i) {
            const double v = (pixels[ch * h * w + i] - lo) / (hi - lo) * 255.0;
            out[i * c + ch] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        }
    return out;
}

} // namespace

Frame read_image(const fs::path& path) {
    if (!fs::exists(path)) fail(ErrorCode::io_error, "no such file " + path.string());
    const auto ext = lower_extension(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".pgm" || ext == ".ppm") return read_pnm(path);
    fail(ErrorCode::format_error, "unsupported image type " + path.string());
}

void write_png(const fs::path& path, const Tensor<float>& pixels, float lo, float hi) {
    std::size_t c = 0, h = 0, w = 0;
    const auto bytes = to_bytes(pixels, lo, hi, c, h, w);
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr))
        fail(ErrorCode::io_error, "cannot write PNG " + path.string() + ": " + image.message);
}

void write_pgm(const fs::path& path, const Tensor<float>& pixels, float lo, float hi) {
    std::size_t c = 0, h = 0, w = 0;
    const auto bytes = to_bytes(pixels, lo, hi, c, h, w);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
    out << (c == 3 ? "P6" : "P5") << "\n" << w << " " << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::io_error, "failed writing " + path.string());
}

GroundTruth VideoSource::ground_truth() const {
    require(labels.has_value(), ErrorCode::format_error, "video " + id + " has no labels");
    if (masks) return GroundTruth::from_masks(*labels, *masks);
    return GroundTruth::from_labels(*labels);
}

VideoSource load_video(const fs::path& path) {
    VideoSource video;
    video.id = path.stem().string();
    if (fs::is_regular_file(path)) {
        const auto t = load_bvt(path);
        require(t.rank() == 4, ErrorCode::format_error,
                path.string() + " must hold [T,C,H,W], got " + shape_str(t.shape()));
        const Shape frame_shape{t.dim(1), t.dim(2), t.dim(3)};
        const std::size_t n = shape_numel(frame_shape);
        for (std::size_t i = 0; i < t.dim(0); ++i)
            video.frames.push_back(
                {Tensor<float>(frame_shape, std::vector<float>(t.ptr() + i * n, t.ptr() + (i + 1) * n)),
                 -1.0f, 1.0f});
        return video;
    }
    if (!fs::is_directory(path)) fail(ErrorCode::io_error, "no such video " + path.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path))
        if (entry.is_regular_file() && is_image(entry.path())) files.push_back(entry.path());
    if (files.empty()) fail(ErrorCode::io_error, "no frames in " + path.string());
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    for (const auto& f : files) {
        video.frames.push_back(read_image(f));
        require(video.frames.back().pixels.shape() == video.frames.front().pixels.shape(),
                ErrorCode::format_error, "frame " + f.string() + " differs in size from the first frame");
    }
    return video;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace

std::vector<VideoSource> load_split(const fs::path& root, const std::string& split) {
    const auto dir = root / split;
    if (!fs::is_directory(dir)) fail(ErrorCode::io_error, "missing dataset split " + dir.string());
    std::vector<fs::path> entries;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (entry.is_directory() ||
            (entry.is_regular_file() && lower_extension(entry.path()) == ".bvt" &&
             !ends_with(name, "_gt.bvt") && !ends_with(name, "_masks.bvt")))
            entries.push_back(entry.path());
    }
    std::sort(entries.begin(), entries.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    std::vector<VideoSource> videos;
    for (const auto& e : entries) {
        auto video = load_video(e);
        const auto gt = dir / (video.id + "_gt.bvt");
        if (fs::exists(gt)) {
            const auto t = load_bvt(gt);
            require(t.numel() == video.frames.size(), ErrorCode::format_error,
                    gt.string() + " has " + std::to_string(t.numel()) + " labels for " +
                        std::to_string(video.frames.size()) + " frames");
            std::vector<int> labels;
            for (float v : t.data()) labels.push_back(v > 0.5f ? 1 : 0);
            video.labels = std::move(labels);
        }
        const auto masks = dir / (video.id + "_masks.bvt");
        if (fs::exists(masks)) {
            const auto t = load_bvt(masks);
            require(t.rank() == 4 && t.dim(0) == video.frames.size() && t.dim(1) == 1,
                    ErrorCode::format_error, masks.string() + " must be [T,1,H,W] matching the video");
            const Shape s{1, t.dim(2), t.dim(3)};
            const std::size_t n = shape_numel(s);
            std::vector<Tensor<float>> list;
            for (std::size_t i = 0; i < t.dim(0); ++i)
                list.emplace_back(s, std::vector<float>(t.ptr() + i * n, t.ptr() + (i + 1) * n));
            video.masks = std::move(list);
        }
        videos.push_back(std::move(video));
    }
    if (videos.empty()) fail(ErrorCode::io_error, "no videos in " + dir.string());
    return videos;
}

Tensor<float> preprocess(const Frame& frame, std::size_t height, std::size_t width,
                         std::size_t channels) {
    const auto& src = frame.pixels;
    require(src.rank() == 3, ErrorCode::invalid_argument, "frame pixels must be [C,H,W]");
    require(frame.hi > frame.lo, ErrorCode::invalid_argument, "pixel range must be increasing");
    const std::size_t c_in = src.dim(0), h_in = src.dim(1), w_in = src.dim(2);
    require(channels == c_in || (channels == 1 && c_in == 3), ErrorCode::invalid_argument,
            "cannot convert " + std::to_string(c_in) + " channels to " + std::to_string(channels));

    Tensor<float> plane_src({h_in, w_in});
    Tensor<float> out({channels, height, width});
    const double scale = 2.0 / (static_cast<double>(frame.hi) - frame.lo);
    const double sy = static_cast<double>(h_in) / height, sx = static_cast<double>(w_in) / width;
    static constexpr double kLuma[3] = {0.299, 0.587, 0.114};
    for (std::size_t ch = 0; ch < channels; ++ch) {
        // Source plane for this output channel.
        for (std::size_t i = 0; i < h_in * w_in; ++i) {
            if (channels == c_in) {
                plane_src[i] = src[ch * h_in * w_in + i];
            } else {
                double v = 0.0;
                for (std::size_t k = 0; k < 3; ++k) v += kLuma[k] * src[k * h_in * w_in + i];
                plane_src[i] = static_cast<float>(v);
            }
        }
        for (std::size_t y = 0; y < height; ++y) {
            const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h_in - 1));
            const auto y0 = static_cast<std::size_t>(fy);
            const std::size_t y1 = std::min(y0 + 1, h_in - 1);
            const double ty = fy - y0;
            for (std::size_t x = 0; x < width; ++x) {
                const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w_in - 1));
                const auto x0 = static_cast<std::size_t>(fx);
                const std::size_t x1 = std::min(x0 + 1, w_in - 1);
                const double tx = fx - x0;
                const double top = plane_src[y0 * w_in + x0] * (1 - tx) + plane_src[y0 * w_in + x1] * tx;
                const double bot = plane_src[y1 * w_in + x0] * (1 - tx) + plane_src[y1 * w_in + x1] * tx;
                const double v = top * (1 - ty) + bot * ty;
                out[(ch * height + y) * width + x] = static_cast<float>((v - frame.lo) * scale - 1.0);
            }
        }
    }
    return out;
}

std::vector<Tensor<float>> preprocess_video(const VideoSource& video, std::size_t height,
                                            std::size_t width, std::size_t channels) {
    std::vector<Tensor<float>> out;
    out.reserve(video.frames.size());
    for (const auto& f : video.frames) out.push_back(preprocess(f, height, width, channels));
    return out;
}

std::string to_string(AnomalyKind kind) {
    switch (kind) {
    case AnomalyKind::speed_jump: return "speed_jump";
    case AnomalyKind::direction_reversal: return "direction_reversal";
    case AnomalyKind::novel_shape: return "novel_shape";
    case AnomalyKind::off_path: return "off_path";
    }
    return "?";
}

AnomalyKind parse_anomaly_kind(const std::string& text) {
    for (auto k : {AnomalyKind::speed_jump, AnomalyKind::direction_reversal, AnomalyKind::novel_shape,
                   AnomalyKind::off_path})
        if (text == to_string(k)) return k;
    fail(ErrorCode::config_error, "unknown anomaly kind '" + text + "'");
}

namespace {

constexpr float kBackground = 0.1f;
constexpr float kSprite = 0.9f;

struct Sprite {
    double x = 0.0, y = 0.0, vx = 0.0;
    double lane_y = 0.0;
};

void paint(Tensor<float>& img, Tensor<float>* mask, float id, long x0, long y0, long size,
           bool ring) {
    const long h = static_cast<long>(img.dim(1)), w = static_cast<long>(img.dim(2));
    for (long y = y0; y < y0 + size; ++y)
        for (long x = x0; x < x0 + size; ++x) {
            if (y < 0 || x < 0 || y >= h || x >= w) continue;
            if (ring) {
                const bool border = y < y0 + 2 || y >= y0 + size - 2 || x < x0 + 2 || x >= x0 + size - 2;
                if (!border) continue;
            }
            img[static_cast<std::size_t>(y * w + x)] = kSprite;
            if (mask) (*mask)[static_cast<std::size_t>(y * w + x)] = id;
        }
}

} // namespace

VideoSource synth_generate(const SynthSpec& spec, const std::string& id) {
    require(spec.sprites >= 1 && spec.sprite_size >= 2 && spec.width > 2 * spec.sprite_size &&
                spec.height >= spec.sprites * spec.sprite_size,
            ErrorCode::config_error, "synthetic frame too small for its sprites");
    require(spec.speed_min > 0.0 && spec.speed_max >= spec.speed_min, ErrorCode::config_error,
            "synthetic speeds must satisfy 0 < min <= max");
    for (const auto& a : spec.anomalies)
        require(a.begin <= a.end && a.end < spec.length && a.sprite < spec.sprites,
                ErrorCode::config_error, "anomaly window outside the video");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double size = static_cast<double>(spec.sprite_size);
    const double max_x = static_cast<double>(spec.width) - size;
    const double lane_gap = static_cast<double>(spec.height) / static_cast<double>(spec.sprites);
    std::vector<Sprite> sprites(spec.sprites);
    for (std::size_t i = 0; i < spec.sprites; ++i) {
        auto& s = sprites[i];
        s.lane_y = std::floor(lane_gap * (static_cast<double>(i) + 0.5) - size / 2.0);
        s.y = s.lane_y;
        s.x = unit(rng) * max_x;
        const double speed = spec.speed_min + unit(rng) * (spec.speed_max - spec.speed_min);
        s.vx = unit(rng) < 0.5 ? -speed : speed;
    }

    VideoSource video;
    video.id = id;
    video.labels = std::vector<int>(spec.length, 0);
    video.masks = std::vector<Tensor<float>>();
    const Shape shape{1, spec.height, spec.width};
    for (std::size_t t = 0; t < spec.length; ++t) {
        Tensor<float> img(shape, kBackground);
        Tensor<float> mask(shape, 0.0f);
        for (std::size_t i = 0; i < spec.sprites; ++i) {
            auto& s = sprites[i];
            const AnomalyWindow* active = nullptr;
            for (const auto& a : spec.anomalies)
                if (a.sprite == i && t >= a.begin && t <= a.end) active = &a;

            bool ring = false;
            long draw_size = static_cast<long>(spec.sprite_size);
            double step = s.vx;
            double dy = 0.0;
            if (active) {
                const std::size_t k = t - active->begin, span = active->end - active->begin + 1;
                switch (active->kind) {
                case AnomalyKind::speed_jump: step = 4.0 * s.vx; break;
                case AnomalyKind::direction_reversal: step = (k / 2) % 2 == 0 ? -s.vx : s.vx; break;
                case AnomalyKind::novel_shape:
                    ring = true;
                    draw_size = static_cast<long>(spec.sprite_size * 7 / 4);
                    break;
                case AnomalyKind::off_path: {
                    // Leave the lane towards the frame center, then come back.
                    const double toward = s.lane_y < static_cast<double>(spec.height) / 2.0 ? 1.0 : -1.0;
                    const double v = std::abs(s.vx);
                    dy = k < span / 2 ? toward * v : (k < 2 * (span / 2) ? -toward * v : 0.0);
                    break;
                }
                }
            }
            const double cx = s.x + size / 2.0, cy = s.y + size / 2.0;
            const long x0 = std::lround(cx - draw_size / 2.0), y0 = std::lround(cy - draw_size / 2.0);
            paint(img, active ? &mask : nullptr, static_cast<float>(i + 1), x0, y0, draw_size, ring);

            // Advance with wall bounces; off-path motion returns to the lane.
            s.x += step;
            if (s.x < 0.0) {
                s.x = -s.x;
                s.vx = std::abs(s.vx);
            } else if (s.x > max_x) {
                s.x = 2.0 * max_x - s.x;
                s.vx = -std::abs(s.vx);
            }
            s.x = std::clamp(s.x, 0.0, max_x);
            s.y = std::clamp(s.y + dy, 0.0, static_cast<double>(spec.height) - size);
            if (!active || active->kind != AnomalyKind::off_path) s.y = s.lane_y;
        }
        bool any = false;
        for (float v : mask.data()) any = any || v > 0.0f;
        (*video.labels)[t] = any ? 1 : 0;
        video.frames.push_back({std::move(img), 0.0f, 1.0f});
        video.masks->push_back(std::move(mask));
    }
    return video;
}

std::vector<AnomalyWindow> plan_anomalies(std::size_t length, std::size_t count, std::size_t window,
                                          std::size_t margin, std::size_t sprites,
                                          std::uint64_t seed) {
    std::vector<AnomalyWindow> out;
    if (count == 0) return out;
    require(length > 2 * margin + count * (window + 1), ErrorCode::config_error,
            "video too short for the requested anomaly windows");
    std::mt19937_64 rng(seed);
    // Evenly spaced slots with random placement inside each slot.
    const std::size_t usable = length - 2 * margin;
    const std::size_t slot = usable / count;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t slack = slot > window + 1 ? slot - window - 1 : 0;
        const std::size_t begin = margin + i * slot + (slack ? rng() % slack : 0);
        out.push_back({static_cast<AnomalyKind>(i % 4), begin, begin + window - 1,
                       static_cast<std::size_t>(rng() % sprites)});
    }
    return out;
}

void write_video(const fs::path& root, const std::string& split, const VideoSource& video) {
    const auto dir = root / split / video.id;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorCode::io_error, "cannot create " + dir.string() + ": " + ec.message());
    char name[32];
    for (std::size_t i = 0; i < video.frames.size(); ++i) {
        std::snprintf(name, sizeof name, "%06zu.png", i);
        const auto& f = video.frames[i];
        write_png(dir / name, f.pixels, f.lo, f.hi);
    }
    if (video.labels) {
        Tensor<float> labels({video.labels->size()});
        for (std::size_t i = 0; i < labels.numel(); ++i) labels[i] = static_cast<float>((*video.labels)[i]);
        save_bvt(root / split / (video.id + "_gt.bvt"), labels);
    }
    if (video.masks && !video.masks->empty()) {
        const auto& first = video.masks->front();
        const std::size_t n = first.numel();
        Tensor<float> all({video.masks->size(), 1, first.dim(first.rank() - 2), first.dim(first.rank() - 1)});
        for (std::size_t i = 0; i < video.masks->size(); ++i)
            std::copy_n((*video.masks)[i].ptr(), n, all.ptr() + i * n);
        save_bvt(root / split / (video.id + "_masks.bvt"), all);
    }
}

} // namespace bivad
