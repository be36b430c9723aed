#include "bivad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace bivad {

double frame_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    require(scores.size() == labels.size(), ErrorCode::invalid_argument,
            "scores and labels differ in length (" + std::to_string(scores.size()) + " vs " +
                std::to_string(labels.size()) + ")");
    std::size_t pos = 0;
    for (int l : labels) {
        require(l == 0 || l == 1, ErrorCode::invalid_argument, "labels must be 0 or 1");
        pos += static_cast<std::size_t>(l);
    }
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) fail(ErrorCode::undefined_metric, "AUC needs both classes");
    for (double s : scores) require(std::isfinite(s), ErrorCode::numeric_error, "non-finite score");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    // Sum of 1-based average ranks of the positives.
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]]) rank_sum += rank;
        i = j;
    }
    const double p = static_cast<double>(pos), n = static_cast<double>(neg);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

std::size_t intersection_area(const Box& a, const Box& b) {
    const std::size_t x0 = std::max(a.x0, b.x0), y0 = std::max(a.y0, b.y0);
    const std::size_t x1 = std::min(a.x1, b.x1), y1 = std::min(a.y1, b.y1);
    if (x0 > x1 || y0 > y1) return 0;
    return (x1 - x0 + 1) * (y1 - y0 + 1);
}

double iou(const Box& a, const Box& b) {
    const double inter = static_cast<double>(intersection_area(a, b));
    return inter / (static_cast<double>(a.area() + b.area()) - inter);
}

std::vector<RegionBox> extract_regions(const Tensor<float>& error_map, double threshold,
                                       std::size_t min_area, std::size_t frame_index) {
    require(error_map.rank() == 2, ErrorCode::invalid_argument, "error map must be [H,W]");
    require(threshold > 0.0, ErrorCode::invalid_argument, "region threshold must be positive");
    const std::size_t h = error_map.dim(0), w = error_map.dim(1);
    std::vector<char> seen(h * w, 0);
    std::vector<RegionBox> out;
    std::vector<std::size_t> queue;
    for (std::size_t start = 0; start < h * w; ++start) {
        if (seen[start] || error_map[start] < threshold) continue;
        RegionBox r;
        r.frame_index = frame_index;
        r.box = {start % w, start / w, start % w, start / w};
        queue.assign(1, start);
        seen[start] = 1;
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            const std::size_t p = queue[qi], y = p / w, x = p % w;
            r.box.x0 = std::min(r.box.x0, x);
            r.box.x1 = std::max(r.box.x1, x);
            r.box.y0 = std::min(r.box.y0, y);
            r.box.y1 = std::max(r.box.y1, y);
            r.score = std::max(r.score, static_cast<double>(error_map[p]));
            for (std::size_t ny = y ? y - 1 : 0; ny <= std::min(y + 1, h - 1); ++ny)
                for (std::size_t nx = x ? x - 1 : 0; nx <= std::min(x + 1, w - 1); ++nx) {
                    const std::size_t q = ny * w + nx;
                    if (!seen[q] && error_map[q] >= threshold) {
                        seen[q] = 1;
                        queue.push_back(q);
                    }
                }
        }
        r.pixels = queue.size();
        if (r.pixels >= min_area) out.push_back(r);
    }
    return out;
}

GroundTruth GroundTruth::from_labels(std::vector<int> labels) {
    GroundTruth gt;
    gt.frame_labels = std::move(labels);
    return gt;
}

GroundTruth GroundTruth::from_masks(std::vector<int> labels, const std::vector<Tensor<float>>& masks) {
    require(labels.size() == masks.size(), ErrorCode::format_error,
            "mask count " + std::to_string(masks.size()) + " does not match label count " +
                std::to_string(labels.size()));
    GroundTruth gt = from_labels(std::move(labels));
    gt.has_regions = gt.has_tracks = true;
    // Object id -> (last frame seen, track index).
    std::map<long, std::pair<std::size_t, std::size_t>> open;
    for (std::size_t f = 0; f < masks.size(); ++f) {
        const auto& m = masks[f];
        require(m.rank() == 2 || (m.rank() == 3 && m.dim(0) == 1), ErrorCode::format_error,
                "masks must be [H,W] or [1,H,W]");
        const std::size_t h = m.dim(m.rank() - 2), w = m.dim(m.rank() - 1);
        std::map<long, Box> boxes;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const long id = std::lround(m[y * w + x]);
                if (id <= 0) continue;
                auto [it, fresh] = boxes.try_emplace(id, Box{x, y, x, y});
                if (!fresh) {
                    it->second.x0 = std::min(it->second.x0, x);
                    it->second.x1 = std::max(it->second.x1, x);
                    it->second.y0 = std::min(it->second.y0, y);
                    it->second.y1 = std::max(it->second.y1, y);
                }
            }
        for (const auto& [id, box] : boxes) {
            auto it = open.find(id);
            if (it == open.end() || it->second.first + 1 != f)
                it = open.insert_or_assign(id, std::make_pair(f, gt.track_count++)).first;
            it->second.first = f;
            gt.regions.push_back({f, box, it->second.second});
        }
    }
    return gt;
}

void GroundTruth::append(const GroundTruth& other) {
    const std::size_t frame_offset = frames(), track_offset = track_count;
    if (frames() == 0) {
        has_regions = other.has_regions;
        has_tracks = other.has_tracks;
    } else {
        has_regions = has_regions && other.has_regions;
        has_tracks = has_tracks && other.has_tracks;
    }
    frame_labels.insert(frame_labels.end(), other.frame_labels.begin(), other.frame_labels.end());
    for (auto r : other.regions) {
        r.frame += frame_offset;
        r.track += track_offset;
        regions.push_back(r);
    }
    track_count += other.track_count;
}

GroundTruth GroundTruth::slice(std::size_t begin, std::size_t count) const {
    require(begin + count <= frames(), ErrorCode::invalid_argument, "ground-truth slice out of range");
    GroundTruth out;
    out.frame_labels.assign(frame_labels.begin() + static_cast<std::ptrdiff_t>(begin),
                            frame_labels.begin() + static_cast<std::ptrdiff_t>(begin + count));
    out.has_regions = has_regions;
    out.has_tracks = has_tracks;
    out.track_count = track_count;
    for (auto r : regions)
        if (r.frame >= begin && r.frame < begin + count) {
            r.frame -= begin;
            out.regions.push_back(r);
        }
    return out;
}

double curve_auc(const std::vector<CurvePoint>& points) {
    // rate(x) = best rate among points with fp/frame <= x, integrated on [0,1].
    std::vector<CurvePoint> pts;
    for (const auto& p : points)
        if (p.fp_per_frame <= 1.0) pts.push_back(p);
    std::sort(pts.begin(), pts.end(),
              [](const auto& a, const auto& b) { return a.fp_per_frame < b.fp_per_frame; });
    double area = 0.0, best = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        best = std::max(best, pts[i].rate);
        const double next = i + 1 < pts.size() ? pts[i + 1].fp_per_frame : 1.0;
        area += best * (next - pts[i].fp_per_frame);
    }
    return area;
}

namespace {

bool matches(const Box& det, const Box& gt, double beta, OverlapRule rule) {
    const double overlap = rule == OverlapRule::iou
                               ? iou(det, gt)
                               : static_cast<double>(intersection_area(det, gt)) /
                                     static_cast<double>(gt.area());
    return overlap >= beta;
}

struct Matching {
    std::vector<char> detected; // per GT region
    std::size_t false_positives = 0;
};

Matching match(const DetectionSet& set, const GroundTruth& gt, double beta, OverlapRule rule) {
    std::multimap<std::size_t, std::size_t> by_frame;
    for (std::size_t i = 0; i < gt.regions.size(); ++i) by_frame.emplace(gt.regions[i].frame, i);
    Matching m;
    m.detected.assign(gt.regions.size(), 0);
    for (const auto& det : set.boxes) {
        bool hit = false;
        auto [lo, hi] = by_frame.equal_range(det.frame_index);
        for (auto it = lo; it != hi; ++it)
            if (matches(det.box, gt.regions[it->second].box, beta, rule)) {
                m.detected[it->second] = 1;
                hit = true;
            }
        if (!hit) ++m.false_positives;
    }
    return m;
}

void require_regions(const GroundTruth& gt, const char* metric) {
    if (!gt.has_regions)
        fail(ErrorCode::unsupported_metric, std::string(metric) + " needs region masks");
    require(gt.frames() > 0, ErrorCode::invalid_argument, "ground truth has no frames");
}

} // namespace

std::vector<CurvePoint> rbdc_curve(const std::vector<DetectionSet>& detections, const GroundTruth& gt,
                                   double beta, OverlapRule rule) {
    require_regions(gt, "RBDC");
    std::vector<CurvePoint> out;
    for (const auto& set : detections) {
        const auto m = match(set, gt, beta, rule);
        const auto hits = static_cast<double>(std::count(m.detected.begin(), m.detected.end(), 1));
        out.push_back({static_cast<double>(m.false_positives) / static_cast<double>(gt.frames()),
                       gt.regions.empty() ? 0.0 : hits / static_cast<double>(gt.regions.size())});
    }
    return out;
}

std::vector<CurvePoint> tbdc_curve(const std::vector<DetectionSet>& detections, const GroundTruth& gt,
                                   double alpha, double beta, OverlapRule rule) {
    if (!gt.has_tracks) fail(ErrorCode::unsupported_metric, "TBDC needs object tracks");
    require_regions(gt, "TBDC");
    std::vector<CurvePoint> out;
    for (const auto& set : detections) {
        const auto m = match(set, gt, beta, rule);
        std::vector<std::size_t> total(gt.track_count, 0), hit(gt.track_count, 0);
        for (std::size_t i = 0; i < gt.regions.size(); ++i) {
            ++total[gt.regions[i].track];
            hit[gt.regions[i].track] += static_cast<std::size_t>(m.detected[i]);
        }
        std::size_t tracks = 0, tracks_hit = 0;
        for (std::size_t t = 0; t < gt.track_count; ++t) {
            if (!total[t]) continue; // track cut away entirely
            ++tracks;
            if (static_cast<double>(hit[t]) >= alpha * static_cast<double>(total[t]) - 1e-12)
                ++tracks_hit;
        }
        out.push_back({static_cast<double>(m.false_positives) / static_cast<double>(gt.frames()),
                       tracks ? static_cast<double>(tracks_hit) / static_cast<double>(tracks) : 0.0});
    }
    return out;
}

double rbdc(const std::vector<DetectionSet>& detections, const GroundTruth& gt, double beta,
            OverlapRule rule) {
    return curve_auc(rbdc_curve(detections, gt, beta, rule));
}

double tbdc(const std::vector<DetectionSet>& detections, const GroundTruth& gt, double alpha,
            double beta, OverlapRule rule) {
    return curve_auc(tbdc_curve(detections, gt, alpha, beta, rule));
}

std::vector<double> quantile_thresholds(std::vector<float> values, std::size_t count) {
    require(!values.empty() && count > 0, ErrorCode::invalid_argument,
            "thresholds need values and a positive count");
    std::sort(values.begin(), values.end());
    std::vector<double> out;
    const double smallest = 1e-6;
    for (std::size_t i = 1; i <= count; ++i) {
        const double level = static_cast<double>(i) / static_cast<double>(count + 1);
        const auto idx = static_cast<std::size_t>(level * static_cast<double>(values.size() - 1));
        out.push_back(std::max(static_cast<double>(values[idx]), smallest));
    }
    return out;
}

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::pair<std::string, std::string>> report_items(const EvalReport& r) {
    std::vector<std::pair<std::string, std::string>> items{{"auc", fmt17(r.auc)}};
    if (r.rbdc) items.emplace_back("rbdc", fmt17(*r.rbdc));
    if (r.tbdc) items.emplace_back("tbdc", fmt17(*r.tbdc));
    items.emplace_back("alpha", fmt17(r.alpha));
    items.emplace_back("beta", fmt17(r.beta));
    items.emplace_back("frames", std::to_string(r.frames));
    items.emplace_back("regions", std::to_string(r.regions));
    for (const auto& [video, auc] : r.per_video_auc) items.emplace_back("auc." + video, fmt17(auc));
    return items;
}

void write_lines(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
    out << text;
    if (!out) fail(ErrorCode::io_error, "failed writing " + path.string());
}

} // namespace

void EvalReport::write_text(const std::filesystem::path& path) const {
    std::string text;
    for (const auto& [k, v] : report_items(*this)) text += k + "=" + v + "\n";
    write_lines(path, text);
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
    std::string text = "metric,value\n";
    for (const auto& [k, v] : report_items(*this)) text += k + "," + v + "\n";
    write_lines(path, text);
}

EvalReport EvalReport::read_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io_error, "cannot open report " + path.string());
    EvalReport r;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, ErrorCode::format_error, "malformed report line: " + line);
        const auto key = line.substr(0, eq);
        const auto value = line.substr(eq + 1);
        double v = 0.0;
        try {
            v = std::stod(value);
        } catch (const std::exception&) {
            fail(ErrorCode::format_error, "malformed report value: " + line);
        }
        if (key == "auc") r.auc = v;
        else if (key == "rbdc") r.rbdc = v;
        else if (key == "tbdc") r.tbdc = v;
        else if (key == "alpha") r.alpha = v;
        else if (key == "beta") r.beta = v;
        else if (key == "frames") r.frames = static_cast<std::size_t>(v);
        else if (key == "regions") r.regions = static_cast<std::size_t>(v);
        else if (key.rfind("auc.", 0) == 0) r.per_video_auc[key.substr(4)] = v;
        else fail(ErrorCode::format_error, "unknown report key " + key);
    }
    return r;
}

} // namespace bivad
