#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bivad/tensor.hpp"

namespace bivad {

/// Rank-statistic ROC AUC; tied scores count one half. Labels are 0/1.
double frame_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Inclusive pixel bounds.
struct Box {
    std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    std::size_t area() const { return (x1 - x0 + 1) * (y1 - y0 + 1); }
};

std::size_t intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);

struct RegionBox {
    std::size_t frame_index = 0;
    Box box;
    double score = 0.0; // max error inside the component
    std::size_t pixels = 0;
};

/// 8-connected components of {map >= threshold} with at least `min_area`
/// pixels, each wrapped in its tight bounding box. map: [H,W].
std::vector<RegionBox> extract_regions(const Tensor<float>& error_map, double threshold,
                                       std::size_t min_area = 9, std::size_t frame_index = 0);

struct GtRegion {
    std::size_t frame = 0;
    Box box;
    std::size_t track = 0;
};

/// Frame labels plus optional regions and tracks. A mask pixel value v > 0
/// marks object v; each object's pixels in one frame form one region, and
/// each temporally contiguous run of an object forms one track.
struct GroundTruth {
    std::vector<int> frame_labels;
    std::vector<GtRegion> regions;
    std::size_t track_count = 0;
    bool has_regions = false;
    bool has_tracks = false;

    std::size_t frames() const { return frame_labels.size(); }
    static GroundTruth from_labels(std::vector<int> labels);
    /// masks: one [H,W] (or [1,H,W]) map per frame.
    static GroundTruth from_masks(std::vector<int> labels, const std::vector<Tensor<float>>& masks);
    /// Concatenates `other` after this one, offsetting frames and tracks.
    void append(const GroundTruth& other);
    /// Frames [begin, begin + count), renumbered from 0.
    GroundTruth slice(std::size_t begin, std::size_t count) const;
};

enum class OverlapRule { iou, gt_fraction };

struct DetectionSet {
    double threshold = 0.0;
    std::vector<RegionBox> boxes;
};

/// A point of a detection curve.
struct CurvePoint {
    double fp_per_frame = 0.0;
    double rate = 0.0;
};

/// Area under the upper envelope of the points over fp/frame in [0, 1].
double curve_auc(const std::vector<CurvePoint>& points);

std::vector<CurvePoint> rbdc_curve(const std::vector<DetectionSet>& detections, const GroundTruth& gt,
                                   double beta, OverlapRule rule = OverlapRule::iou);
std::vector<CurvePoint> tbdc_curve(const std::vector<DetectionSet>& detections, const GroundTruth& gt,
                                   double alpha, double beta, OverlapRule rule = OverlapRule::iou);

double rbdc(const std::vector<DetectionSet>& detections, const GroundTruth& gt, double beta,
            OverlapRule rule = OverlapRule::iou);
double tbdc(const std::vector<DetectionSet>& detections, const GroundTruth& gt, double alpha,
            double beta, OverlapRule rule = OverlapRule::iou);

/// `count` thresholds at quantile levels i/(count+1) of `values`, clamped
/// to be positive.
std::vector<double> quantile_thresholds(std::vector<float> values, std::size_t count = 50);

struct EvalReport {
    double auc = 0.0;
    std::optional<double> rbdc;
    std::optional<double> tbdc;
    std::map<std::string, double> per_video_auc;
    double alpha = 0.1;
    double beta = 0.1;
    std::size_t frames = 0;
    std::size_t regions = 0;

    /// key=value lines, values printed with %.17g.
    void write_text(const std::filesystem::path& path) const;
    /// Header "metric,value".
    void write_csv(const std::filesystem::path& path) const;
    static EvalReport read_text(const std::filesystem::path& path);
};

} // namespace bivad
