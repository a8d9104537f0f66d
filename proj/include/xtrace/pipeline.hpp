#pragma once

#include <functional>
#include <span>
#include <vector>

#include "xtrace/core.hpp"
#include "xtrace/io.hpp"
#include "xtrace/regressor.hpp"

namespace xtrace {

struct OutOfOrderFrame : Error {
    using Error::Error;
};

struct BBox {
    double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double diagonal() const;
    double center_x() const { return 0.5 * (x_min + x_max); }
    double center_y() const { return 0.5 * (y_min + y_max); }
};

// tight axis-aligned box, each side pushed out by expand * diagonal
BBox compute_bbox(const Landmarks68& lm, double expand);

enum class WarmupMode {
    replicate_first,  // left-pad the buffer with the first frame: an output per push
    emit_after_fill,  // emit only once the buffer is full; flush covers the head
};

struct PipelineConfig {
    int window_len = 64;
    WarmupMode warmup = WarmupMode::replicate_first;
    static constexpr int feature_dim = kFeatureDim;
};

// Normalized per-frame feature vector: 136 landmark coords centered on the
// bbox center and scaled by the bbox diagonal, 68 uncertainties as-is, 15 AU
// intensities divided by 5. Invalid frames map to all zeros.
std::array<double, kFeatureDim> normalize_frame(const FrameFeatures& f);

struct TimedOutput {
    std::int64_t frame_index = 0;
    AffectOutput output;
};

// Streaming state for one clip: a sliding window of normalized feature rows
// evaluated by the shared model. Single writer; distinct streams may run in
// parallel against the same model.
class Pipeline {
public:
    Pipeline(const Model& model, const PipelineConfig& cfg);

    // frames must arrive with strictly increasing frame_index
    std::vector<TimedOutput> push_frame(const FrameFeatures& f);
    std::vector<TimedOutput> flush();

    std::int64_t frames_seen() const { return frames_seen_; }

    // observer of every normalized row entering the window (tests tap this
    // to assert the invalid-frame gating)
    using InputTap = std::function<void(std::int64_t, std::span<const double>)>;
    void set_input_tap(InputTap tap) { tap_ = std::move(tap); }

private:
    AffectOutput emit_last() const;

    const Model* model_;
    PipelineConfig cfg_;
    std::vector<double> window_;        // up to window_len rows, contiguous
    int rows_ = 0;
    std::vector<double> head_window_;   // first window_len rows (emit_after_fill flush)
    std::vector<std::int64_t> head_frames_;
    std::int64_t frames_seen_ = 0;
    std::int64_t last_index_ = -1;
    bool head_emitted_ = false;
    InputTap tap_;
};

// batch helper: push every frame, flush, and return records ordered by frame
io::PredictionTrace run_trace(const Model& model, const PipelineConfig& cfg,
                              const io::FeatureTrace& trace);

// rows x feature_dim matrix of normalized frames (training input)
std::vector<double> normalize_trace(const io::FeatureTrace& trace);

} // namespace xtrace
