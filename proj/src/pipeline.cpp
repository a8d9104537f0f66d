#include "xtrace/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace xtrace {

double BBox::diagonal() const {
    return std::hypot(width(), height());
}

BBox compute_bbox(const Landmarks68& lm, double expand) {
    if (expand < 0.0) throw ConfigError("bbox expand must be >= 0");
    BBox box{lm[0].x, lm[0].y, lm[0].x, lm[0].y};
    for (const Point2& p : lm) {
        box.x_min = std::min(box.x_min, p.x);
        box.y_min = std::min(box.y_min, p.y);
        box.x_max = std::max(box.x_max, p.x);
        box.y_max = std::max(box.y_max, p.y);
    }
    const double diag = box.diagonal();
    if (diag == 0.0) throw DegenerateShape("all landmarks coincide");
    const double pad = expand * diag;
    box.x_min -= pad;
    box.y_min -= pad;
    box.x_max += pad;
    box.y_max += pad;
    return box;
}

std::array<double, kFeatureDim> normalize_frame(const FrameFeatures& f) {
    std::array<double, kFeatureDim> out{};
    if (!f.valid) return out;  // gating: invalid frames contribute zeros

    const BBox box = compute_bbox(f.landmarks, 0.0);
    const double cx = box.center_x(), cy = box.center_y();
    const double diag = box.diagonal();
    for (int i = 0; i < kNumLandmarks; ++i) {
        out[2 * i] = (f.landmarks[i].x - cx) / diag;
        out[2 * i + 1] = (f.landmarks[i].y - cy) / diag;
    }
    for (int i = 0; i < kNumLandmarks; ++i) out[2 * kNumLandmarks + i] = f.landmark_uncertainties[i];
    for (int k = 0; k < kNumActionUnits; ++k)
        out[3 * kNumLandmarks + k] = f.au_intensities[k] / kAuMax;
    return out;
}

Pipeline::Pipeline(const Model& model, const PipelineConfig& cfg) : model_(&model), cfg_(cfg) {
    if (cfg.window_len < 1) throw ConfigError("window_len must be >= 1");
    if (model.config().input_dim != kFeatureDim)
        throw ShapeMismatch("model input_dim does not match the 219-d feature layout");
    window_.reserve(static_cast<std::size_t>(cfg.window_len) * kFeatureDim);
}

AffectOutput Pipeline::emit_last() const {
    EvidentialParams pv, pa;
    model_->forward_last(window_, pv, pa);
    return to_affect_output(moments(pv), moments(pa));
}

std::vector<TimedOutput> Pipeline::push_frame(const FrameFeatures& f) {
    if (f.frame_index <= last_index_)
        throw OutOfOrderFrame("frame " + std::to_string(f.frame_index) + " after " +
                              std::to_string(last_index_));
    const auto row = normalize_frame(f);
    if (tap_) tap_(f.frame_index, row);

    const int n = cfg_.window_len;
    const std::size_t row_bytes = sizeof(double) * kFeatureDim;

    std::vector<TimedOutput> out;
    if (cfg_.warmup == WarmupMode::replicate_first) {
        if (frames_seen_ == 0) {
            window_.resize(static_cast<std::size_t>(n) * kFeatureDim);
            for (int r = 0; r < n; ++r)
                std::memcpy(window_.data() + static_cast<std::size_t>(r) * kFeatureDim,
                            row.data(), row_bytes);
        } else {
            std::memmove(window_.data(), window_.data() + kFeatureDim,
                         row_bytes * static_cast<std::size_t>(n - 1));
            std::memcpy(window_.data() + static_cast<std::size_t>(n - 1) * kFeatureDim,
                        row.data(), row_bytes);
        }
        out.push_back({f.frame_index, emit_last()});
    } else {
        if (rows_ < n) {
            window_.insert(window_.end(), row.begin(), row.end());
            head_window_.insert(head_window_.end(), row.begin(), row.end());
            head_frames_.push_back(f.frame_index);
            ++rows_;
            if (rows_ == n) out.push_back({f.frame_index, emit_last()});
        } else {
            std::memmove(window_.data(), window_.data() + kFeatureDim,
                         row_bytes * static_cast<std::size_t>(n - 1));
            std::memcpy(window_.data() + static_cast<std::size_t>(n - 1) * kFeatureDim,
                        row.data(), row_bytes);
            out.push_back({f.frame_index, emit_last()});
        }
    }

    ++frames_seen_;
    last_index_ = f.frame_index;
    return out;
}

std::vector<TimedOutput> Pipeline::flush() {
    std::vector<TimedOutput> out;
    if (cfg_.warmup == WarmupMode::replicate_first || head_emitted_ || frames_seen_ == 0)
        return out;
    head_emitted_ = true;

    // frames that never produced an output: the first window_len-1 when the
    // buffer filled, or every frame when the stream was shorter than that
    const std::int64_t missing =
        frames_seen_ < cfg_.window_len ? frames_seen_ : cfg_.window_len - 1;
    const Model::Output full = model_->forward(head_window_);
    for (std::int64_t p = 0; p < missing; ++p) {
        const auto i = static_cast<std::size_t>(p);
        out.push_back({head_frames_[i],
                       to_affect_output(moments(full.valence[i]), moments(full.arousal[i]))});
    }
    return out;
}

io::PredictionTrace run_trace(const Model& model, const PipelineConfig& cfg,
                              const io::FeatureTrace& trace) {
    Pipeline pipeline(model, cfg);
    std::vector<TimedOutput> all;
    all.reserve(trace.frames.size());
    for (const FrameFeatures& f : trace.frames) {
        auto outs = pipeline.push_frame(f);
        all.insert(all.end(), outs.begin(), outs.end());
    }
    auto tail = pipeline.flush();
    all.insert(all.end(), tail.begin(), tail.end());
    std::sort(all.begin(), all.end(),
              [](const TimedOutput& a, const TimedOutput& b) { return a.frame_index < b.frame_index; });

    io::PredictionTrace pred;
    pred.clip_id = trace.clip_id;
    pred.records.reserve(all.size());
    for (const TimedOutput& t : all) pred.records.push_back({t.frame_index, t.output});
    return pred;
}

std::vector<double> normalize_trace(const io::FeatureTrace& trace) {
    std::vector<double> rows;
    rows.reserve(trace.frames.size() * kFeatureDim);
    for (const FrameFeatures& f : trace.frames) {
        const auto row = normalize_frame(f);
        rows.insert(rows.end(), row.begin(), row.end());
    }
    return rows;
}

} // namespace xtrace
