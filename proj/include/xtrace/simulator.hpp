#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xtrace/core.hpp"
#include "xtrace/io.hpp"
#include "xtrace/rng.hpp"

namespace xtrace::sim {

struct SpanOutOfRange : Error {
    using Error::Error;
};

struct SimConfig {
    std::uint64_t seed = 1;
    int clip_len_frames = 120;  // 4 s at 30 fps
    double ou_theta = 0.10;     // mean reversion toward the clip anchor
    double ou_sigma = 0.012;    // per-step volatility
    double noise_std = 0.06;    // AU noise (intensity units) and landmark jitter (px)
    double occlusion_rate = 0.20;  // approx fraction of frames inside occlusion bursts
    double invalid_rate = 0.05;
};

void check_config(const SimConfig& cfg);

// VA -> AU -> landmarks generative chain. AU intensity k is
// clip(gains_k . [v, a, v*a, 1] + noise, 0, 5); each active AU displaces a
// localized group of landmarks around the canonical neutral shape. Gains are
// scaled so noise-free intensities stay strictly inside (0,5), which keeps
// the map linearly invertible.
struct GenerativeMap {
    Landmarks68 base_shape;
    std::array<std::array<double, 4>, kNumActionUnits> au_gains;
    std::array<std::array<Point2, kNumLandmarks>, kNumActionUnits> au_displacements;

    static GenerativeMap make(std::uint64_t seed);
};

Landmarks68 canonical_base_shape();

// Ornstein-Uhlenbeck walk per dimension around a uniformly drawn anchor,
// clipped to [-1,1]. With ou_sigma = 0 the trajectory is constant.
std::vector<VAPoint> sample_va_trajectory(const SimConfig& cfg, Rng& rng);

io::FeatureTrace synthesize_features(const std::vector<VAPoint>& traj, const GenerativeMap& map,
                                     const SimConfig& cfg, Rng& rng, std::string clip_id);

struct CorruptionSpan {
    enum class Kind { invalid, occlude };
    std::size_t start = 0;
    std::size_t end = 0;  // exclusive
    Kind kind = Kind::invalid;
    std::vector<int> indices;  // landmark indices for occlude
};

io::FeatureTrace corrupt(io::FeatureTrace trace, const std::vector<CorruptionSpan>& spans);

struct DatasetOptions {
    int n_clips = 100;
    int clips_per_subject = 10;
    double train_frac = 0.8;
    double val_frac = 0.1;  // remainder is test
    int raters = 0;
    double rater_noise = 0.1;
    bool assign_pose_bins = true;
};

struct GeneratedClip {
    io::FeatureTrace trace;
    std::vector<VAPoint> trajectory;  // per-frame ground truth, not serialized
    VAPoint label;                    // trajectory mean
    std::string subject_id;
    std::string split;
    std::optional<io::PoseBin> pose;
};

struct GeneratedDataset {
    std::vector<GeneratedClip> clips;
    std::vector<io::ClipAnnotation> annotations;

    io::DatasetManifest manifest(const std::string& trace_dir_prefix = "traces/") const;
};

// Clip i is generated from seed cfg.seed + i, so clips are independent of
// the dataset size and order of generation. Subjects own blocks of
// clips_per_subject consecutive clips and splits are assigned per subject.
GeneratedClip generate_clip(const GenerativeMap& map, const SimConfig& cfg,
                            const DatasetOptions& opt, int clip_index);
GeneratedDataset generate_dataset(const SimConfig& cfg, const DatasetOptions& opt);

// the declared pose bins, cycled over clips when assign_pose_bins is on
const std::vector<io::PoseBin>& declared_pose_bins();

} // namespace xtrace::sim
