#include "xtrace/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace xtrace::sim {

namespace {

std::string format_id(const char* prefix, int index, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, index);
    return buf;
}

void ellipse_arc(Landmarks68& shape, int first, int count, double cx, double cy, double rx,
                 double ry, double theta0, double theta1) {
    for (int i = 0; i < count; ++i) {
        const double t = theta0 + (theta1 - theta0) * i / (count - 1);
        shape[first + i] = {cx + rx * std::cos(t), cy - ry * std::sin(t)};
    }
}

} // namespace

void check_config(const SimConfig& cfg) {
    if (cfg.clip_len_frames < 1) throw ConfigError("clip_len_frames must be >= 1");
    if (!(cfg.ou_theta >= 0.0) || !(cfg.ou_sigma >= 0.0) || !(cfg.noise_std >= 0.0))
        throw ConfigError("ou_theta, ou_sigma, noise_std must be >= 0");
    if (cfg.occlusion_rate < 0.0 || cfg.occlusion_rate > 1.0)
        throw ConfigError("occlusion_rate must be in [0,1]");
    if (cfg.invalid_rate < 0.0 || cfg.invalid_rate > 1.0)
        throw ConfigError("invalid_rate must be in [0,1]");
}

Landmarks68 canonical_base_shape() {
    // iBUG-68 layout on a ~200px canvas: 0-16 jaw, 17-26 brows, 27-35 nose,
    // 36-47 eyes, 48-67 lips. Outer eye corners (36, 45) sit 80px apart.
    Landmarks68 s{};
    ellipse_arc(s, 0, 17, 100.0, 80.0, 62.0, 75.0, M_PI, 2.0 * M_PI);  // jaw
    for (int i = 0; i < 5; ++i) {                                       // brows
        const double x0 = 55.0 + 8.75 * i;
        s[17 + i] = {x0, 55.0 - 3.0 * std::sin(M_PI * i / 4.0)};
        s[22 + i] = {110.0 + 8.75 * i, 55.0 - 3.0 * std::sin(M_PI * i / 4.0)};
    }
    for (int i = 0; i < 4; ++i) s[27 + i] = {100.0, 65.0 + 10.0 * i};   // nose bridge
    s[31] = {88.0, 105.0};
    s[32] = {94.0, 107.0};
    s[33] = {100.0, 108.0};
    s[34] = {106.0, 107.0};
    s[35] = {112.0, 105.0};
    const double eye_dx[6] = {-12.0, -4.0, 4.0, 12.0, 4.0, -4.0};
    const double eye_dy[6] = {0.0, -4.0, -4.0, 0.0, 4.0, 4.0};
    for (int i = 0; i < 6; ++i) {
        s[36 + i] = {72.0 + eye_dx[i], 70.0 + eye_dy[i]};
        s[42 + i] = {128.0 + eye_dx[i], 70.0 + eye_dy[i]};
    }
    for (int i = 0; i < 12; ++i) {                                      // outer lip
        const double t = 2.0 * M_PI * i / 12.0;
        s[48 + i] = {100.0 + 26.0 * std::cos(t), 130.0 + 12.0 * std::sin(t)};
    }
    for (int i = 0; i < 8; ++i) {                                       // inner lip
        const double t = 2.0 * M_PI * i / 8.0;
        s[60 + i] = {100.0 + 16.0 * std::cos(t), 130.0 + 5.0 * std::sin(t)};
    }
    return s;
}

GenerativeMap GenerativeMap::make(std::uint64_t seed) {
    GenerativeMap map;
    map.base_shape = canonical_base_shape();
    Rng rng(seed);
    for (int k = 0; k < kNumActionUnits; ++k) {
        // alternate the primary affect dimension across AUs so valence and
        // arousal get symmetric signal power
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        double primary = sign * rng.uniform(0.8, 1.4);
        double secondary = rng.uniform(-0.4, 0.4);
        double gva = rng.uniform(-0.25, 0.25);
        double gv = k % 2 == 0 ? primary : secondary;
        double ga = k % 2 == 0 ? secondary : primary;
        const double norm = std::abs(gv) + std::abs(ga) + std::abs(gva);
        if (norm > 2.0) {
            gv *= 2.0 / norm;
            ga *= 2.0 / norm;
            gva *= 2.0 / norm;
        }
        // noise-free output stays in [0.3, 4.7]: |signal| <= 2.0, bias in [2.3, 2.7]
        map.au_gains[k] = {gv, ga, gva, 2.5 + rng.uniform(-0.2, 0.2)};

        const int center = rng.uniform_int(0, kNumLandmarks - 1);
        const double sigma = rng.uniform(12.0, 24.0);
        const double amplitude = rng.uniform(2.5, 5.0);
        const double angle = rng.uniform(0.0, 2.0 * M_PI);
        const double ux = std::cos(angle), uy = std::sin(angle);
        const Point2 c = map.base_shape[center];
        for (int i = 0; i < kNumLandmarks; ++i) {
            const Point2 p = map.base_shape[i];
            const double d2 = (p.x - c.x) * (p.x - c.x) + (p.y - c.y) * (p.y - c.y);
            const double w = amplitude * std::exp(-d2 / (2.0 * sigma * sigma));
            map.au_displacements[k][i] = {w * ux, w * uy};
        }
    }

    return map;
}

std::vector<VAPoint> sample_va_trajectory(const SimConfig& cfg, Rng& rng) {
    check_config(cfg);
    const double anchor_v = rng.uniform(-0.85, 0.85);
    const double anchor_a = rng.uniform(-0.85, 0.85);
    std::vector<VAPoint> traj;
    traj.reserve(cfg.clip_len_frames);
    double v = anchor_v, a = anchor_a;
    for (int t = 0; t < cfg.clip_len_frames; ++t) {
        traj.push_back({v, a});
        v += cfg.ou_theta * (anchor_v - v) + cfg.ou_sigma * rng.normal();
        a += cfg.ou_theta * (anchor_a - a) + cfg.ou_sigma * rng.normal();
        v = clamp_signed_unit(v);
        a = clamp_signed_unit(a);
    }
    return traj;
}

io::FeatureTrace synthesize_features(const std::vector<VAPoint>& traj, const GenerativeMap& map,
                                     const SimConfig& cfg, Rng& rng, std::string clip_id) {
    check_config(cfg);
    if (traj.empty()) throw ConfigError("trajectory must be non-empty");

    io::FeatureTrace trace;
    trace.clip_id = std::move(clip_id);
    trace.frames.reserve(traj.size());

    // Occlusions arrive in bursts over a fixed landmark range with a
    // per-event severity. Bursts often outlast the regressor's receptive
    // field, so the affect signal inside a severe burst is genuinely lost,
    // not recoverable from clean neighbours; severity drives both the
    // feature damage and the visible landmark-uncertainty elevation.
    constexpr double kOcclusionBurstFrames = 26.5;  // mean of uniform(8, 45)
    int occ_remaining = 0, occ_first = 0, occ_last = -1;
    double occ_severity = 0.0;

    for (std::size_t t = 0; t < traj.size(); ++t) {
        FrameFeatures f;
        f.frame_index = static_cast<std::int64_t>(t);

        if (occ_remaining == 0 &&
            rng.uniform() < cfg.occlusion_rate / kOcclusionBurstFrames) {
            occ_remaining = 8 + rng.uniform_int(0, 37);
            occ_first = rng.uniform_int(0, kNumLandmarks - 1);
            occ_last = std::min(kNumLandmarks - 1, occ_first + rng.uniform_int(7, 19));
            occ_severity = rng.uniform(0.25, 1.0);
        }
        const bool occluded = occ_remaining > 0;
        if (occluded) --occ_remaining;

        const double phi[4] = {traj[t].valence, traj[t].arousal,
                               traj[t].valence * traj[t].arousal, 1.0};
        for (int k = 0; k < kNumActionUnits; ++k) {
            const auto& g = map.au_gains[k];
            double au = g[0] * phi[0] + g[1] * phi[1] + g[2] * phi[2] + g[3] * phi[3];
            au += rng.normal() * cfg.noise_std;
            if (occluded) au += rng.normal() * 60.0 * cfg.noise_std * occ_severity;
            f.au_intensities[k] = std::clamp(au, 0.0, kAuMax);
        }

        for (int i = 0; i < kNumLandmarks; ++i) {
            Point2 p = map.base_shape[i];
            for (int k = 0; k < kNumActionUnits; ++k) {
                const double scale = f.au_intensities[k] / kAuMax;
                p.x += scale * map.au_displacements[k][i].x;
                p.y += scale * map.au_displacements[k][i].y;
            }
            p.x += rng.normal() * cfg.noise_std;
            p.y += rng.normal() * cfg.noise_std;
            const bool occ = occluded && i >= occ_first && i <= occ_last;
            if (occ) {
                p.x += rng.normal() * 20.0 * cfg.noise_std * occ_severity;
                p.y += rng.normal() * 20.0 * cfg.noise_std * occ_severity;
            }
            f.landmarks[i] = p;
            f.landmark_uncertainties[i] =
                occ ? 0.05 + 0.9 * occ_severity * (0.9 + 0.1 * rng.uniform()) : 0.05;
        }

        f.valid = !(rng.uniform() < cfg.invalid_rate);
        trace.frames.push_back(validate_frame(f));
    }
    return trace;
}

io::FeatureTrace corrupt(io::FeatureTrace trace, const std::vector<CorruptionSpan>& spans) {
    for (const auto& span : spans) {
        if (span.start > span.end || span.end > trace.frames.size())
            throw SpanOutOfRange("span [" + std::to_string(span.start) + "," +
                                 std::to_string(span.end) + ") exceeds trace length " +
                                 std::to_string(trace.frames.size()));
        if (span.kind == CorruptionSpan::Kind::occlude) {
            for (int idx : span.indices) {
                if (idx < 0 || idx >= kNumLandmarks)
                    throw SpanOutOfRange("occlusion index " + std::to_string(idx));
            }
        }
        for (std::size_t t = span.start; t < span.end; ++t) {
            if (span.kind == CorruptionSpan::Kind::invalid) {
                trace.frames[t].valid = false;
            } else {
                for (int idx : span.indices) trace.frames[t].landmark_uncertainties[idx] = 0.95;
            }
        }
    }
    return trace;
}

const std::vector<io::PoseBin>& declared_pose_bins() {
    static const std::vector<io::PoseBin> bins = {
        {0.0, 0.0}, {30.0, 0.0}, {-30.0, 0.0}, {60.0, 0.0},
        {-60.0, 0.0}, {0.0, 25.0}, {0.0, -25.0},
    };
    return bins;
}

namespace {

std::string split_for_subject(int subject_index, int n_subjects, const DatasetOptions& opt) {
    const int n_train = static_cast<int>(std::floor(n_subjects * opt.train_frac + 1e-9));
    const int n_val = static_cast<int>(std::floor(n_subjects * (opt.train_frac + opt.val_frac) + 1e-9)) - n_train;
    if (subject_index < n_train) return "train";
    if (subject_index < n_train + n_val) return "val";
    return "test";
}

} // namespace

GeneratedClip generate_clip(const GenerativeMap& map, const SimConfig& cfg,
                            const DatasetOptions& opt, int clip_index) {
    GeneratedClip clip;
    SimConfig clip_cfg = cfg;
    clip_cfg.seed = cfg.seed + static_cast<std::uint64_t>(clip_index);
    Rng rng(clip_cfg.seed);

    const std::string clip_id = format_id("c", clip_index, 5);
    clip.trajectory = sample_va_trajectory(clip_cfg, rng);
    clip.trace = synthesize_features(clip.trajectory, map, clip_cfg, rng, clip_id);

    double sv = 0.0, sa = 0.0;
    for (const VAPoint& p : clip.trajectory) {
        sv += p.valence;
        sa += p.arousal;
    }
    clip.label = {sv / static_cast<double>(clip.trajectory.size()),
                  sa / static_cast<double>(clip.trajectory.size())};

    const int subject_index = clip_index / opt.clips_per_subject;
    const int n_subjects = (opt.n_clips + opt.clips_per_subject - 1) / opt.clips_per_subject;
    clip.subject_id = format_id("s", subject_index, 4);
    clip.split = split_for_subject(subject_index, n_subjects, opt);
    if (opt.assign_pose_bins) {
        const auto& bins = declared_pose_bins();
        clip.pose = bins[static_cast<std::size_t>(clip_index) % bins.size()];
    }
    return clip;
}

GeneratedDataset generate_dataset(const SimConfig& cfg, const DatasetOptions& opt) {
    check_config(cfg);
    if (opt.n_clips < 1) throw ConfigError("n_clips must be >= 1");
    if (opt.clips_per_subject < 1) throw ConfigError("clips_per_subject must be >= 1");
    if (opt.train_frac < 0.0 || opt.val_frac < 0.0 || opt.train_frac + opt.val_frac > 1.0)
        throw ConfigError("split fractions must be nonnegative and sum to <= 1");
    if (opt.raters < 0 || opt.rater_noise < 0.0)
        throw ConfigError("raters and rater_noise must be >= 0");

    const GenerativeMap map = GenerativeMap::make(cfg.seed);
    GeneratedDataset ds;
    ds.clips.reserve(opt.n_clips);
    for (int i = 0; i < opt.n_clips; ++i) {
        ds.clips.push_back(generate_clip(map, cfg, opt, i));
        if (opt.raters > 0) {
            const GeneratedClip& clip = ds.clips.back();
            for (int r = 0; r < opt.raters; ++r) {
                Rng ar(Rng::mix(cfg.seed ^ 0xA22A5EEDULL,
                                static_cast<std::uint64_t>(i) * 1024 + r));
                io::ClipAnnotation ann;
                ann.clip_id = clip.trace.clip_id;
                ann.rater_id = format_id("r", r, 2);
                ann.va.valence = clamp_signed_unit(clip.label.valence + ar.normal() * opt.rater_noise);
                ann.va.arousal = clamp_signed_unit(clip.label.arousal + ar.normal() * opt.rater_noise);
                ds.annotations.push_back(std::move(ann));
            }
        }
    }
    return ds;
}

io::DatasetManifest GeneratedDataset::manifest(const std::string& trace_dir_prefix) const {
    io::DatasetManifest m;
    m.clips.reserve(clips.size());
    for (const auto& c : clips) {
        io::ManifestEntry e;
        e.clip_id = c.trace.clip_id;
        e.trace_path = trace_dir_prefix + c.trace.clip_id + ".jsonl";
        e.split = c.split;
        e.subject_id = c.subject_id;
        e.pose_bin = c.pose;
        e.label = c.label;
        m.clips.push_back(std::move(e));
    }
    io::check_manifest(m);
    return m;
}

} // namespace xtrace::sim
