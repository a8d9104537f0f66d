#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/generators.hpp"
#include "xtrace/pipeline.hpp"
#include "xtrace/simulator.hpp"

using namespace xtrace;

namespace {

ModelConfig small_model_config() {
    ModelConfig cfg;
    cfg.hidden_dim = 16;
    cfg.seed = 21;
    return cfg;
}

io::FeatureTrace sim_trace(int frames, std::uint64_t seed, double invalid_rate = 0.15) {
    sim::SimConfig cfg;
    cfg.seed = seed;
    cfg.clip_len_frames = frames;
    cfg.invalid_rate = invalid_rate;
    const auto map = sim::GenerativeMap::make(cfg.seed);
    Rng rng(cfg.seed);
    const auto traj = sim::sample_va_trajectory(cfg, rng);
    return sim::synthesize_features(traj, map, cfg, rng, "t");
}

bool in_range(const AffectOutput& o) {
    auto ok_u = [](const UncertaintyTriple& u) {
        return u.epistemic >= 0.0 && u.epistemic <= 1.0 && u.aleatoric >= 0.0 &&
               u.aleatoric <= 1.0 && u.cumulative >= 0.0 && u.cumulative <= 1.0;
    };
    return std::abs(o.va.valence) <= 1.0 && std::abs(o.va.arousal) <= 1.0 &&
           ok_u(o.uncertainty_valence) && ok_u(o.uncertainty_arousal);
}

} // namespace

TEST_CASE("compute_bbox") {
    Landmarks68 lm{};
    // unit square corners, everything else inside
    for (int i = 0; i < kNumLandmarks; ++i) lm[i] = {0.5, 0.5};
    lm[0] = {0.0, 0.0};
    lm[1] = {1.0, 0.0};
    lm[2] = {0.0, 1.0};
    lm[3] = {1.0, 1.0};
    const BBox box = compute_bbox(lm, 0.0);
    CHECK(box.x_min == 0.0);
    CHECK(box.y_min == 0.0);
    CHECK(box.x_max == 1.0);
    CHECK(box.y_max == 1.0);

    SUBCASE("degenerate shape") {
        Landmarks68 flat{};
        for (auto& p : flat) p = {3.0, 4.0};
        CHECK_THROWS_AS(compute_bbox(flat, 0.0), DegenerateShape);
    }
    SUBCASE("expansion strictly contains the tight box") {
        Rng rng(22);
        for (int trial = 0; trial < 50; ++trial) {
            Landmarks68 cloud;
            for (auto& p : cloud) p = {rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)};
            const BBox tight = compute_bbox(cloud, 0.0);
            const BBox wide = compute_bbox(cloud, 0.1);
            for (const auto& p : cloud) {
                CHECK(p.x >= tight.x_min);
                CHECK(p.x <= tight.x_max);
                CHECK(p.y >= tight.y_min);
                CHECK(p.y <= tight.y_max);
            }
            CHECK(wide.x_min < tight.x_min);
            CHECK(wide.y_min < tight.y_min);
            CHECK(wide.x_max > tight.x_max);
            CHECK(wide.y_max > tight.y_max);
        }
    }
}

TEST_CASE("normalize_frame") {
    Rng rng(23);
    FrameFeatures f = testgen::random_frame(rng, 0);
    f.valid = true;

    SUBCASE("invalid frames are gated to zeros") {
        f.valid = false;
        const auto row = normalize_frame(f);
        for (double v : row) CHECK(v == 0.0);
    }
    SUBCASE("AU block is scaled by 1/5") {
        for (auto& au : f.au_intensities) au = 5.0;
        const auto row = normalize_frame(f);
        for (int k = 0; k < kNumActionUnits; ++k) CHECK(row[3 * kNumLandmarks + k] == 1.0);
    }
    SUBCASE("landmark block is centered with unit diagonal") {
        const auto row = normalize_frame(f);
        Landmarks68 normalized;
        for (int i = 0; i < kNumLandmarks; ++i) normalized[i] = {row[2 * i], row[2 * i + 1]};
        const BBox box = compute_bbox(normalized, 0.0);
        CHECK(box.center_x() == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(box.center_y() == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(box.diagonal() == doctest::Approx(1.0));
    }
    SUBCASE("uncertainties pass through") {
        const auto row = normalize_frame(f);
        for (int i = 0; i < kNumLandmarks; ++i)
            CHECK(row[2 * kNumLandmarks + i] == f.landmark_uncertainties[i]);
    }
}

TEST_CASE("per-push emission counts") {
    const Model model(small_model_config());
    const auto trace = sim_trace(120, 31);

    SUBCASE("replicate_first emits from the very first frame") {
        PipelineConfig cfg;
        cfg.window_len = 4;
        Pipeline p(model, cfg);
        const auto out = p.push_frame(trace.frames[0]);
        CHECK(out.size() == 1);
        CHECK(out[0].frame_index == 0);
    }
    SUBCASE("emit_after_fill waits for a full window") {
        PipelineConfig cfg;
        cfg.window_len = 4;
        cfg.warmup = WarmupMode::emit_after_fill;
        Pipeline p(model, cfg);
        CHECK(p.push_frame(trace.frames[0]).empty());
        CHECK(p.push_frame(trace.frames[1]).empty());
        CHECK(p.push_frame(trace.frames[2]).empty());
        const auto out = p.push_frame(trace.frames[3]);
        REQUIRE(out.size() == 1);
        CHECK(out[0].frame_index == 3);
    }
    SUBCASE("a 120-frame clip yields 120 outputs under replicate_first") {
        PipelineConfig cfg;
        const auto pred = run_trace(model, cfg, trace);
        CHECK(pred.records.size() == 120);
        for (std::size_t i = 0; i < pred.records.size(); ++i)
            CHECK(pred.records[i].frame == static_cast<std::int64_t>(i));
    }
}

TEST_CASE("flush semantics") {
    const Model model(small_model_config());
    const auto trace = sim_trace(12, 33);

    SUBCASE("replicate_first flush is empty") {
        PipelineConfig cfg;
        cfg.window_len = 4;
        Pipeline p(model, cfg);
        for (int i = 0; i < 10; ++i) p.push_frame(trace.frames[i]);
        CHECK(p.flush().empty());
    }
    SUBCASE("emit_after_fill flush covers the unemitted head frames") {
        PipelineConfig cfg;
        cfg.window_len = 4;
        cfg.warmup = WarmupMode::emit_after_fill;
        Pipeline p(model, cfg);
        std::size_t emitted = 0;
        for (int i = 0; i < 10; ++i) emitted += p.push_frame(trace.frames[i]).size();
        const auto tail = p.flush();
        CHECK(emitted == 7);
        REQUIRE(tail.size() == 3);
        CHECK(tail[0].frame_index == 0);
        CHECK(tail[1].frame_index == 1);
        CHECK(tail[2].frame_index == 2);
    }
    SUBCASE("short streams flush everything") {
        PipelineConfig cfg;
        cfg.window_len = 8;
        cfg.warmup = WarmupMode::emit_after_fill;
        Pipeline p(model, cfg);
        for (int i = 0; i < 3; ++i) CHECK(p.push_frame(trace.frames[i]).empty());
        const auto tail = p.flush();
        CHECK(tail.size() == 3);
    }
}

TEST_CASE("output count equals input count after flush for all modes") {
    const Model model(small_model_config());
    Rng rng(34);
    for (const WarmupMode mode : {WarmupMode::replicate_first, WarmupMode::emit_after_fill}) {
        for (const int n : {1, 3, 4, 16}) {
            for (int trial = 0; trial < 4; ++trial) {
                const int frames = 1 + static_cast<int>(rng.next_u64() % 40);
                const auto trace = sim_trace(frames, 100 + trial);
                PipelineConfig cfg;
                cfg.window_len = n;
                cfg.warmup = mode;
                Pipeline p(model, cfg);
                std::size_t total = 0;
                for (const auto& f : trace.frames) total += p.push_frame(f).size();
                total += p.flush().size();
                CHECK(total == trace.frames.size());
            }
        }
    }
}

TEST_CASE("frames must arrive in order") {
    const Model model(small_model_config());
    const auto trace = sim_trace(5, 35);
    PipelineConfig cfg;
    Pipeline p(model, cfg);
    p.push_frame(trace.frames[2]);
    CHECK_THROWS_AS(p.push_frame(trace.frames[1]), OutOfOrderFrame);
    CHECK_THROWS_AS(p.push_frame(trace.frames[2]), OutOfOrderFrame);
    CHECK_NOTHROW(p.push_frame(trace.frames[4]));  // gaps are allowed
}

TEST_CASE("streaming equals batch processing bitwise") {
    const Model model(small_model_config());
    const auto trace = sim_trace(60, 36);
    for (const WarmupMode mode : {WarmupMode::replicate_first, WarmupMode::emit_after_fill}) {
        PipelineConfig cfg;
        cfg.window_len = 16;
        cfg.warmup = mode;

        Pipeline p(model, cfg);
        std::vector<TimedOutput> streamed;
        for (const auto& f : trace.frames) {
            for (auto& o : p.push_frame(f)) streamed.push_back(o);
        }
        for (auto& o : p.flush()) streamed.push_back(o);
        std::sort(streamed.begin(), streamed.end(),
                  [](const TimedOutput& a, const TimedOutput& b) {
                      return a.frame_index < b.frame_index;
                  });

        const auto batch = run_trace(model, cfg, trace);
        REQUIRE(batch.records.size() == streamed.size());
        for (std::size_t i = 0; i < streamed.size(); ++i) {
            CHECK(batch.records[i].frame == streamed[i].frame_index);
            CHECK(batch.records[i].output.va.valence == streamed[i].output.va.valence);
            CHECK(batch.records[i].output.va.arousal == streamed[i].output.va.arousal);
            CHECK(batch.records[i].output.uncertainty_valence.cumulative ==
                  streamed[i].output.uncertainty_valence.cumulative);
            CHECK(batch.records[i].output.uncertainty_arousal.cumulative ==
                  streamed[i].output.uncertainty_arousal.cumulative);
        }
    }
}

TEST_CASE("invalid frames reach the model as zero rows") {
    const Model model(small_model_config());
    auto trace = sim_trace(40, 37, 0.0);
    sim::CorruptionSpan span;
    span.start = 10;
    span.end = 18;
    span.kind = sim::CorruptionSpan::Kind::invalid;
    trace = sim::corrupt(trace, {span});

    PipelineConfig cfg;
    cfg.window_len = 8;
    Pipeline p(model, cfg);
    std::size_t zero_rows = 0, rows = 0;
    p.set_input_tap([&](std::int64_t, std::span<const double> row) {
        ++rows;
        bool all_zero = true;
        for (double v : row) all_zero = all_zero && v == 0.0;
        if (all_zero) ++zero_rows;
    });
    for (const auto& f : trace.frames) p.push_frame(f);
    CHECK(rows == 40);
    CHECK(zero_rows == 8);
}

TEST_CASE("all emitted outputs are inside the documented ranges") {
    const Model model(small_model_config());
    const auto trace = sim_trace(80, 38);
    for (const int n : {1, 4, 64}) {
        PipelineConfig cfg;
        cfg.window_len = n;
        const auto pred = run_trace(model, cfg, trace);
        for (const auto& r : pred.records) CHECK(in_range(r.output));
    }
}
