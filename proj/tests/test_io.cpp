#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include "support/generators.hpp"
#include "xtrace/io.hpp"
#include "xtrace/rng.hpp"

using namespace xtrace;

TEST_CASE("trace round-trip reaches a fixpoint") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const auto trace = testgen::random_trace(rng, 1 + static_cast<int>(rng.next_u64() % 20));
        const std::string once = io::write_trace(trace);
        const auto parsed = io::parse_trace(once, trace.clip_id);
        CHECK(parsed.frames.size() == trace.frames.size());
        const std::string twice = io::write_trace(parsed);
        CHECK(once == twice);
    }
}

TEST_CASE("write_trace is deterministic") {
    Rng rng(12);
    const auto trace = testgen::random_trace(rng, 5);
    CHECK(io::write_trace(trace) == io::write_trace(trace));
}

TEST_CASE("parse_trace validates structure") {
    Rng rng(13);
    auto trace = testgen::random_trace(rng, 2);
    std::string text = io::write_trace(trace);

    SUBCASE("well-formed two-frame file") {
        const auto parsed = io::parse_trace(text);
        CHECK(parsed.frames.size() == 2);
        CHECK(parsed.frames[0].frame_index == 0);
        CHECK(parsed.frames[1].frame_index == 1);
    }
    SUBCASE("67 landmark pairs is an arity error") {
        nlohmann::json rec;
        rec["i"] = 0;
        rec["valid"] = 1;
        rec["lm"] = nlohmann::json::array();
        for (int i = 0; i < 67; ++i) rec["lm"].push_back({1.0 * i, 2.0 * i});
        rec["lmu"] = std::vector<double>(68, 0.1);
        rec["au"] = std::vector<double>(15, 1.0);
        CHECK_THROWS_AS(io::parse_trace(rec.dump() + "\n"), WrongArity);
    }
    SUBCASE("non-monotone frame index") {
        std::string two = text + text.substr(0, text.find('\n') + 1);
        CHECK_THROWS_AS(io::parse_trace(two), io::NonMonotoneFrameIndex);
    }
    SUBCASE("trace must start at frame zero") {
        std::string tail = text.substr(text.find('\n') + 1);
        CHECK_THROWS_AS(io::parse_trace(tail), io::NonMonotoneFrameIndex);
    }
    SUBCASE("garbage line") {
        CHECK_THROWS_AS(io::parse_trace("not json\n"), io::ParseError);
    }
    SUBCASE("missing field") {
        CHECK_THROWS_AS(io::parse_trace("{\"i\":0,\"valid\":1}\n"), io::ParseError);
    }
}

TEST_CASE("annotation parsing") {
    SUBCASE("single row") {
        const auto anns = io::parse_annotations("clip_id,rater_id,valence,arousal\nc1,r1,0.3,-0.2\n");
        REQUIRE(anns.size() == 1);
        CHECK(anns[0].clip_id == "c1");
        CHECK(anns[0].rater_id == "r1");
        CHECK(anns[0].va.valence == doctest::Approx(0.3));
        CHECK(anns[0].va.arousal == doctest::Approx(-0.2));
    }
    SUBCASE("range error") {
        CHECK_THROWS_AS(io::parse_annotations("clip_id,rater_id,valence,arousal\nc1,r1,1.5,0\n"),
                        io::RangeError);
    }
    SUBCASE("duplicate (clip, rater)") {
        CHECK_THROWS_AS(
            io::parse_annotations(
                "clip_id,rater_id,valence,arousal\nc1,r1,0.1,0.1\nc1,r1,0.2,0.2\n"),
            io::DuplicateAnnotation);
    }
    SUBCASE("3 raters x 2 clips") {
        std::string text = "clip_id,rater_id,valence,arousal\n";
        for (const char* clip : {"c1", "c2"})
            for (const char* rater : {"r1", "r2", "r3"})
                text += std::string(clip) + "," + rater + ",0.1,0.2\n";
        const auto anns = io::parse_annotations(text);
        CHECK(anns.size() == 6);
    }
    SUBCASE("missing header") {
        CHECK_THROWS_AS(io::parse_annotations("c1,r1,0.1,0.1\n"), io::ParseError);
    }
    SUBCASE("round trip") {
        std::vector<io::ClipAnnotation> anns = {{"c1", "r1", {0.25, -0.5}},
                                                {"c1", "r2", {0.125, 0.375}}};
        const std::string text = io::write_annotations(anns);
        const auto parsed = io::parse_annotations(text);
        CHECK(io::write_annotations(parsed) == text);
    }
}

TEST_CASE("manifest rejects split leakage and duplicates") {
    io::DatasetManifest m;
    m.clips.push_back({"c1", "traces/c1.jsonl", "train", "s1", std::nullopt, VAPoint{0.1, 0.2}});
    m.clips.push_back({"c2", "traces/c2.jsonl", "test", "s2", io::PoseBin{30.0, 0.0}, std::nullopt});
    const std::string text = io::write_manifest(m);
    const auto parsed = io::parse_manifest(text);
    CHECK(parsed.clips.size() == 2);
    CHECK(parsed.clips[0].label.has_value());
    CHECK(parsed.clips[0].label->valence == doctest::Approx(0.1));
    CHECK(parsed.clips[1].pose_bin.has_value());
    CHECK(io::write_manifest(parsed) == text);

    SUBCASE("same subject in two splits") {
        io::DatasetManifest bad = m;
        bad.clips.push_back({"c3", "traces/c3.jsonl", "train", "s2", std::nullopt, std::nullopt});
        CHECK_THROWS_AS(io::write_manifest(bad), io::ManifestError);
    }
    SUBCASE("same subject in one split is fine") {
        io::DatasetManifest ok = m;
        ok.clips.push_back({"c3", "traces/c3.jsonl", "test", "s2", std::nullopt, std::nullopt});
        CHECK_NOTHROW(io::write_manifest(ok));
    }
    SUBCASE("duplicate clip id") {
        io::DatasetManifest bad = m;
        bad.clips.push_back({"c1", "traces/c1b.jsonl", "train", "s1", std::nullopt, std::nullopt});
        CHECK_THROWS_AS(io::write_manifest(bad), io::ManifestError);
    }
    SUBCASE("unknown split name") {
        io::DatasetManifest bad = m;
        bad.clips.push_back({"c3", "traces/c3.jsonl", "dev", "s3", std::nullopt, std::nullopt});
        CHECK_THROWS_AS(io::write_manifest(bad), io::ManifestError);
    }
}

TEST_CASE("prediction files") {
    io::PredictionTrace trace;
    trace.clip_id = "c1";

    SUBCASE("empty trace writes a header-only file") {
        CHECK(io::write_predictions(trace) ==
              "frame,valence,arousal,u_epi_v,u_ale_v,u_cum_v,u_epi_a,u_ale_a,u_cum_a\n");
    }

    Rng rng(21);
    for (int i = 0; i < 7; ++i) {
        io::PredictionRecord r;
        r.frame = i;
        r.output.va = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        r.output.uncertainty_valence = {rng.uniform(), rng.uniform(), rng.uniform()};
        r.output.uncertainty_arousal = {rng.uniform(), rng.uniform(), rng.uniform()};
        trace.records.push_back(r);
    }

    SUBCASE("deterministic bytes") {
        CHECK(io::write_predictions(trace) == io::write_predictions(trace));
    }
    SUBCASE("round-trip fixpoint") {
        const std::string once = io::write_predictions(trace);
        const auto parsed = io::parse_predictions(once, "c1");
        CHECK(parsed.records.size() == trace.records.size());
        CHECK(io::write_predictions(parsed) == once);
    }
    SUBCASE("rejects out-of-range uncertainty") {
        std::string text = "frame,valence,arousal,u_epi_v,u_ale_v,u_cum_v,u_epi_a,u_ale_a,u_cum_a\n"
                           "0,0.1,0.1,0.5,0.5,1.5,0.5,0.5,0.5\n";
        CHECK_THROWS_AS(io::parse_predictions(text), io::RangeError);
    }
}
