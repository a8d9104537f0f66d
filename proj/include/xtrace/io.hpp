#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xtrace/core.hpp"

namespace xtrace::io {

struct ParseError : Error {
    ParseError(int line, const std::string& reason)
        : Error("parse error at line " + std::to_string(line) + ": " + reason),
          line(line), reason(reason) {}
    int line;
    std::string reason;
};

struct NonMonotoneFrameIndex : Error {
    using Error::Error;
};

struct DuplicateAnnotation : Error {
    using Error::Error;
};

struct RangeError : Error {
    using Error::Error;
};

struct ManifestError : Error {
    using Error::Error;
};

// A clip's low-level descriptor stream. frame_index starts at 0 and is
// strictly increasing.
struct FeatureTrace {
    std::string clip_id;
    double fps = 30.0;
    std::vector<FrameFeatures> frames;
};

struct ClipAnnotation {
    std::string clip_id;
    std::string rater_id;
    VAPoint va;
};

struct PoseBin {
    double yaw_deg = 0.0;
    double pitch_deg = 0.0;
    friend bool operator==(const PoseBin&, const PoseBin&) = default;
};

struct ManifestEntry {
    std::string clip_id;
    std::string trace_path;
    std::string split;     // train | val | test
    std::string subject_id;
    std::optional<PoseBin> pose_bin;
    std::optional<VAPoint> label;
};

struct DatasetManifest {
    std::vector<ManifestEntry> clips;
};

struct PredictionRecord {
    std::int64_t frame = 0;
    AffectOutput output;
};

struct PredictionTrace {
    std::string clip_id;
    std::vector<PredictionRecord> records;
};

// Trace files are line-delimited JSON records, one frame per line:
//   {"i":0,"valid":1,"lm":[[x,y],...68],"lmu":[...68],"au":[...15]}
// Every frame is range-validated on parse.
FeatureTrace parse_trace(std::string_view text, std::string clip_id = "", double fps = 30.0);
std::string write_trace(const FeatureTrace& trace);

// CSV with header: clip_id,rater_id,valence,arousal
std::vector<ClipAnnotation> parse_annotations(std::string_view text);
std::string write_annotations(const std::vector<ClipAnnotation>& annotations);

// JSON manifest; rejects duplicate clip ids and subjects that appear in more
// than one split.
DatasetManifest parse_manifest(std::string_view text);
std::string write_manifest(const DatasetManifest& manifest);
void check_manifest(const DatasetManifest& manifest);

// CSV with header: frame,valence,arousal,u_epi_v,u_ale_v,u_cum_v,u_epi_a,u_ale_a,u_cum_a
// Output is deterministic: fixed field order, 6 fractional digits.
PredictionTrace parse_predictions(std::string_view text, std::string clip_id = "");
std::string write_predictions(const PredictionTrace& trace);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

// fixed 6-fractional-digit formatting used by all csv/jsonl writers
void append_fixed6(std::string& out, double v);
std::string format_fixed6(double v);

} // namespace xtrace::io
