#include "xtrace/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace xtrace::io {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

void append_fixed6(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    out += buf;
}

std::string format_fixed6(double v) {
    std::string s;
    append_fixed6(s, v);
    return s;
}

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return lines;
}

std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double(const std::string& s, int line, const char* what) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw ParseError(line, std::string("trailing junk in ") + what);
        return v;
    } catch (const ParseError&) {
        throw;
    } catch (const std::exception&) {
        throw ParseError(line, std::string("bad number for ") + what + ": '" + s + "'");
    }
}

} // namespace

FeatureTrace parse_trace(std::string_view text, std::string clip_id, double fps) {
    FeatureTrace trace;
    trace.clip_id = std::move(clip_id);
    trace.fps = fps;
    if (!std::isfinite(fps) || fps <= 0.0) throw RangeError("fps must be finite and > 0");

    int line_no = 0;
    std::int64_t last_index = -1;
    for (std::string_view line : split_lines(text)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(line_no, e.what());
        }
        if (!rec.is_object()) throw ParseError(line_no, "record is not an object");
        for (const char* key : {"i", "valid", "lm", "lmu", "au"}) {
            if (!rec.contains(key))
                throw ParseError(line_no, std::string("missing field '") + key + "'");
        }

        FrameFeatures f;
        try {
            f.frame_index = rec["i"].get<std::int64_t>();
            f.valid = rec["valid"].get<int>() != 0;
            const auto& lm = rec["lm"];
            if (!lm.is_array() || lm.size() != kNumLandmarks)
                throw WrongArity("lm", kNumLandmarks, lm.is_array() ? lm.size() : 0);
            for (int i = 0; i < kNumLandmarks; ++i) {
                const auto& pt = lm[i];
                if (!pt.is_array() || pt.size() != 2) throw WrongArity("lm point", 2, pt.size());
                f.landmarks[i].x = pt[0].get<double>();
                f.landmarks[i].y = pt[1].get<double>();
            }
            const auto& lmu = rec["lmu"];
            if (!lmu.is_array() || lmu.size() != kNumLandmarks)
                throw WrongArity("lmu", kNumLandmarks, lmu.is_array() ? lmu.size() : 0);
            for (int i = 0; i < kNumLandmarks; ++i) f.landmark_uncertainties[i] = lmu[i].get<double>();
            const auto& au = rec["au"];
            if (!au.is_array() || au.size() != kNumActionUnits)
                throw WrongArity("au", kNumActionUnits, au.is_array() ? au.size() : 0);
            for (int i = 0; i < kNumActionUnits; ++i) f.au_intensities[i] = au[i].get<double>();
        } catch (const json::exception& e) {
            throw ParseError(line_no, e.what());
        }

        if (f.frame_index < 0) throw ParseError(line_no, "negative frame index");
        if (trace.frames.empty() && f.frame_index != 0)
            throw NonMonotoneFrameIndex("trace must start at frame 0, got " +
                                        std::to_string(f.frame_index));
        if (f.frame_index <= last_index)
            throw NonMonotoneFrameIndex("frame index " + std::to_string(f.frame_index) +
                                        " after " + std::to_string(last_index));
        last_index = f.frame_index;
        trace.frames.push_back(validate_frame(f));
    }
    return trace;
}

std::string write_trace(const FeatureTrace& trace) {
    std::string out;
    out.reserve(trace.frames.size() * 2048);
    for (const FrameFeatures& f : trace.frames) {
        out += "{\"i\":";
        out += std::to_string(f.frame_index);
        out += ",\"valid\":";
        out += f.valid ? '1' : '0';
        out += ",\"lm\":[";
        for (int i = 0; i < kNumLandmarks; ++i) {
            if (i) out += ',';
            out += '[';
            append_fixed6(out, f.landmarks[i].x);
            out += ',';
            append_fixed6(out, f.landmarks[i].y);
            out += ']';
        }
        out += "],\"lmu\":[";
        for (int i = 0; i < kNumLandmarks; ++i) {
            if (i) out += ',';
            append_fixed6(out, f.landmark_uncertainties[i]);
        }
        out += "],\"au\":[";
        for (int i = 0; i < kNumActionUnits; ++i) {
            if (i) out += ',';
            append_fixed6(out, f.au_intensities[i]);
        }
        out += "]}\n";
    }
    return out;
}

static constexpr const char* kAnnotationHeader = "clip_id,rater_id,valence,arousal";

std::vector<ClipAnnotation> parse_annotations(std::string_view text) {
    auto lines = split_lines(text);
    if (lines.empty()) throw ParseError(1, "missing header row");
    {
        auto header = split_csv(lines[0]);
        auto expect = split_csv(kAnnotationHeader);
        if (header != expect) throw ParseError(1, "unexpected header");
    }
    std::vector<ClipAnnotation> out;
    std::set<std::pair<std::string, std::string>> seen;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        if (lines[li].empty() || lines[li] == "\r") continue;
        auto fields = split_csv(lines[li]);
        const int line_no = static_cast<int>(li + 1);
        if (fields.size() != 4) throw ParseError(line_no, "expected 4 fields");
        ClipAnnotation a;
        a.clip_id = fields[0];
        a.rater_id = fields[1];
        a.va.valence = parse_double(fields[2], line_no, "valence");
        a.va.arousal = parse_double(fields[3], line_no, "arousal");
        if (!std::isfinite(a.va.valence) || std::abs(a.va.valence) > 1.0)
            throw RangeError("valence out of [-1,1] at line " + std::to_string(line_no));
        if (!std::isfinite(a.va.arousal) || std::abs(a.va.arousal) > 1.0)
            throw RangeError("arousal out of [-1,1] at line " + std::to_string(line_no));
        if (!seen.insert({a.clip_id, a.rater_id}).second)
            throw DuplicateAnnotation("duplicate (clip, rater): (" + a.clip_id + ", " +
                                      a.rater_id + ")");
        out.push_back(std::move(a));
    }
    return out;
}

std::string write_annotations(const std::vector<ClipAnnotation>& annotations) {
    std::string out = kAnnotationHeader;
    out += '\n';
    for (const auto& a : annotations) {
        out += a.clip_id;
        out += ',';
        out += a.rater_id;
        out += ',';
        append_fixed6(out, a.va.valence);
        out += ',';
        append_fixed6(out, a.va.arousal);
        out += '\n';
    }
    return out;
}

void check_manifest(const DatasetManifest& manifest) {
    std::set<std::string> ids;
    std::map<std::string, std::string> subject_split;
    for (const auto& e : manifest.clips) {
        if (!ids.insert(e.clip_id).second)
            throw ManifestError("duplicate clip_id: " + e.clip_id);
        if (e.split != "train" && e.split != "val" && e.split != "test")
            throw ManifestError("unknown split '" + e.split + "' for clip " + e.clip_id);
        auto [it, inserted] = subject_split.emplace(e.subject_id, e.split);
        if (!inserted && it->second != e.split)
            throw ManifestError("subject " + e.subject_id + " appears in splits '" +
                                it->second + "' and '" + e.split + "'");
        if (e.label) {
            if (std::abs(e.label->valence) > 1.0 || std::abs(e.label->arousal) > 1.0)
                throw RangeError("label out of range for clip " + e.clip_id);
        }
    }
}

DatasetManifest parse_manifest(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(0, e.what());
    }
    if (!doc.is_object() || !doc.contains("clips") || !doc["clips"].is_array())
        throw ManifestError("manifest must be an object with a 'clips' array");
    DatasetManifest m;
    for (const auto& c : doc["clips"]) {
        ManifestEntry e;
        try {
            e.clip_id = c.at("clip_id").get<std::string>();
            e.trace_path = c.at("trace_path").get<std::string>();
            e.split = c.at("split").get<std::string>();
            e.subject_id = c.at("subject_id").get<std::string>();
            if (c.contains("pose_bin") && !c["pose_bin"].is_null()) {
                PoseBin pb;
                pb.yaw_deg = c["pose_bin"].at("yaw_deg").get<double>();
                pb.pitch_deg = c["pose_bin"].at("pitch_deg").get<double>();
                e.pose_bin = pb;
            }
            if (c.contains("label") && !c["label"].is_null()) {
                VAPoint p;
                p.valence = c["label"].at("valence").get<double>();
                p.arousal = c["label"].at("arousal").get<double>();
                e.label = p;
            }
        } catch (const json::exception& ex) {
            throw ManifestError(std::string("bad manifest entry: ") + ex.what());
        }
        m.clips.push_back(std::move(e));
    }
    check_manifest(m);
    return m;
}

std::string write_manifest(const DatasetManifest& manifest) {
    check_manifest(manifest);
    ordered_json doc;
    doc["clips"] = ordered_json::array();
    for (const auto& e : manifest.clips) {
        ordered_json c;
        c["clip_id"] = e.clip_id;
        c["trace_path"] = e.trace_path;
        c["split"] = e.split;
        c["subject_id"] = e.subject_id;
        if (e.pose_bin) {
            c["pose_bin"] = {{"yaw_deg", e.pose_bin->yaw_deg},
                             {"pitch_deg", e.pose_bin->pitch_deg}};
        } else {
            c["pose_bin"] = nullptr;
        }
        if (e.label) {
            c["label"] = {{"valence", e.label->valence}, {"arousal", e.label->arousal}};
        } else {
            c["label"] = nullptr;
        }
        doc["clips"].push_back(std::move(c));
    }
    return doc.dump(2) + "\n";
}

static constexpr const char* kPredictionHeader =
    "frame,valence,arousal,u_epi_v,u_ale_v,u_cum_v,u_epi_a,u_ale_a,u_cum_a";

PredictionTrace parse_predictions(std::string_view text, std::string clip_id) {
    auto lines = split_lines(text);
    if (lines.empty()) throw ParseError(1, "missing header row");
    if (std::string(lines[0].substr(0, lines[0].find('\r'))) != kPredictionHeader)
        throw ParseError(1, "unexpected header");
    PredictionTrace trace;
    trace.clip_id = std::move(clip_id);
    std::int64_t last = -1;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        if (lines[li].empty() || lines[li] == "\r") continue;
        const int line_no = static_cast<int>(li + 1);
        auto fields = split_csv(lines[li]);
        if (fields.size() != 9) throw ParseError(line_no, "expected 9 fields");
        PredictionRecord r;
        r.frame = static_cast<std::int64_t>(parse_double(fields[0], line_no, "frame"));
        if (r.frame <= last) throw NonMonotoneFrameIndex("prediction frames not increasing");
        last = r.frame;
        auto& o = r.output;
        o.va.valence = parse_double(fields[1], line_no, "valence");
        o.va.arousal = parse_double(fields[2], line_no, "arousal");
        o.uncertainty_valence.epistemic = parse_double(fields[3], line_no, "u_epi_v");
        o.uncertainty_valence.aleatoric = parse_double(fields[4], line_no, "u_ale_v");
        o.uncertainty_valence.cumulative = parse_double(fields[5], line_no, "u_cum_v");
        o.uncertainty_arousal.epistemic = parse_double(fields[6], line_no, "u_epi_a");
        o.uncertainty_arousal.aleatoric = parse_double(fields[7], line_no, "u_ale_a");
        o.uncertainty_arousal.cumulative = parse_double(fields[8], line_no, "u_cum_a");
        if (std::abs(o.va.valence) > 1.0 || std::abs(o.va.arousal) > 1.0)
            throw RangeError("prediction VA out of range at line " + std::to_string(line_no));
        for (double u : {o.uncertainty_valence.epistemic, o.uncertainty_valence.aleatoric,
                         o.uncertainty_valence.cumulative, o.uncertainty_arousal.epistemic,
                         o.uncertainty_arousal.aleatoric, o.uncertainty_arousal.cumulative}) {
            if (u < 0.0 || u > 1.0)
                throw RangeError("uncertainty out of range at line " + std::to_string(line_no));
        }
        trace.records.push_back(r);
    }
    return trace;
}

std::string write_predictions(const PredictionTrace& trace) {
    std::string out = kPredictionHeader;
    out += '\n';
    for (const auto& r : trace.records) {
        out += std::to_string(r.frame);
        const auto& o = r.output;
        for (double v : {o.va.valence, o.va.arousal, o.uncertainty_valence.epistemic,
                         o.uncertainty_valence.aleatoric, o.uncertainty_valence.cumulative,
                         o.uncertainty_arousal.epistemic, o.uncertainty_arousal.aleatoric,
                         o.uncertainty_arousal.cumulative}) {
            out += ',';
            append_fixed6(out, v);
        }
        out += '\n';
    }
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed: " + path);
}

} // namespace xtrace::io
