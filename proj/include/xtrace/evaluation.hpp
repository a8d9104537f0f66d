#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xtrace/core.hpp"
#include "xtrace/io.hpp"
#include "xtrace/metrics.hpp"

namespace xtrace::eval {

struct Misalignment : Error {
    using Error::Error;
};

// one aligned prediction/ground-truth pair; gt is the clip label replicated
// over the clip's frames
struct FrameSample {
    std::string clip_id;
    std::int64_t frame = 0;
    VAPoint pred;
    VAPoint gt;
    UncertaintyTriple unc_v;
    UncertaintyTriple unc_a;
    std::optional<io::PoseBin> pose;
};

// Joins prediction traces against manifest labels; every predicted clip must
// carry a label. Result is sorted by (clip_id, frame).
std::vector<FrameSample> align_samples(const std::vector<io::PredictionTrace>& predictions,
                                       const io::DatasetManifest& manifest);

struct OverallBlock {
    double ccc_v = 0.0, ccc_a = 0.0;
    double mae_v = 0.0, mae_a = 0.0;
    std::size_t n_frames = 0;
};

struct QuadrantCell {
    std::size_t count = 0;
    double ccc_v = 0.0, ccc_a = 0.0;
    double mae_v = 0.0, mae_a = 0.0;
    bool degenerate = false;  // too few or constant frames for a CCC
};

struct QuadrantBlock {
    std::array<QuadrantCell, 4> cells;  // indexed by Quadrant order Q1..Q4
};

enum class CellFlag { empty, below_human, above_human };

struct GridCell {
    std::size_t count = 0;
    double mae_v = 0.0, mae_a = 0.0;
    CellFlag flag = CellFlag::empty;
};

struct GridBlock {
    int resolution = 8;
    double threshold_v = 0.17;  // human inter-rater WMAE, valence
    double threshold_a = 0.19;  // human inter-rater WMAE, arousal
    std::vector<GridCell> cells;  // row-major, row * resolution + col

    const GridCell& at(int row, int col) const {
        return cells[static_cast<std::size_t>(row) * resolution + col];
    }
};

struct PoseRow {
    io::PoseBin bin;
    std::size_t n_frames = 0;
    double ccc_v = 0.0, ccc_a = 0.0;
    double mae_v = 0.0, mae_a = 0.0;
};

struct PoseBlock {
    std::vector<PoseRow> rows;
    std::size_t frames_without_pose = 0;
};

enum class FilterMode { lowest, highest };
enum class Dim { valence, arousal };

struct LeaveNPoint {
    double n_percent = 0.0;
    std::size_t kept = 0;
    double ccc = 0.0;
    double mae = 0.0;
};

struct LeaveNBlock {
    std::vector<LeaveNPoint> valence_lowest, valence_highest;
    std::vector<LeaveNPoint> arousal_lowest, arousal_highest;
};

struct WmaeBlock {
    bool present = false;
    double valence = 0.0;
    double arousal = 0.0;
};

OverallBlock overall_eval(std::span<const FrameSample> samples);

// membership by ground-truth VA
QuadrantBlock quadrant_report(std::span<const FrameSample> samples);
GridBlock grid_report(std::span<const FrameSample> samples, int resolution,
                      double threshold_v = 0.17, double threshold_a = 0.19);
PoseBlock pose_report(std::span<const FrameSample> samples);

// Keeps the ceil(N% * total) frames with the lowest (or highest) cumulative
// uncertainty for the given dimension; ties broken by (clip_id, frame).
std::vector<LeaveNPoint> leave_n_in(std::span<const FrameSample> samples, Dim dim,
                                    std::span<const double> n_percents, FilterMode mode);

struct EvalOptions {
    int grid_resolution = 8;
    double threshold_v = 0.17;
    double threshold_a = 0.19;
    std::vector<double> leave_n = {25.0, 50.0, 75.0, 100.0};
};

struct EvalReport {
    OverallBlock overall;
    QuadrantBlock quadrants;
    GridBlock grid;
    PoseBlock pose;
    LeaveNBlock leave_n;
    WmaeBlock wmae;
};

EvalReport full_report(std::span<const FrameSample> samples, const EvalOptions& options,
                       const std::vector<io::ClipAnnotation>* annotations = nullptr);

// stable key order, byte-identical for identical inputs
std::string report_to_json(const EvalReport& report);

// flat csv views and gnuplot-ready curve data
std::string quadrant_csv(const QuadrantBlock& block);
std::string grid_csv(const GridBlock& block);
std::string pose_csv(const PoseBlock& block);
std::string leave_n_curve_data(const std::vector<LeaveNPoint>& curve);
std::string ced_curve_data(std::span<const double> nmes, double threshold, int steps);

std::string pose_label(const io::PoseBin& bin);

} // namespace xtrace::eval
