#pragma once

#include <array>
#include <string>
#include <vector>

#include "xtrace/evaluation.hpp"
#include "xtrace/pipeline.hpp"
#include "xtrace/regressor.hpp"
#include "xtrace/simulator.hpp"

// High-level command flows. The CLI is a thin argument layer over these, so
// library callers get bit-identical results.
namespace xtrace::run {

struct SimulateOptions {
    sim::SimConfig sim;
    sim::DatasetOptions dataset;
    std::string out_dir;
};

struct SimulateSummary {
    int n_clips = 0;
    std::size_t n_frames = 0;
    // clip-label counts per quadrant, indexed by Quadrant order
    std::array<std::size_t, 4> quadrant_counts{};
};

// Writes traces/, manifest.json, annotations.csv (when raters > 0) and
// run_config.json under out_dir.
SimulateSummary cmd_simulate(const SimulateOptions& options);

struct TrainOptions {
    std::string data_dir;
    std::string out_dir;
    ModelConfig model;
    TrainConfig train;
};

struct TrainSummary {
    std::vector<double> epoch_loss;
    std::string checkpoint_path;
};

// Trains on the manifest's train split; writes model.ckpt, loss_history.csv
// and run_config.json under out_dir.
TrainSummary cmd_train(const TrainOptions& options);

struct InferOptions {
    std::string checkpoint;
    std::string data_dir;
    std::string out_dir;
    std::string split = "test";
    PipelineConfig pipeline;
    int threads = 0;  // 0 = hardware concurrency, capped by XTRACE_THREADS
};

struct InferSummary {
    int n_clips = 0;
    std::size_t n_frames = 0;
};

// Writes predictions/<clip_id>.csv per clip plus run_config.json.
InferSummary cmd_infer(const InferOptions& options);

struct EvalCmdOptions {
    std::string pred_dir;
    std::string data_dir;
    std::string out_dir;
    eval::EvalOptions eval;
    std::string annotations_path;  // optional; defaults to data_dir/annotations.csv when present
    eval::FilterMode curve_filter = eval::FilterMode::lowest;
};

// Writes report.json, per-block csv files and leave-N curve data.
eval::EvalReport cmd_eval(const EvalCmdOptions& options);

int resolve_threads(int requested);

} // namespace xtrace::run
