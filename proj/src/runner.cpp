#include "xtrace/runner.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace xtrace::run {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

void ensure_dir(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

ordered_json sim_config_json(const sim::SimConfig& c) {
    return {{"seed", c.seed},
            {"clip_len_frames", c.clip_len_frames},
            {"ou_theta", c.ou_theta},
            {"ou_sigma", c.ou_sigma},
            {"noise_std", c.noise_std},
            {"occlusion_rate", c.occlusion_rate},
            {"invalid_rate", c.invalid_rate}};
}

ordered_json dataset_options_json(const sim::DatasetOptions& o) {
    return {{"n_clips", o.n_clips},
            {"clips_per_subject", o.clips_per_subject},
            {"train_frac", o.train_frac},
            {"val_frac", o.val_frac},
            {"raters", o.raters},
            {"rater_noise", o.rater_noise},
            {"assign_pose_bins", o.assign_pose_bins}};
}

ordered_json model_config_json(const ModelConfig& c) {
    return {{"input_dim", c.input_dim},
            {"hidden_dim", c.hidden_dim},
            {"temporal_layers", c.temporal_layers},
            {"kernel_size", c.kernel_size},
            {"seed", c.seed}};
}

ordered_json train_config_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"lambda_reg", c.lambda_reg},
            {"lambda_ccc", c.lambda_ccc},
            {"seed", c.seed}};
}

ordered_json pipeline_config_json(const PipelineConfig& c) {
    return {{"window_len", c.window_len},
            {"warmup", c.warmup == WarmupMode::replicate_first ? "replicate_first"
                                                               : "emit_after_fill"}};
}

void write_run_config(const std::string& out_dir, const char* command, ordered_json body) {
    ordered_json doc;
    doc["command"] = command;
    doc["config"] = std::move(body);
    io::write_file(out_dir + "/run_config.json", doc.dump(2) + "\n");
}

io::DatasetManifest load_manifest(const std::string& data_dir) {
    return io::parse_manifest(io::read_file(data_dir + "/manifest.json"));
}

} // namespace

int resolve_threads(int requested) {
    int threads = requested > 0 ? requested
                                : static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    if (const char* cap = std::getenv("XTRACE_THREADS")) {
        const int limit = std::atoi(cap);
        if (limit > 0 && limit < threads) threads = limit;
    }
    return threads;
}

SimulateSummary cmd_simulate(const SimulateOptions& options) {
    if (options.out_dir.empty()) throw ConfigError("simulate: output directory required");
    const auto dataset = sim::generate_dataset(options.sim, options.dataset);

    ensure_dir(options.out_dir);
    ensure_dir(options.out_dir + "/traces");

    SimulateSummary summary;
    summary.n_clips = static_cast<int>(dataset.clips.size());
    for (const auto& clip : dataset.clips) {
        io::write_file(options.out_dir + "/traces/" + clip.trace.clip_id + ".jsonl",
                       io::write_trace(clip.trace));
        summary.n_frames += clip.trace.frames.size();
        summary.quadrant_counts[static_cast<int>(quadrant_of(clip.label))] += 1;
    }
    io::write_file(options.out_dir + "/manifest.json", io::write_manifest(dataset.manifest()));
    if (!dataset.annotations.empty()) {
        io::write_file(options.out_dir + "/annotations.csv",
                       io::write_annotations(dataset.annotations));
    }

    ordered_json cfg;
    cfg["sim"] = sim_config_json(options.sim);
    cfg["dataset"] = dataset_options_json(options.dataset);
    write_run_config(options.out_dir, "simulate", std::move(cfg));
    return summary;
}

TrainSummary cmd_train(const TrainOptions& options) {
    const auto manifest = load_manifest(options.data_dir);

    std::vector<TrainClip> clips;
    for (const auto& entry : manifest.clips) {
        if (entry.split != "train") continue;
        if (!entry.label) throw ConfigError("train clip " + entry.clip_id + " has no label");
        const auto trace =
            io::parse_trace(io::read_file(options.data_dir + "/" + entry.trace_path),
                            entry.clip_id);
        clips.push_back(make_train_clip(normalize_trace(trace), kFeatureDim, *entry.label));
    }
    if (clips.empty()) throw EmptyTrainSet("manifest has no labelled train clips");

    Model model(options.model);
    const TrainResult result = train(model, clips, options.train);

    ensure_dir(options.out_dir);
    TrainSummary summary;
    summary.checkpoint_path = options.out_dir + "/model.ckpt";
    summary.epoch_loss = result.epoch_loss;
    model.save_file(summary.checkpoint_path);

    std::string history = "epoch,loss\n";
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
        history += std::to_string(e) + ',' + io::format_fixed6(result.epoch_loss[e]) + '\n';
    }
    io::write_file(options.out_dir + "/loss_history.csv", history);

    ordered_json cfg;
    cfg["data_dir"] = options.data_dir;
    cfg["model"] = model_config_json(options.model);
    cfg["train"] = train_config_json(options.train);
    write_run_config(options.out_dir, "train", std::move(cfg));
    return summary;
}

InferSummary cmd_infer(const InferOptions& options) {
    const Model model = Model::load_file(options.checkpoint);
    const auto manifest = load_manifest(options.data_dir);

    std::vector<const io::ManifestEntry*> selected;
    for (const auto& entry : manifest.clips) {
        if (options.split.empty() || entry.split == options.split) selected.push_back(&entry);
    }
    if (selected.empty())
        throw ConfigError("no clips in split '" + options.split + "'");

    ensure_dir(options.out_dir);
    ensure_dir(options.out_dir + "/predictions");

    std::vector<io::PredictionTrace> results(selected.size());
    const int threads = resolve_threads(options.threads);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string error_message;
    std::mutex error_mutex;

    auto worker = [&]() {
        while (!failed.load(std::memory_order_relaxed)) {
            const std::size_t i = next.fetch_add(1);
            if (i >= selected.size()) break;
            try {
                const auto trace =
                    io::parse_trace(io::read_file(options.data_dir + "/" + selected[i]->trace_path),
                                    selected[i]->clip_id);
                results[i] = run_trace(model, options.pipeline, trace);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                error_message = e.what();
                failed.store(true);
            }
        }
    };

    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failed) throw Error("infer failed: " + error_message);

    InferSummary summary;
    summary.n_clips = static_cast<int>(results.size());
    for (const auto& pred : results) {
        io::write_file(options.out_dir + "/predictions/" + pred.clip_id + ".csv",
                       io::write_predictions(pred));
        summary.n_frames += pred.records.size();
    }

    ordered_json cfg;
    cfg["checkpoint"] = options.checkpoint;
    cfg["data_dir"] = options.data_dir;
    cfg["split"] = options.split;
    cfg["pipeline"] = pipeline_config_json(options.pipeline);
    cfg["model"] = model_config_json(model.config());
    write_run_config(options.out_dir, "infer", std::move(cfg));
    return summary;
}

eval::EvalReport cmd_eval(const EvalCmdOptions& options) {
    const auto manifest = load_manifest(options.data_dir);

    std::vector<io::PredictionTrace> predictions;
    for (const auto& entry : manifest.clips) {
        const std::string path = options.pred_dir + "/" + entry.clip_id + ".csv";
        if (!fs::exists(path)) continue;
        predictions.push_back(io::parse_predictions(io::read_file(path), entry.clip_id));
    }
    if (predictions.empty())
        throw eval::Misalignment("no prediction files found under " + options.pred_dir);

    std::vector<io::ClipAnnotation> annotations;
    std::string ann_path = options.annotations_path;
    if (ann_path.empty()) {
        const std::string default_path = options.data_dir + "/annotations.csv";
        if (fs::exists(default_path)) ann_path = default_path;
    }
    if (!ann_path.empty()) annotations = io::parse_annotations(io::read_file(ann_path));

    const auto samples = eval::align_samples(predictions, manifest);
    const auto report =
        eval::full_report(samples, options.eval, annotations.empty() ? nullptr : &annotations);

    ensure_dir(options.out_dir);
    io::write_file(options.out_dir + "/report.json", eval::report_to_json(report));
    io::write_file(options.out_dir + "/quadrants.csv", eval::quadrant_csv(report.quadrants));
    io::write_file(options.out_dir + "/grid.csv", eval::grid_csv(report.grid));
    io::write_file(options.out_dir + "/pose.csv", eval::pose_csv(report.pose));
    const bool lowest = options.curve_filter == eval::FilterMode::lowest;
    io::write_file(options.out_dir + "/leave_n_valence.dat",
                   eval::leave_n_curve_data(lowest ? report.leave_n.valence_lowest
                                                   : report.leave_n.valence_highest));
    io::write_file(options.out_dir + "/leave_n_arousal.dat",
                   eval::leave_n_curve_data(lowest ? report.leave_n.arousal_lowest
                                                   : report.leave_n.arousal_highest));

    ordered_json cfg;
    cfg["pred_dir"] = options.pred_dir;
    cfg["data_dir"] = options.data_dir;
    cfg["annotations"] = ann_path;
    cfg["grid_resolution"] = options.eval.grid_resolution;
    cfg["threshold_v"] = options.eval.threshold_v;
    cfg["threshold_a"] = options.eval.threshold_a;
    cfg["leave_n"] = options.eval.leave_n;
    cfg["filter"] = lowest ? "lowest" : "highest";
    write_run_config(options.out_dir, "eval", std::move(cfg));
    return report;
}

} // namespace xtrace::run
