#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xtrace/runner.hpp"

namespace {

using nlohmann::json;
using namespace xtrace;

// exit code contract: 2 bad args, 3 I/O or input-data failure, 4 training
// divergence, 5 checkpoint/config mismatch, 6 misaligned eval inputs
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitCheckpoint = 5;
constexpr int kExitMisaligned = 6;

json load_config_file(int argc, char** argv) {
    for (int i = 1; i < argc - 1; ++i) {
        if (std::string(argv[i]) == "--config") {
            return json::parse(io::read_file(argv[i + 1]));
        }
    }
    return json::object();
}

json section(const json& cfg, const char* name) {
    if (cfg.contains(name) && cfg[name].is_object()) return cfg[name];
    return json::object();
}

template <typename T>
void from_config(const json& sec, const char* key, T& target) {
    if (sec.contains(key)) target = sec[key].get<T>();
}

WarmupMode parse_warmup(const std::string& s) {
    if (s == "replicate_first") return WarmupMode::replicate_first;
    if (s == "emit_after_fill") return WarmupMode::emit_after_fill;
    throw ConfigError("unknown warmup mode: " + s);
}

eval::FilterMode parse_filter(const std::string& s) {
    if (s == "lowest") return eval::FilterMode::lowest;
    if (s == "highest") return eval::FilterMode::highest;
    throw ConfigError("unknown filter mode: " + s);
}

int dispatch(int argc, char** argv) {
    CLI::App app{"streaming valence/arousal regression over facial low-level descriptors"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file; flags override its values");

    const json cfg = load_config_file(argc, argv);

    // ---------------------------------------------------------- simulate
    run::SimulateOptions sim_opt;
    {
        const json sec = section(cfg, "simulate");
        from_config(sec, "seed", sim_opt.sim.seed);
        from_config(sec, "clips", sim_opt.dataset.n_clips);
        from_config(sec, "clip_len", sim_opt.sim.clip_len_frames);
        from_config(sec, "ou_theta", sim_opt.sim.ou_theta);
        from_config(sec, "ou_sigma", sim_opt.sim.ou_sigma);
        from_config(sec, "noise_std", sim_opt.sim.noise_std);
        from_config(sec, "occlusion_rate", sim_opt.sim.occlusion_rate);
        from_config(sec, "invalid_rate", sim_opt.sim.invalid_rate);
        from_config(sec, "clips_per_subject", sim_opt.dataset.clips_per_subject);
        from_config(sec, "train_frac", sim_opt.dataset.train_frac);
        from_config(sec, "val_frac", sim_opt.dataset.val_frac);
        from_config(sec, "raters", sim_opt.dataset.raters);
        from_config(sec, "rater_noise", sim_opt.dataset.rater_noise);
        from_config(sec, "pose_bins", sim_opt.dataset.assign_pose_bins);
        from_config(sec, "out", sim_opt.out_dir);
    }
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
    simulate->add_option("--out", sim_opt.out_dir, "output directory");
    simulate->add_option("--clips", sim_opt.dataset.n_clips, "number of clips");
    simulate->add_option("--seed", sim_opt.sim.seed, "base seed");
    simulate->add_option("--clip-len", sim_opt.sim.clip_len_frames, "frames per clip");
    simulate->add_option("--ou-theta", sim_opt.sim.ou_theta, "trajectory mean reversion");
    simulate->add_option("--ou-sigma", sim_opt.sim.ou_sigma, "trajectory volatility");
    simulate->add_option("--noise-std", sim_opt.sim.noise_std, "feature noise level");
    simulate->add_option("--occlusion-rate", sim_opt.sim.occlusion_rate, "per-frame occlusion rate");
    simulate->add_option("--invalid-rate", sim_opt.sim.invalid_rate, "per-frame invalid rate");
    simulate->add_option("--clips-per-subject", sim_opt.dataset.clips_per_subject);
    simulate->add_option("--train-frac", sim_opt.dataset.train_frac);
    simulate->add_option("--val-frac", sim_opt.dataset.val_frac);
    simulate->add_option("--raters", sim_opt.dataset.raters, "synthetic raters per clip");
    simulate->add_option("--rater-noise", sim_opt.dataset.rater_noise, "per-rater label noise");
    simulate->add_flag("--no-pose-bins", [&](std::int64_t) { sim_opt.dataset.assign_pose_bins = false; },
                       "omit pose metadata");

    // ---------------------------------------------------------- train
    run::TrainOptions train_opt;
    {
        const json sec = section(cfg, "train");
        from_config(sec, "data", train_opt.data_dir);
        from_config(sec, "out", train_opt.out_dir);
        from_config(sec, "epochs", train_opt.train.epochs);
        from_config(sec, "batch_size", train_opt.train.batch_size);
        from_config(sec, "learning_rate", train_opt.train.learning_rate);
        from_config(sec, "lambda_reg", train_opt.train.lambda_reg);
        from_config(sec, "lambda_ccc", train_opt.train.lambda_ccc);
        from_config(sec, "seed", train_opt.train.seed);
        from_config(sec, "hidden_dim", train_opt.model.hidden_dim);
        from_config(sec, "temporal_layers", train_opt.model.temporal_layers);
        from_config(sec, "kernel_size", train_opt.model.kernel_size);
        from_config(sec, "model_seed", train_opt.model.seed);
    }
    auto* train_cmd = app.add_subcommand("train", "train the affect regressor");
    train_cmd->add_option("--data", train_opt.data_dir, "dataset directory");
    train_cmd->add_option("--out", train_opt.out_dir, "output directory");
    train_cmd->add_option("--epochs", train_opt.train.epochs);
    train_cmd->add_option("--batch-size", train_opt.train.batch_size);
    train_cmd->add_option("--lr", train_opt.train.learning_rate);
    train_cmd->add_option("--lambda-reg", train_opt.train.lambda_reg);
    train_cmd->add_option("--lambda-ccc", train_opt.train.lambda_ccc);
    train_cmd->add_option("--seed", train_opt.train.seed, "shuffle seed");
    train_cmd->add_option("--hidden", train_opt.model.hidden_dim);
    train_cmd->add_option("--layers", train_opt.model.temporal_layers);
    train_cmd->add_option("--kernel", train_opt.model.kernel_size);
    train_cmd->add_option("--model-seed", train_opt.model.seed, "init seed");

    // ---------------------------------------------------------- infer
    run::InferOptions infer_opt;
    std::string warmup_name = "replicate_first";
    {
        const json sec = section(cfg, "infer");
        from_config(sec, "checkpoint", infer_opt.checkpoint);
        from_config(sec, "data", infer_opt.data_dir);
        from_config(sec, "out", infer_opt.out_dir);
        from_config(sec, "split", infer_opt.split);
        from_config(sec, "window", infer_opt.pipeline.window_len);
        from_config(sec, "warmup", warmup_name);
        from_config(sec, "threads", infer_opt.threads);
    }
    auto* infer_cmd = app.add_subcommand("infer", "run streaming inference over traces");
    infer_cmd->add_option("--checkpoint", infer_opt.checkpoint, "model checkpoint");
    infer_cmd->add_option("--data", infer_opt.data_dir, "dataset directory");
    infer_cmd->add_option("--out", infer_opt.out_dir, "output directory");
    infer_cmd->add_option("--split", infer_opt.split, "manifest split to run");
    infer_cmd->add_option("--window", infer_opt.pipeline.window_len, "sliding window length");
    infer_cmd->add_option("--warmup", warmup_name, "replicate_first | emit_after_fill");
    infer_cmd->add_option("--threads", infer_opt.threads, "0 = auto (XTRACE_THREADS caps)");

    // ---------------------------------------------------------- eval
    run::EvalCmdOptions eval_opt;
    std::string filter_name = "lowest";
    {
        const json sec = section(cfg, "eval");
        from_config(sec, "pred", eval_opt.pred_dir);
        from_config(sec, "data", eval_opt.data_dir);
        from_config(sec, "out", eval_opt.out_dir);
        from_config(sec, "annotations", eval_opt.annotations_path);
        from_config(sec, "grid_res", eval_opt.eval.grid_resolution);
        from_config(sec, "threshold_v", eval_opt.eval.threshold_v);
        from_config(sec, "threshold_a", eval_opt.eval.threshold_a);
        from_config(sec, "leave_n", eval_opt.eval.leave_n);
        from_config(sec, "filter", filter_name);
    }
    auto* eval_cmd = app.add_subcommand("eval", "evaluate predictions against labels");
    eval_cmd->add_option("--pred", eval_opt.pred_dir, "predictions directory");
    eval_cmd->add_option("--data", eval_opt.data_dir, "dataset directory");
    eval_cmd->add_option("--out", eval_opt.out_dir, "output directory");
    eval_cmd->add_option("--annotations", eval_opt.annotations_path, "multi-rater csv");
    eval_cmd->add_option("--grid-res", eval_opt.eval.grid_resolution, "grid resolution R");
    eval_cmd->add_option("--threshold-v", eval_opt.eval.threshold_v, "human WMAE, valence");
    eval_cmd->add_option("--threshold-a", eval_opt.eval.threshold_a, "human WMAE, arousal");
    eval_cmd->add_option("--leave-n", eval_opt.eval.leave_n, "leave-N-in percentages")
        ->delimiter(',');
    eval_cmd->add_option("--filter", filter_name, "lowest | highest (curve files)");

    app.parse(argc, argv);

    if (simulate->parsed()) {
        const auto summary = run::cmd_simulate(sim_opt);
        std::printf("simulated %d clips (%zu frames) into %s\n", summary.n_clips,
                    summary.n_frames, sim_opt.out_dir.c_str());
        std::printf("label quadrant coverage: Q1=%zu Q2=%zu Q3=%zu Q4=%zu\n",
                    summary.quadrant_counts[0], summary.quadrant_counts[1],
                    summary.quadrant_counts[2], summary.quadrant_counts[3]);
    } else if (train_cmd->parsed()) {
        const auto summary = run::cmd_train(train_opt);
        if (summary.epoch_loss.empty()) {
            std::printf("trained 0 epochs; checkpoint %s\n", summary.checkpoint_path.c_str());
        } else {
            std::printf("trained %zu epochs; loss %.6f -> %.6f; checkpoint %s\n",
                        summary.epoch_loss.size(), summary.epoch_loss.front(),
                        summary.epoch_loss.back(), summary.checkpoint_path.c_str());
        }
    } else if (infer_cmd->parsed()) {
        infer_opt.pipeline.warmup = parse_warmup(warmup_name);
        const auto summary = run::cmd_infer(infer_opt);
        std::printf("wrote predictions for %d clips (%zu frames) into %s\n", summary.n_clips,
                    summary.n_frames, infer_opt.out_dir.c_str());
    } else if (eval_cmd->parsed()) {
        eval_opt.curve_filter = parse_filter(filter_name);
        const auto report = run::cmd_eval(eval_opt);
        std::printf("overall: ccc_v=%.4f ccc_a=%.4f mae_v=%.4f mae_a=%.4f (%zu frames)\n",
                    report.overall.ccc_v, report.overall.ccc_a, report.overall.mae_v,
                    report.overall.mae_a, report.overall.n_frames);
        std::printf("report written to %s/report.json\n", eval_opt.out_dir.c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::printf("%s\n", e.what());
        return 0;
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "argument error: %s\n", e.what());
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitUsage;
    } catch (const EmptyTrainSet& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitUsage;
    } catch (const NonFiniteLoss& e) {
        std::fprintf(stderr, "training diverged: %s\n", e.what());
        return kExitDiverged;
    } catch (const CheckpointError& e) {
        std::fprintf(stderr, "checkpoint error: %s\n", e.what());
        return kExitCheckpoint;
    } catch (const ShapeMismatch& e) {
        std::fprintf(stderr, "checkpoint/config mismatch: %s\n", e.what());
        return kExitCheckpoint;
    } catch (const xtrace::eval::Misalignment& e) {
        std::fprintf(stderr, "misaligned inputs: %s\n", e.what());
        return kExitMisaligned;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitIo;
    } catch (const xtrace::io::ParseError& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return kExitIo;
    } catch (const xtrace::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
