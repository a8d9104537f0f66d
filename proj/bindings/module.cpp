#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "xtrace/metrics.hpp"
#include "xtrace/runner.hpp"

namespace py = pybind11;
using namespace xtrace;

namespace {

metrics::RatingsMatrix to_matrix(const std::vector<std::vector<double>>& rows) {
    metrics::RatingsMatrix m;
    m.n = static_cast<int>(rows.size());
    m.k = rows.empty() ? 0 : static_cast<int>(rows[0].size());
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != m.k)
            throw metrics::LengthMismatch("ragged ratings matrix");
        m.values.insert(m.values.end(), row.begin(), row.end());
    }
    return m;
}

Landmarks68 to_landmarks(const std::vector<std::vector<double>>& pts) {
    if (pts.size() != kNumLandmarks) throw WrongArity("landmarks", kNumLandmarks, pts.size());
    Landmarks68 lm;
    for (int i = 0; i < kNumLandmarks; ++i) {
        if (pts[i].size() != 2) throw WrongArity("landmark point", 2, pts[i].size());
        lm[i] = {pts[i][0], pts[i][1]};
    }
    return lm;
}

py::dict overall_dict(const eval::OverallBlock& b) {
    py::dict d;
    d["ccc_v"] = b.ccc_v;
    d["ccc_a"] = b.ccc_a;
    d["mae_v"] = b.mae_v;
    d["mae_a"] = b.mae_a;
    d["n_frames"] = b.n_frames;
    return d;
}

} // namespace

PYBIND11_MODULE(_xtrace, m) {
    m.doc() = "streaming valence/arousal regression with sampling-free uncertainty";

    m.def("ccc", [](const std::vector<double>& x, const std::vector<double>& y) {
        return metrics::ccc(x, y);
    }, py::arg("x"), py::arg("y"), "Lin's concordance correlation coefficient");
    m.def("mae", [](const std::vector<double>& x, const std::vector<double>& y) {
        return metrics::mae(x, y);
    }, py::arg("x"), py::arg("y"));
    m.def("icc31", [](const std::vector<std::vector<double>>& ratings) {
        return metrics::icc31(to_matrix(ratings));
    }, py::arg("ratings"), "ICC(3,1) over an n_targets x k_raters matrix");
    m.def("nme", [](const std::vector<std::vector<double>>& pred,
                    const std::vector<std::vector<double>>& gt) {
        return metrics::nme(to_landmarks(pred), to_landmarks(gt));
    }, py::arg("pred"), py::arg("gt"), "inter-ocular normalized mean landmark error");
    m.def("ced_auc", [](const std::vector<double>& nmes, double threshold, int steps) {
        return metrics::ced_auc(nmes, threshold, steps);
    }, py::arg("nmes"), py::arg("threshold") = 0.08, py::arg("steps") = 100);

    m.def("quadrant", [](double valence, double arousal) {
        return std::string(to_string(quadrant_of(VAPoint{valence, arousal})));
    }, py::arg("valence"), py::arg("arousal"));
    m.def("grid_bin", [](double valence, double arousal, int resolution) {
        const GridBin b = grid_bin_of(VAPoint{valence, arousal}, resolution);
        return py::make_tuple(b.row, b.col);
    }, py::arg("valence"), py::arg("arousal"), py::arg("resolution") = 8);

    m.def("simulate", [](const std::string& out_dir, int clips, std::uint64_t seed, int clip_len,
                         int raters, double rater_noise, double train_frac, double val_frac) {
        run::SimulateOptions opt;
        opt.out_dir = out_dir;
        opt.dataset.n_clips = clips;
        opt.sim.seed = seed;
        opt.sim.clip_len_frames = clip_len;
        opt.dataset.raters = raters;
        opt.dataset.rater_noise = rater_noise;
        opt.dataset.train_frac = train_frac;
        opt.dataset.val_frac = val_frac;
        const auto s = run::cmd_simulate(opt);
        py::dict d;
        d["n_clips"] = s.n_clips;
        d["n_frames"] = s.n_frames;
        d["quadrant_counts"] = s.quadrant_counts;
        return d;
    }, py::arg("out_dir"), py::arg("clips") = 100, py::arg("seed") = 1,
       py::arg("clip_len") = 120, py::arg("raters") = 0, py::arg("rater_noise") = 0.1,
       py::arg("train_frac") = 0.8, py::arg("val_frac") = 0.1,
       "generate a synthetic dataset directory");

    m.def("train", [](const std::string& data_dir, const std::string& out_dir, int epochs,
                      int hidden_dim, double learning_rate, std::uint64_t seed) {
        run::TrainOptions opt;
        opt.data_dir = data_dir;
        opt.out_dir = out_dir;
        opt.train.epochs = epochs;
        opt.train.learning_rate = learning_rate;
        opt.train.seed = seed;
        opt.model.hidden_dim = hidden_dim;
        const auto s = run::cmd_train(opt);
        py::dict d;
        d["checkpoint"] = s.checkpoint_path;
        d["epoch_loss"] = s.epoch_loss;
        return d;
    }, py::arg("data_dir"), py::arg("out_dir"), py::arg("epochs") = 10,
       py::arg("hidden_dim") = 64, py::arg("learning_rate") = 2e-3, py::arg("seed") = 99);

    m.def("infer", [](const std::string& checkpoint, const std::string& data_dir,
                      const std::string& out_dir, const std::string& split, int window) {
        run::InferOptions opt;
        opt.checkpoint = checkpoint;
        opt.data_dir = data_dir;
        opt.out_dir = out_dir;
        opt.split = split;
        opt.pipeline.window_len = window;
        const auto s = run::cmd_infer(opt);
        py::dict d;
        d["n_clips"] = s.n_clips;
        d["n_frames"] = s.n_frames;
        return d;
    }, py::arg("checkpoint"), py::arg("data_dir"), py::arg("out_dir"),
       py::arg("split") = "test", py::arg("window") = 64);

    m.def("evaluate", [](const std::string& pred_dir, const std::string& data_dir,
                         const std::string& out_dir, int grid_resolution) {
        run::EvalCmdOptions opt;
        opt.pred_dir = pred_dir;
        opt.data_dir = data_dir;
        opt.out_dir = out_dir;
        opt.eval.grid_resolution = grid_resolution;
        const auto report = run::cmd_eval(opt);
        py::dict d;
        d["overall"] = overall_dict(report.overall);
        d["report_json"] = eval::report_to_json(report);
        return d;
    }, py::arg("pred_dir"), py::arg("data_dir"), py::arg("out_dir"),
       py::arg("grid_resolution") = 8);
}
