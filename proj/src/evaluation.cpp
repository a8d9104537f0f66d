#include "xtrace/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include <json.hpp>

namespace xtrace::eval {

using ordered_json = nlohmann::ordered_json;

std::vector<FrameSample> align_samples(const std::vector<io::PredictionTrace>& predictions,
                                       const io::DatasetManifest& manifest) {
    std::map<std::string, const io::ManifestEntry*> by_id;
    for (const auto& e : manifest.clips) by_id[e.clip_id] = &e;

    std::vector<FrameSample> samples;
    for (const auto& pred : predictions) {
        auto it = by_id.find(pred.clip_id);
        if (it == by_id.end())
            throw Misalignment("predictions for unknown clip " + pred.clip_id);
        const io::ManifestEntry& entry = *it->second;
        if (!entry.label)
            throw Misalignment("clip " + pred.clip_id + " has predictions but no label");
        for (const auto& rec : pred.records) {
            FrameSample s;
            s.clip_id = pred.clip_id;
            s.frame = rec.frame;
            s.pred = rec.output.va;
            s.unc_v = rec.output.uncertainty_valence;
            s.unc_a = rec.output.uncertainty_arousal;
            s.gt = *entry.label;
            s.pose = entry.pose_bin;
            samples.push_back(std::move(s));
        }
    }
    std::sort(samples.begin(), samples.end(), [](const FrameSample& a, const FrameSample& b) {
        return std::tie(a.clip_id, a.frame) < std::tie(b.clip_id, b.frame);
    });
    return samples;
}

namespace {

struct Columns {
    std::vector<double> pred_v, pred_a, gt_v, gt_a;
};

Columns gather(std::span<const FrameSample> samples) {
    Columns c;
    c.pred_v.reserve(samples.size());
    c.pred_a.reserve(samples.size());
    c.gt_v.reserve(samples.size());
    c.gt_a.reserve(samples.size());
    for (const auto& s : samples) {
        c.pred_v.push_back(s.pred.valence);
        c.pred_a.push_back(s.pred.arousal);
        c.gt_v.push_back(s.gt.valence);
        c.gt_a.push_back(s.gt.arousal);
    }
    return c;
}

double safe_ccc(std::span<const double> x, std::span<const double> y, bool* degenerate = nullptr) {
    if (x.size() < 2) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    const double v = metrics::ccc(x, y);
    if (degenerate && v == 0.0) *degenerate = true;
    return v;
}

} // namespace

OverallBlock overall_eval(std::span<const FrameSample> samples) {
    if (samples.size() < 2) throw Misalignment("need at least 2 aligned frames");
    const Columns c = gather(samples);
    OverallBlock b;
    b.ccc_v = metrics::ccc(c.pred_v, c.gt_v);
    b.ccc_a = metrics::ccc(c.pred_a, c.gt_a);
    b.mae_v = metrics::mae(c.pred_v, c.gt_v);
    b.mae_a = metrics::mae(c.pred_a, c.gt_a);
    b.n_frames = samples.size();
    return b;
}

QuadrantBlock quadrant_report(std::span<const FrameSample> samples) {
    std::array<std::vector<const FrameSample*>, 4> groups;
    for (const auto& s : samples)
        groups[static_cast<int>(quadrant_of(s.gt))].push_back(&s);

    QuadrantBlock block;
    for (int q = 0; q < 4; ++q) {
        QuadrantCell& cell = block.cells[q];
        cell.count = groups[q].size();
        if (cell.count == 0) {
            cell.degenerate = true;
            continue;
        }
        Columns c;
        for (const FrameSample* s : groups[q]) {
            c.pred_v.push_back(s->pred.valence);
            c.pred_a.push_back(s->pred.arousal);
            c.gt_v.push_back(s->gt.valence);
            c.gt_a.push_back(s->gt.arousal);
        }
        cell.mae_v = metrics::mae(c.pred_v, c.gt_v);
        cell.mae_a = metrics::mae(c.pred_a, c.gt_a);
        bool deg_v = false, deg_a = false;
        cell.ccc_v = safe_ccc(c.pred_v, c.gt_v, &deg_v);
        cell.ccc_a = safe_ccc(c.pred_a, c.gt_a, &deg_a);
        cell.degenerate = deg_v || deg_a;
    }
    return block;
}

GridBlock grid_report(std::span<const FrameSample> samples, int resolution, double threshold_v,
                      double threshold_a) {
    if (resolution < 1) throw ConfigError("grid resolution must be >= 1");
    GridBlock block;
    block.resolution = resolution;
    block.threshold_v = threshold_v;
    block.threshold_a = threshold_a;
    block.cells.assign(static_cast<std::size_t>(resolution) * resolution, GridCell{});

    std::vector<double> err_v_sum(block.cells.size(), 0.0), err_a_sum(block.cells.size(), 0.0);
    for (const auto& s : samples) {
        const GridBin bin = grid_bin_of(s.gt, resolution);
        const std::size_t idx = static_cast<std::size_t>(bin.row) * resolution + bin.col;
        block.cells[idx].count += 1;
        err_v_sum[idx] += std::abs(s.pred.valence - s.gt.valence);
        err_a_sum[idx] += std::abs(s.pred.arousal - s.gt.arousal);
    }
    for (std::size_t i = 0; i < block.cells.size(); ++i) {
        GridCell& cell = block.cells[i];
        if (cell.count == 0) {
            cell.flag = CellFlag::empty;
            continue;
        }
        cell.mae_v = err_v_sum[i] / static_cast<double>(cell.count);
        cell.mae_a = err_a_sum[i] / static_cast<double>(cell.count);
        cell.flag = (cell.mae_v <= threshold_v && cell.mae_a <= threshold_a)
                        ? CellFlag::below_human
                        : CellFlag::above_human;
    }
    return block;
}

std::string pose_label(const io::PoseBin& bin) {
    char buf[48];
    if (bin.yaw_deg == 0.0 && bin.pitch_deg == 0.0) return "frontal";
    if (bin.pitch_deg == 0.0) {
        std::snprintf(buf, sizeof(buf), "yaw%+g", bin.yaw_deg);
    } else if (bin.yaw_deg == 0.0) {
        std::snprintf(buf, sizeof(buf), "pitch%+g", bin.pitch_deg);
    } else {
        std::snprintf(buf, sizeof(buf), "yaw%+g_pitch%+g", bin.yaw_deg, bin.pitch_deg);
    }
    return buf;
}

PoseBlock pose_report(std::span<const FrameSample> samples) {
    std::map<std::pair<double, double>, std::vector<const FrameSample*>> groups;
    PoseBlock block;
    for (const auto& s : samples) {
        if (!s.pose) {
            block.frames_without_pose += 1;
            continue;
        }
        groups[{s.pose->yaw_deg, s.pose->pitch_deg}].push_back(&s);
    }
    for (const auto& [key, group] : groups) {
        PoseRow row;
        row.bin = io::PoseBin{key.first, key.second};
        row.n_frames = group.size();
        Columns c;
        for (const FrameSample* s : group) {
            c.pred_v.push_back(s->pred.valence);
            c.pred_a.push_back(s->pred.arousal);
            c.gt_v.push_back(s->gt.valence);
            c.gt_a.push_back(s->gt.arousal);
        }
        row.mae_v = metrics::mae(c.pred_v, c.gt_v);
        row.mae_a = metrics::mae(c.pred_a, c.gt_a);
        row.ccc_v = safe_ccc(c.pred_v, c.gt_v);
        row.ccc_a = safe_ccc(c.pred_a, c.gt_a);
        block.rows.push_back(row);
    }
    return block;
}

std::vector<LeaveNPoint> leave_n_in(std::span<const FrameSample> samples, Dim dim,
                                    std::span<const double> n_percents, FilterMode mode) {
    for (double n : n_percents) {
        if (!(n > 0.0) || n > 100.0) throw ConfigError("leave-N percentages must be in (0,100]");
    }
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto uncert = [&](std::size_t i) {
        return dim == Dim::valence ? samples[i].unc_v.cumulative : samples[i].unc_a.cumulative;
    };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ua = uncert(a), ub = uncert(b);
        if (ua != ub) return mode == FilterMode::lowest ? ua < ub : ua > ub;
        return std::tie(samples[a].clip_id, samples[a].frame) <
               std::tie(samples[b].clip_id, samples[b].frame);
    });

    std::vector<LeaveNPoint> curve;
    for (double n : n_percents) {
        LeaveNPoint pt;
        pt.n_percent = n;
        pt.kept = static_cast<std::size_t>(
            std::ceil(n / 100.0 * static_cast<double>(samples.size())));
        pt.kept = std::min(pt.kept, samples.size());
        std::vector<double> pred, gt;
        pred.reserve(pt.kept);
        gt.reserve(pt.kept);
        for (std::size_t i = 0; i < pt.kept; ++i) {
            const FrameSample& s = samples[order[i]];
            pred.push_back(dim == Dim::valence ? s.pred.valence : s.pred.arousal);
            gt.push_back(dim == Dim::valence ? s.gt.valence : s.gt.arousal);
        }
        pt.ccc = safe_ccc(pred, gt);
        pt.mae = pt.kept == 0 ? 0.0 : metrics::mae(pred, gt);
        curve.push_back(pt);
    }
    return curve;
}

EvalReport full_report(std::span<const FrameSample> samples, const EvalOptions& options,
                       const std::vector<io::ClipAnnotation>* annotations) {
    EvalReport report;
    report.overall = overall_eval(samples);
    report.quadrants = quadrant_report(samples);
    report.grid = grid_report(samples, options.grid_resolution, options.threshold_v,
                              options.threshold_a);
    report.pose = pose_report(samples);
    report.leave_n.valence_lowest =
        leave_n_in(samples, Dim::valence, options.leave_n, FilterMode::lowest);
    report.leave_n.valence_highest =
        leave_n_in(samples, Dim::valence, options.leave_n, FilterMode::highest);
    report.leave_n.arousal_lowest =
        leave_n_in(samples, Dim::arousal, options.leave_n, FilterMode::lowest);
    report.leave_n.arousal_highest =
        leave_n_in(samples, Dim::arousal, options.leave_n, FilterMode::highest);
    if (annotations && !annotations->empty()) {
        const auto weights = metrics::annotator_reliability(*annotations);
        const auto w = metrics::wmae(*annotations, weights);
        report.wmae.present = true;
        report.wmae.valence = w.valence;
        report.wmae.arousal = w.arousal;
    }
    return report;
}

namespace {

const char* flag_name(CellFlag flag) {
    switch (flag) {
        case CellFlag::empty: return "empty";
        case CellFlag::below_human: return "below_human";
        case CellFlag::above_human: return "above_human";
    }
    return "?";
}

ordered_json curve_json(const std::vector<LeaveNPoint>& curve) {
    ordered_json arr = ordered_json::array();
    for (const auto& pt : curve) {
        arr.push_back({{"n_percent", pt.n_percent},
                       {"kept", pt.kept},
                       {"ccc", pt.ccc},
                       {"mae", pt.mae}});
    }
    return arr;
}

} // namespace

std::string report_to_json(const EvalReport& report) {
    ordered_json j;
    j["overall"] = {{"ccc_v", report.overall.ccc_v}, {"ccc_a", report.overall.ccc_a},
                    {"mae_v", report.overall.mae_v}, {"mae_a", report.overall.mae_a},
                    {"n_frames", report.overall.n_frames}};
    j["quadrants"] = ordered_json::object();
    for (int q = 0; q < 4; ++q) {
        const auto& cell = report.quadrants.cells[q];
        j["quadrants"][to_string(static_cast<Quadrant>(q))] = {
            {"count", cell.count},   {"ccc_v", cell.ccc_v}, {"ccc_a", cell.ccc_a},
            {"mae_v", cell.mae_v},   {"mae_a", cell.mae_a}, {"degenerate", cell.degenerate}};
    }
    j["grid"] = {{"resolution", report.grid.resolution},
                 {"threshold_v", report.grid.threshold_v},
                 {"threshold_a", report.grid.threshold_a},
                 {"cells", ordered_json::array()}};
    for (int row = 0; row < report.grid.resolution; ++row) {
        for (int col = 0; col < report.grid.resolution; ++col) {
            const auto& cell = report.grid.at(row, col);
            j["grid"]["cells"].push_back({{"row", row},
                                          {"col", col},
                                          {"count", cell.count},
                                          {"mae_v", cell.mae_v},
                                          {"mae_a", cell.mae_a},
                                          {"flag", flag_name(cell.flag)}});
        }
    }
    j["pose"] = {{"frames_without_pose", report.pose.frames_without_pose},
                 {"rows", ordered_json::array()}};
    for (const auto& row : report.pose.rows) {
        j["pose"]["rows"].push_back({{"bin", pose_label(row.bin)},
                                     {"yaw_deg", row.bin.yaw_deg},
                                     {"pitch_deg", row.bin.pitch_deg},
                                     {"n_frames", row.n_frames},
                                     {"ccc_v", row.ccc_v},
                                     {"ccc_a", row.ccc_a},
                                     {"mae_v", row.mae_v},
                                     {"mae_a", row.mae_a}});
    }
    j["leave_n_in"] = {{"valence_lowest", curve_json(report.leave_n.valence_lowest)},
                       {"valence_highest", curve_json(report.leave_n.valence_highest)},
                       {"arousal_lowest", curve_json(report.leave_n.arousal_lowest)},
                       {"arousal_highest", curve_json(report.leave_n.arousal_highest)}};
    if (report.wmae.present) {
        j["wmae"] = {{"valence", report.wmae.valence}, {"arousal", report.wmae.arousal}};
    } else {
        j["wmae"] = nullptr;
    }
    return j.dump(2) + "\n";
}

std::string quadrant_csv(const QuadrantBlock& block) {
    std::string out = "quadrant,count,ccc_v,ccc_a,mae_v,mae_a,degenerate\n";
    for (int q = 0; q < 4; ++q) {
        const auto& cell = block.cells[q];
        out += to_string(static_cast<Quadrant>(q));
        out += ',' + std::to_string(cell.count);
        out += ',' + io::format_fixed6(cell.ccc_v) + ',' + io::format_fixed6(cell.ccc_a);
        out += ',' + io::format_fixed6(cell.mae_v) + ',' + io::format_fixed6(cell.mae_a);
        out += cell.degenerate ? ",1\n" : ",0\n";
    }
    return out;
}

std::string grid_csv(const GridBlock& block) {
    std::string out = "row,col,count,mae_v,mae_a,flag\n";
    for (int row = 0; row < block.resolution; ++row) {
        for (int col = 0; col < block.resolution; ++col) {
            const auto& cell = block.at(row, col);
            out += std::to_string(row) + ',' + std::to_string(col) + ',' +
                   std::to_string(cell.count) + ',' + io::format_fixed6(cell.mae_v) + ',' +
                   io::format_fixed6(cell.mae_a) + ',' + flag_name(cell.flag) + '\n';
        }
    }
    return out;
}

std::string pose_csv(const PoseBlock& block) {
    std::string out = "bin,yaw_deg,pitch_deg,n_frames,ccc_v,ccc_a,mae_v,mae_a\n";
    for (const auto& row : block.rows) {
        out += pose_label(row.bin) + ',' + io::format_fixed6(row.bin.yaw_deg) + ',' +
               io::format_fixed6(row.bin.pitch_deg) + ',' + std::to_string(row.n_frames) + ',' +
               io::format_fixed6(row.ccc_v) + ',' + io::format_fixed6(row.ccc_a) + ',' +
               io::format_fixed6(row.mae_v) + ',' + io::format_fixed6(row.mae_a) + '\n';
    }
    return out;
}

std::string leave_n_curve_data(const std::vector<LeaveNPoint>& curve) {
    std::string out = "# n_percent kept ccc mae\n";
    for (const auto& pt : curve) {
        out += io::format_fixed6(pt.n_percent) + ' ' + std::to_string(pt.kept) + ' ' +
               io::format_fixed6(pt.ccc) + ' ' + io::format_fixed6(pt.mae) + '\n';
    }
    return out;
}

std::string ced_curve_data(std::span<const double> nmes, double threshold, int steps) {
    if (threshold <= 0.0 || steps < 2) throw ConfigError("bad CED curve parameters");
    std::string out = "# error fraction\n";
    const double n = static_cast<double>(nmes.size());
    for (int s = 0; s < steps; ++s) {
        const double e = threshold * static_cast<double>(s) / (steps - 1);
        std::size_t count = 0;
        for (double v : nmes) {
            if (v <= e) ++count;
        }
        out += io::format_fixed6(e) + ' ' +
               io::format_fixed6(n == 0.0 ? 0.0 : static_cast<double>(count) / n) + '\n';
    }
    return out;
}

} // namespace xtrace::eval
