#include "xtrace/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace xtrace::metrics {

namespace {

void check_finite(std::span<const double> xs, const char* what) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!std::isfinite(xs[i])) throw NonFiniteValue(what, static_cast<int>(i));
    }
}

double mean_of(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

} // namespace

double ccc(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw LengthMismatch("ccc: lengths " + std::to_string(x.size()) + " vs " +
                             std::to_string(y.size()));
    if (x.size() < 2) throw TooShort("ccc needs at least 2 samples");
    check_finite(x, "ccc.x");
    check_finite(y, "ccc.y");

    const double n = static_cast<double>(x.size());
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double vx = 0.0, vy = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        vx += dx * dx;
        vy += dy * dy;
        cov += dx * dy;
    }
    vx /= n;
    vy /= n;
    cov /= n;
    const double gap = mx - my;
    const double denom = vx + vy + gap * gap;
    if (denom == 0.0) return 0.0;
    return 2.0 * cov / denom;
}

double mae(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw LengthMismatch("mae: lengths " + std::to_string(x.size()) + " vs " +
                             std::to_string(y.size()));
    if (x.empty()) throw TooShort("mae needs at least 1 sample");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
    return s / static_cast<double>(x.size());
}

double mae_pooled(const std::vector<std::vector<double>>& per_clip_frame_errors) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& clip : per_clip_frame_errors) {
        for (double e : clip) {
            s += std::abs(e);
            ++n;
        }
    }
    if (n == 0) throw TooShort("mae_pooled needs at least 1 frame");
    return s / static_cast<double>(n);
}

double icc31(const RatingsMatrix& m) {
    if (m.n < 2 || m.k < 2) throw TooShort("icc31 needs at least 2 targets and 2 raters");
    if (m.values.size() != static_cast<std::size_t>(m.n) * m.k)
        throw LengthMismatch("icc31: matrix storage does not match n*k");
    check_finite(m.values, "icc31");

    const double n = m.n, k = m.k;
    double grand = 0.0;
    std::vector<double> row_mean(m.n, 0.0), col_mean(m.k, 0.0);
    for (int i = 0; i < m.n; ++i) {
        for (int j = 0; j < m.k; ++j) {
            const double v = m.at(i, j);
            grand += v;
            row_mean[i] += v;
            col_mean[j] += v;
        }
    }
    grand /= n * k;
    for (double& r : row_mean) r /= k;
    for (double& c : col_mean) c /= n;

    double ss_rows = 0.0, ss_err = 0.0;
    for (int i = 0; i < m.n; ++i) {
        const double dr = row_mean[i] - grand;
        ss_rows += dr * dr;
        for (int j = 0; j < m.k; ++j) {
            const double e = m.at(i, j) - row_mean[i] - col_mean[j] + grand;
            ss_err += e * e;
        }
    }
    const double bms = k * ss_rows / (n - 1.0);
    const double ems = ss_err / ((n - 1.0) * (k - 1.0));
    const double denom = bms + (k - 1.0) * ems;
    if (denom == 0.0) throw DegenerateAnova("icc31: zero between-target and residual variance");
    return (bms - ems) / denom;
}

double nme(const Landmarks68& pred, const Landmarks68& gt) {
    // outer eye corners: iBUG points 37 and 46 (1-indexed)
    const Point2& l = gt[36];
    const Point2& r = gt[45];
    const double d_io = std::hypot(l.x - r.x, l.y - r.y);
    if (d_io == 0.0) throw ZeroInterOcular("gt inter-ocular distance is zero");
    double s = 0.0;
    for (int i = 0; i < kNumLandmarks; ++i) {
        s += std::hypot(pred[i].x - gt[i].x, pred[i].y - gt[i].y);
    }
    return s / (kNumLandmarks * d_io);
}

double ced_auc(std::span<const double> nmes, double threshold, int steps) {
    if (threshold <= 0.0) throw io::RangeError("ced_auc: threshold must be > 0");
    if (steps < 2) throw io::RangeError("ced_auc: steps must be >= 2");
    check_finite(nmes, "ced_auc");
    if (nmes.empty()) throw TooShort("ced_auc needs at least 1 error value");

    const double n = static_cast<double>(nmes.size());
    auto ced_at = [&](double e) {
        std::size_t count = 0;
        for (double v : nmes) {
            if (v <= e) ++count;
        }
        return static_cast<double>(count) / n;
    };

    // trapezoid over `steps` evenly spaced points from 0 to threshold inclusive
    double integral = 0.0;
    double prev = ced_at(0.0);
    const double de = threshold / static_cast<double>(steps - 1);
    for (int s = 1; s < steps; ++s) {
        const double cur = ced_at(de * static_cast<double>(s));
        integral += 0.5 * (prev + cur) * de;
        prev = cur;
    }
    return 100.0 * integral / threshold;
}

namespace {

struct RaterColumn {
    std::vector<double> own;
    std::vector<double> others_mean;
};

// per-dimension (clip id -> rater -> value) lookup
using ClipValues = std::map<std::string, std::map<std::string, double>>;

double reliability_one_dim(const ClipValues& by_clip, const std::string& rater) {
    RaterColumn col;
    for (const auto& [clip, raters] : by_clip) {
        auto it = raters.find(rater);
        if (it == raters.end() || raters.size() < 2) continue;
        double sum = 0.0;
        for (const auto& [r, v] : raters) {
            if (r != rater) sum += v;
        }
        col.own.push_back(it->second);
        col.others_mean.push_back(sum / static_cast<double>(raters.size() - 1));
    }
    if (col.own.size() < 2)
        throw InsufficientOverlap("rater " + rater + " shares fewer than 2 clips");
    RatingsMatrix m;
    m.n = static_cast<int>(col.own.size());
    m.k = 2;
    m.values.resize(static_cast<std::size_t>(m.n) * 2);
    for (int i = 0; i < m.n; ++i) {
        m.at(i, 0) = col.own[i];
        m.at(i, 1) = col.others_mean[i];
    }
    try {
        return icc31(m);
    } catch (const DegenerateAnova&) {
        // zero residual implies perfect consistency with the consensus
        return 1.0;
    }
}

} // namespace

std::map<std::string, double> annotator_reliability(
    const std::vector<io::ClipAnnotation>& annotations, double floor_eps) {
    ClipValues val_by_clip, aro_by_clip;
    std::set<std::string> raters;
    for (const auto& a : annotations) {
        val_by_clip[a.clip_id][a.rater_id] = a.va.valence;
        aro_by_clip[a.clip_id][a.rater_id] = a.va.arousal;
        raters.insert(a.rater_id);
    }
    if (raters.empty()) throw TooShort("annotator_reliability: no annotations");

    std::map<std::string, double> weights;
    double max_w = 0.0;
    for (const auto& r : raters) {
        const double rv = reliability_one_dim(val_by_clip, r);
        const double ra = reliability_one_dim(aro_by_clip, r);
        double w = 0.5 * (rv + ra);
        if (w < floor_eps) w = floor_eps;
        weights[r] = w;
        max_w = std::max(max_w, w);
    }
    for (auto& [r, w] : weights) w /= max_w;
    return weights;
}

WmaeResult wmae(const std::vector<io::ClipAnnotation>& annotations,
                const std::map<std::string, double>& reliabilities, WmaeWeighting weighting) {
    std::map<std::string, std::vector<const io::ClipAnnotation*>> by_clip;
    for (const auto& a : annotations) by_clip[a.clip_id].push_back(&a);
    if (by_clip.empty()) throw TooShort("wmae: no annotations");

    auto rater_weight = [&](const std::string& rater) {
        auto it = reliabilities.find(rater);
        if (it == reliabilities.end())
            throw InsufficientOverlap("no reliability weight for rater " + rater);
        return it->second;
    };

    double sum_v = 0.0, sum_a = 0.0;
    for (const auto& [clip, anns] : by_clip) {
        if (anns.size() < 2) throw SingleRaterClip("clip " + clip + " has a single rater");
        double wsum = 0.0, num_v = 0.0, num_a = 0.0;
        for (std::size_t i = 0; i < anns.size(); ++i) {
            for (std::size_t j = i + 1; j < anns.size(); ++j) {
                double w;
                if (weighting == WmaeWeighting::reliability) {
                    w = rater_weight(anns[i]->rater_id) * rater_weight(anns[j]->rater_id);
                } else {
                    const double dv = anns[i]->va.valence - anns[j]->va.valence;
                    const double da = anns[i]->va.arousal - anns[j]->va.arousal;
                    w = 1.0 / (0.05 + std::hypot(dv, da));
                }
                num_v += w * std::abs(anns[i]->va.valence - anns[j]->va.valence);
                num_a += w * std::abs(anns[i]->va.arousal - anns[j]->va.arousal);
                wsum += w;
            }
        }
        sum_v += num_v / wsum;
        sum_a += num_a / wsum;
    }
    const double n_clips = static_cast<double>(by_clip.size());
    return WmaeResult{sum_v / n_clips, sum_a / n_clips};
}

} // namespace xtrace::metrics
