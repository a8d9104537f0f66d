#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "xtrace/core.hpp"
#include "xtrace/io.hpp"

namespace xtrace::metrics {

struct LengthMismatch : Error {
    using Error::Error;
};
struct TooShort : Error {
    using Error::Error;
};
struct DegenerateAnova : Error {
    using Error::Error;
};
struct ZeroInterOcular : Error {
    using Error::Error;
};
struct InsufficientOverlap : Error {
    using Error::Error;
};
struct SingleRaterClip : Error {
    using Error::Error;
};

// n_targets x k_raters, row-major
struct RatingsMatrix {
    int n = 0;
    int k = 0;
    std::vector<double> values;

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * k + j]; }
    double& at(int i, int j) { return values[static_cast<std::size_t>(i) * k + j]; }
};

// Lin's concordance correlation coefficient with population variances:
//   2 cov(x,y) / (var x + var y + (mean x - mean y)^2)
// Returns 0 when the denominator is zero.
double ccc(std::span<const double> x, std::span<const double> y);

double mae(std::span<const double> x, std::span<const double> y);

// mean over all frames of all clips (not mean of per-clip means)
double mae_pooled(const std::vector<std::vector<double>>& per_clip_frame_errors);

// ICC(3,1), two-way mixed, single measure, consistency:
//   (BMS - EMS) / (BMS + (k-1) EMS)
double icc31(const RatingsMatrix& m);

// mean point-to-point L2 error normalized by the outer-corner inter-ocular
// distance (iBUG points 37 and 46, 1-indexed)
double nme(const Landmarks68& pred, const Landmarks68& gt);

// area in [0,100] under the cumulative error distribution, integrated by the
// trapezoid rule over `steps` evenly spaced thresholds in [0, threshold]
double ced_auc(std::span<const double> nmes, double threshold, int steps);

// Per-rater reliability: ICC(3,1) of the rater against the mean of the other
// raters over shared clips, averaged across the valence and arousal
// dimensions, floored at `floor_eps` and normalized so the best rater gets 1.
std::map<std::string, double> annotator_reliability(
    const std::vector<io::ClipAnnotation>& annotations, double floor_eps = 0.01);

enum class WmaeWeighting {
    reliability,       // w_ij = r_i * r_j from annotator_reliability
    inverse_distance,  // w_ij = 1 / (eps + |a_i - a_j|_2) within the clip
};

struct WmaeResult {
    double valence = 0.0;
    double arousal = 0.0;
};

// Inter-rater disagreement: per clip and dimension,
//   sum_{i<j} w_ij |a_i - a_j| / sum_{i<j} w_ij,
// then averaged over clips.
WmaeResult wmae(const std::vector<io::ClipAnnotation>& annotations,
                const std::map<std::string, double>& reliabilities,
                WmaeWeighting weighting = WmaeWeighting::reliability);

} // namespace xtrace::metrics
