#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace xtrace {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// raised when a numeric field holds NaN/Inf
struct NonFiniteValue : Error {
    NonFiniteValue(const std::string& field, int index)
        : Error("non-finite value in " + field + "[" + std::to_string(index) + "]"),
          field(field), index(index) {}
    std::string field;
    int index;
};

struct WrongArity : Error {
    WrongArity(const std::string& what, std::size_t expected, std::size_t got)
        : Error(what + ": expected " + std::to_string(expected) + " values, got " +
                std::to_string(got)),
          expected(expected), got(got) {}
    std::size_t expected;
    std::size_t got;
};

struct DegenerateShape : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

inline constexpr int kNumLandmarks = 68;
inline constexpr int kNumActionUnits = 15;
inline constexpr double kAuMax = 5.0;
// 68 (x,y) pairs + 68 landmark uncertainties + 15 AU intensities
inline constexpr int kFeatureDim = 2 * kNumLandmarks + kNumLandmarks + kNumActionUnits;

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

using Landmarks68 = std::array<Point2, kNumLandmarks>;

// One frame's low-level descriptors as produced by the upstream per-image models.
struct FrameFeatures {
    std::int64_t frame_index = 0;
    bool valid = true;
    Landmarks68 landmarks{};
    std::array<double, kNumLandmarks> landmark_uncertainties{};
    std::array<double, kNumActionUnits> au_intensities{};
};

struct VAPoint {
    double valence = 0.0;
    double arousal = 0.0;
};

struct UncertaintyTriple {
    double epistemic = 0.0;
    double aleatoric = 0.0;
    double cumulative = 0.0;
};

struct AffectOutput {
    VAPoint va;
    UncertaintyTriple uncertainty_valence;
    UncertaintyTriple uncertainty_arousal;
};

// Q1:+V+A  Q2:-V+A  Q3:-V-A  Q4:+V-A.  Zero counts as positive on both axes,
// so the partition is total and deterministic.
enum class Quadrant { Q1, Q2, Q3, Q4 };

const char* to_string(Quadrant q);

// Uniform RxR partition of [-1,1]^2. col indexes valence, row indexes arousal,
// bins are half-open except the top edge (value 1.0 lands in the last bin).
//
// For R=2 the cells map onto quadrants as
//   (row 1, col 1) = Q1, (row 1, col 0) = Q2,
//   (row 0, col 0) = Q3, (row 0, col 1) = Q4.
struct GridBin {
    int row = 0;
    int col = 0;
    friend bool operator==(const GridBin&, const GridBin&) = default;
};

// Clips AU intensities to [0,5] and uncertainties to [0,1]; rejects NaN/Inf
// anywhere. Idempotent.
FrameFeatures validate_frame(const FrameFeatures& raw);

Quadrant quadrant_of(const VAPoint& p) noexcept;

GridBin grid_bin_of(const VAPoint& p, int resolution) noexcept;

inline double clamp_signed_unit(double v) noexcept {
    return v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
}

inline double clamp_unit(double v) noexcept {
    return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

} // namespace xtrace
