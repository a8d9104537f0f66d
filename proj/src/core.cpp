#include "xtrace/core.hpp"

#include <cmath>

namespace xtrace {

const char* to_string(Quadrant q) {
    switch (q) {
        case Quadrant::Q1: return "Q1";
        case Quadrant::Q2: return "Q2";
        case Quadrant::Q3: return "Q3";
        case Quadrant::Q4: return "Q4";
    }
    return "?";
}

FrameFeatures validate_frame(const FrameFeatures& raw) {
    FrameFeatures f = raw;
    for (int i = 0; i < kNumLandmarks; ++i) {
        if (!std::isfinite(f.landmarks[i].x)) throw NonFiniteValue("landmarks.x", i);
        if (!std::isfinite(f.landmarks[i].y)) throw NonFiniteValue("landmarks.y", i);
        if (!std::isfinite(f.landmark_uncertainties[i]))
            throw NonFiniteValue("landmark_uncertainties", i);
        f.landmark_uncertainties[i] = clamp_unit(f.landmark_uncertainties[i]);
    }
    for (int i = 0; i < kNumActionUnits; ++i) {
        if (!std::isfinite(f.au_intensities[i])) throw NonFiniteValue("au_intensities", i);
        double au = f.au_intensities[i];
        f.au_intensities[i] = au < 0.0 ? 0.0 : (au > kAuMax ? kAuMax : au);
    }
    return f;
}

Quadrant quadrant_of(const VAPoint& p) noexcept {
    const bool vpos = p.valence >= 0.0;
    const bool apos = p.arousal >= 0.0;
    if (vpos && apos) return Quadrant::Q1;
    if (!vpos && apos) return Quadrant::Q2;
    if (!vpos) return Quadrant::Q3;
    return Quadrant::Q4;
}

namespace {
int bin_index(double v, int resolution) noexcept {
    const int idx = static_cast<int>(std::floor((v + 1.0) * 0.5 * resolution));
    if (idx < 0) return 0;
    if (idx >= resolution) return resolution - 1;
    return idx;
}
} // namespace

GridBin grid_bin_of(const VAPoint& p, int resolution) noexcept {
    return GridBin{bin_index(p.arousal, resolution), bin_index(p.valence, resolution)};
}

} // namespace xtrace
