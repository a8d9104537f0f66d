#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "support/generators.hpp"
#include "xtrace/core.hpp"
#include "xtrace/rng.hpp"

using namespace xtrace;

TEST_CASE("validate_frame keeps in-range frames unchanged") {
    Rng rng(3);
    FrameFeatures f = testgen::random_frame(rng, 0);
    f.au_intensities[0] = 5.0;
    const FrameFeatures v = validate_frame(f);
    CHECK(v.au_intensities[0] == 5.0);
    for (int i = 0; i < kNumLandmarks; ++i) {
        CHECK(v.landmarks[i].x == f.landmarks[i].x);
        CHECK(v.landmark_uncertainties[i] == f.landmark_uncertainties[i]);
    }
}

TEST_CASE("validate_frame clips AU and uncertainty ranges") {
    Rng rng(4);
    FrameFeatures f = testgen::random_frame(rng, 0);
    f.au_intensities[3] = 5.7;
    f.au_intensities[5] = -0.4;
    f.landmark_uncertainties[10] = 1.2;
    f.landmark_uncertainties[11] = -0.1;
    const FrameFeatures v = validate_frame(f);
    CHECK(v.au_intensities[3] == 5.0);
    CHECK(v.au_intensities[5] == 0.0);
    CHECK(v.landmark_uncertainties[10] == 1.0);
    CHECK(v.landmark_uncertainties[11] == 0.0);
}

TEST_CASE("validate_frame rejects non-finite values") {
    Rng rng(5);
    FrameFeatures f = testgen::random_frame(rng, 0);
    f.landmarks[7].x = std::nan("");
    CHECK_THROWS_AS(validate_frame(f), NonFiniteValue);

    FrameFeatures g = testgen::random_frame(rng, 0);
    g.au_intensities[2] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(validate_frame(g), NonFiniteValue);
}

TEST_CASE("validate_frame is idempotent") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        FrameFeatures f = testgen::random_frame(rng, trial);
        f.au_intensities[trial % kNumActionUnits] = rng.uniform(-1.0, 7.0);
        f.landmark_uncertainties[trial % kNumLandmarks] = rng.uniform(-0.5, 1.5);
        const FrameFeatures once = validate_frame(f);
        const FrameFeatures twice = validate_frame(once);
        CHECK(once.valid == twice.valid);
        CHECK(once.frame_index == twice.frame_index);
        for (int i = 0; i < kNumLandmarks; ++i) {
            CHECK(once.landmarks[i].x == twice.landmarks[i].x);
            CHECK(once.landmarks[i].y == twice.landmarks[i].y);
            CHECK(once.landmark_uncertainties[i] == twice.landmark_uncertainties[i]);
        }
        for (int k = 0; k < kNumActionUnits; ++k)
            CHECK(once.au_intensities[k] == twice.au_intensities[k]);
    }
}

TEST_CASE("quadrant_of follows the sign convention") {
    CHECK(quadrant_of({0.5, 0.5}) == Quadrant::Q1);
    CHECK(quadrant_of({-0.3, 0.2}) == Quadrant::Q2);
    CHECK(quadrant_of({-0.3, -0.2}) == Quadrant::Q3);
    CHECK(quadrant_of({0.3, -0.2}) == Quadrant::Q4);
    // zero counts as positive on both axes
    CHECK(quadrant_of({0.0, 0.0}) == Quadrant::Q1);
    CHECK(quadrant_of({0.0, -0.1}) == Quadrant::Q4);
    CHECK(quadrant_of({-0.1, 0.0}) == Quadrant::Q2);
}

TEST_CASE("grid_bin_of covers [-1,1]^2 with a closed top edge") {
    CHECK(grid_bin_of({-1.0, -1.0}, 8) == GridBin{0, 0});
    CHECK(grid_bin_of({1.0, 1.0}, 8) == GridBin{7, 7});
    // hand-checked against floor((v+1)/2 * R)
    const GridBin b = grid_bin_of({0.0, -0.01}, 8);
    CHECK(b.col == 4);
    CHECK(b.row == 3);
}

TEST_CASE("grid at resolution 2 agrees with quadrants") {
    auto quadrant_from_grid = [](const GridBin& b) {
        if (b.row == 1 && b.col == 1) return Quadrant::Q1;
        if (b.row == 1 && b.col == 0) return Quadrant::Q2;
        if (b.row == 0 && b.col == 0) return Quadrant::Q3;
        return Quadrant::Q4;
    };
    Rng rng(7);
    for (int i = 0; i < 2000; ++i) {
        const VAPoint p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        CHECK(quadrant_of(p) == quadrant_from_grid(grid_bin_of(p, 2)));
    }
}

TEST_CASE("grid bins stay in range for every resolution") {
    Rng rng(8);
    for (int r = 1; r <= 16; ++r) {
        for (int i = 0; i < 200; ++i) {
            const VAPoint p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
            const GridBin b = grid_bin_of(p, r);
            CHECK(b.row >= 0);
            CHECK(b.row < r);
            CHECK(b.col >= 0);
            CHECK(b.col < r);
        }
    }
}
