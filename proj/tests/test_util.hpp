// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>

#include "gfocal/random.hpp"
#include "gfocal/tensor.hpp"

namespace gfocal::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& x : t.storage()) x = rng.uniform(lo, hi);
    return t;
}

/// Token rows that vary smoothly with their position in the sequence: each
/// channel is a1 sin(pi t + p1) + a2 sin(2 pi t + p2) with normal amplitudes
/// and uniform phases, t = (i + 0.5) / rows. Segment-mean landmarks only
/// summarise their segment when neighbouring rows are alike, as they are for
/// features of spatially ordered points.
inline Tensor smooth_sequence(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor t({rows, cols});
    for (std::size_t j = 0; j < cols; ++j) {
        double amp[2], phase[2];
        for (int f = 0; f < 2; ++f) {
            amp[f] = rng.normal();
            phase[f] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        }
        for (std::size_t i = 0; i < rows; ++i) {
            const double s = (static_cast<double>(i) + 0.5) / static_cast<double>(rows);
            double x = 0.0;
            for (int f = 0; f < 2; ++f) x += amp[f] * std::sin(std::numbers::pi * (f + 1) * s + phase[f]);
            t.at(i, j) = x;
        }
    }
    return t;
}

/// Fresh empty directory under the system temp dir, unique per test name.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("gfocal_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace gfocal::testing
