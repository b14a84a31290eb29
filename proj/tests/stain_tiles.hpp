// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include "bitro/rng.hpp"
#include "bitro/stain/stain.hpp"

namespace bitro::testing {

inline stain::StainBasis he_basis(double jitter_deg = 0.0, Rng* rng = nullptr) {
    stain::StainBasis b;
    const double h[3] = {0.65, 0.70, 0.29}, e[3] = {0.07, 0.99, 0.11};
    for (std::size_t c = 0; c < 3; ++c) {
        b.w(c, 0) = h[c];
        b.w(c, 1) = e[c];
    }
    if (rng && jitter_deg > 0.0)
        for (double& v : b.w.data()) v = std::max(0.01, v + rng->normal() * jitter_deg * M_PI / 180.0);
    for (std::size_t k = 0; k < 2; ++k) {
        double n = 0.0;
        for (std::size_t c = 0; c < 3; ++c) n += b.w(c, k) * b.w(c, k);
        for (std::size_t c = 0; c < 3; ++c) b.w(c, k) /= std::sqrt(n);
    }
    return b;
}

struct PlantedTile {
    stain::RgbImage image;
    stain::OdImage od;  // exact W H before quantisation
    Tensor density;     // 2 x N
};

/// Background, eosin-stained stroma and hematoxylin-rich nuclei, rendered by
/// Beer-Lambert from a known basis.
inline PlantedTile planted_tile(const stain::StainBasis& basis, std::uint64_t seed, std::size_t size = 96,
                                double noise = 0.0) {
    Rng rng(seed);
    PlantedTile t;
    t.od = {size, size, Tensor(Shape{size * size, 3})};
    t.density = Tensor(Shape{2, size * size});
    struct Disc {
        double x, y, r, d;
    };
    std::vector<Disc> nuclei;
    for (int i = 0; i < 25; ++i)
        nuclei.push_back({rng.uniform(0, size), rng.uniform(0, size), rng.uniform(3, 7), rng.uniform(0.6, 1.2)});
    const double cx = rng.uniform(0, size), cy = rng.uniform(0, size), rad = size * rng.uniform(0.55, 0.8);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            const std::size_t i = y * size + x;
            double hd = 0.0, ed = 0.0;
            const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
            if (std::sqrt(dx * dx + dy * dy) < rad) ed = 0.25 + 0.35 * (0.5 + 0.5 * std::sin(0.2 * x + 0.13 * y));
            for (const auto& n : nuclei) {
                const double ddx = static_cast<double>(x) - n.x, ddy = static_cast<double>(y) - n.y;
                if (std::sqrt(ddx * ddx + ddy * ddy) < n.r) {
                    hd = n.d;
                    ed *= 0.2;
                }
            }
            if (noise > 0.0 && (hd > 0.0 || ed > 0.0)) {
                hd = std::max(0.0, hd + noise * rng.normal());
                ed = std::max(0.0, ed + noise * rng.normal());
            }
            t.density(0, i) = hd;
            t.density(1, i) = ed;
            for (std::size_t c = 0; c < 3; ++c) t.od.od(i, c) = basis.w(c, 0) * hd + basis.w(c, 1) * ed;
        }
    t.image = stain::od_to_rgb(t.od);
    return t;
}

/// Smallest worst-column angle over the two column matchings.
inline double basis_angle(const stain::StainBasis& a, const stain::StainBasis& b) {
    auto col = [](const stain::StainBasis& s, std::size_t k) {
        return std::vector<double>{s.w(0, k), s.w(1, k), s.w(2, k)};
    };
    const double same = std::max(stain::angle_degrees(col(a, 0), col(b, 0)), stain::angle_degrees(col(a, 1), col(b, 1)));
    const double swapped =
        std::max(stain::angle_degrees(col(a, 0), col(b, 1)), stain::angle_degrees(col(a, 1), col(b, 0)));
    return std::min(same, swapped);
}

}  // namespace bitro::testing
