// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bitro/numerics/tensor.hpp"

namespace bitro::stain {

inline constexpr double kWhite = 255.0;
inline constexpr double kDefaultSparsity = 0.1;
inline constexpr std::size_t kDefaultIterations = 200;
inline constexpr double kTissueThreshold = 0.15;
inline constexpr double kMinTissueFraction = 0.01;
inline constexpr double kDensityPercentile = 99.0;

struct RgbImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> data;  // row-major, interleaved RGB

    RgbImage() = default;
    RgbImage(std::size_t h, std::size_t w, std::uint8_t fill = 255) : height(h), width(w), data(h * w * 3, fill) {}
    std::size_t pixels() const { return height * width; }
};

/// Optical densities, one row per pixel and one column per channel.
struct OdImage {
    std::size_t height = 0;
    std::size_t width = 0;
    Tensor od;  // (H*W) x 3
};

/// Two unit-norm stain vectors in OD space; column 0 is hematoxylin (the one
/// with the larger blue-channel OD).
struct StainBasis {
    Tensor w = Tensor(Shape{3, 2});

    void canonicalize();
    void validate() const;
};

struct StainReference {
    StainBasis basis;
    std::array<double, 2> max_density{1.0, 1.0};
};

struct FitOptions {
    double lambda = kDefaultSparsity;
    std::size_t iterations = kDefaultIterations;
    double threshold = kTissueThreshold;
};

struct StainFit {
    StainBasis basis;
    Tensor density;                     // 2 x T over the tissue pixels
    std::vector<std::size_t> tissue;    // pixel indices of the columns of density
    std::vector<double> objective;      // 0.5 ||V - WH||^2 + lambda ||H||_1, per iteration
    std::vector<double> relative_error;  // ||V - WH|| / ||V||, per iteration
};

OdImage rgb_to_od(const RgbImage& image, double i0 = kWhite);
RgbImage od_to_rgb(const OdImage& od, double i0 = kWhite);

std::vector<std::size_t> tissue_pixels(const OdImage& od, double threshold = kTissueThreshold);

/// Sparse NMF of the tissue OD matrix. FitError when tissue covers less than
/// 1% of the pixels.
StainFit fit_stain_basis(const OdImage& od, const FitOptions& opt = {});

/// Per-pixel non-negative least-squares densities under a fixed basis; 2 x N.
Tensor stain_densities(const OdImage& od, const StainBasis& basis);

/// Linear-interpolated percentile of each density row over the tissue pixels.
std::array<double, 2> density_percentile(const Tensor& density, const std::vector<std::size_t>& tissue,
                                         double percentile = kDensityPercentile);

/// Basis and p99 densities of an image, for use as a reference.
StainReference make_reference(const RgbImage& image, const FitOptions& opt = {});

/// Re-paints the source with the reference stain colors. A source with no
/// tissue pixels is returned unchanged.
RgbImage normalize_to_reference(const RgbImage& src, const StainReference& ref, const FitOptions& opt = {});

RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

StainReference read_reference(const std::filesystem::path& path);
void write_reference(const std::filesystem::path& path, const StainReference& ref);

/// Angle in degrees between two 3-vectors.
double angle_degrees(std::span<const double> a, std::span<const double> b);

}  // namespace bitro::stain
