// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/stain/stain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>

#include "bitro/error.hpp"
#include "bitro/ingest/tsv.hpp"

namespace bitro::stain {

namespace {

using Mat = Eigen::MatrixXd;

constexpr double kTiny = 1e-12;

Mat basis_matrix(const StainBasis& b) {
    Mat w(3, 2);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t k = 0; k < 2; ++k) w(c, k) = b.w(c, k);
    return w;
}

StainBasis from_matrix(const Mat& w) {
    StainBasis b;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t k = 0; k < 2; ++k) b.w(c, k) = w(c, k);
    return b;
}

double objective(const Mat& v, const Mat& w, const Mat& h, double lambda) {
    return 0.5 * (v - w * h).squaredNorm() + lambda * h.sum();
}

void normalize_columns(Mat& w) {
    for (Eigen::Index k = 0; k < w.cols(); ++k) {
        const double n = w.col(k).norm();
        if (n > 0.0) w.col(k) /= n;
    }
}

// Closed-form NNLS for one pixel against a 3x2 basis.
Eigen::Vector2d nnls2(const Mat& w, const Eigen::Matrix2d& gram_inv, const Eigen::Vector2d& gram_diag,
                      const Eigen::Vector3d& v) {
    const Eigen::Vector2d wtv = w.transpose() * v;
    Eigen::Vector2d h = gram_inv * wtv;
    if (h(0) >= 0.0 && h(1) >= 0.0) return h;
    // Best single-column fits; pick the one with lower residual.
    const double h0 = std::max(0.0, wtv(0) / gram_diag(0)), h1 = std::max(0.0, wtv(1) / gram_diag(1));
    const double r0 = (v - w.col(0) * h0).squaredNorm(), r1 = (v - w.col(1) * h1).squaredNorm();
    return r0 <= r1 ? Eigen::Vector2d(h0, 0.0) : Eigen::Vector2d(0.0, h1);
}

}  // namespace

void StainBasis::canonicalize() {
    if (w(2, 1) > w(2, 0))
        for (std::size_t c = 0; c < 3; ++c) std::swap(w(c, 0), w(c, 1));
}

void StainBasis::validate() const {
    if (w.rank() != 2 || w.rows() != 3 || w.cols() != 2) throw DimensionError("stain basis must be 3x2");
    for (std::size_t k = 0; k < 2; ++k) {
        double n = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            if (!(w(c, k) >= 0.0) || !std::isfinite(w(c, k)))
                throw ContractError("stain basis entries must be finite and non-negative");
            n += w(c, k) * w(c, k);
        }
        if (std::fabs(std::sqrt(n) - 1.0) > 1e-6) throw ContractError("stain basis columns must have unit norm");
    }
}

OdImage rgb_to_od(const RgbImage& image, double i0) {
    if (!(i0 > 0.0)) throw ContractError("white reference must be positive");
    if (image.data.size() != image.pixels() * 3) throw DimensionError("rgb buffer does not match its size");
    OdImage out{image.height, image.width, Tensor(Shape{image.pixels(), 3})};
    auto od = out.od.data();
    for (std::size_t i = 0; i < image.data.size(); ++i)
        od[i] = std::max(0.0, -std::log(std::max(static_cast<double>(image.data[i]), 1.0) / i0));
    return out;
}

RgbImage od_to_rgb(const OdImage& od, double i0) {
    if (!(i0 > 0.0)) throw ContractError("white reference must be positive");
    RgbImage out(od.height, od.width);
    const auto v = od.od.data();
    if (v.size() != out.data.size()) throw DimensionError("od buffer does not match its size");
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double p = std::round(i0 * std::exp(-v[i]));
        out.data[i] = static_cast<std::uint8_t>(std::clamp(std::isfinite(p) ? p : 0.0, 0.0, 255.0));
    }
    return out;
}

std::vector<std::size_t> tissue_pixels(const OdImage& od, double threshold) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < od.od.rows(); ++i) {
        const auto r = od.od.row_span(i);
        if (std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]) > threshold) out.push_back(i);
    }
    return out;
}

StainFit fit_stain_basis(const OdImage& od, const FitOptions& opt) {
    if (opt.lambda < 0.0) throw ConfigError("stain sparsity must be non-negative");
    const std::size_t n_pixels = od.height * od.width;
    StainFit fit;
    fit.tissue = tissue_pixels(od, opt.threshold);
    if (n_pixels == 0 || static_cast<double>(fit.tissue.size()) < kMinTissueFraction * static_cast<double>(n_pixels))
        throw FitError("image has no tissue: " + std::to_string(fit.tissue.size()) + " of " +
                       std::to_string(n_pixels) + " pixels above OD " + ingest::format_double(opt.threshold));
    const auto t = static_cast<Eigen::Index>(fit.tissue.size());
    Mat v(3, t);
    for (Eigen::Index j = 0; j < t; ++j)
        for (Eigen::Index c = 0; c < 3; ++c) v(c, j) = od.od(fit.tissue[static_cast<std::size_t>(j)], c);

    // Start from the textbook H&E vectors and their NNLS densities.
    Mat w(3, 2);
    w << 0.65, 0.07, 0.70, 0.99, 0.29, 0.11;
    normalize_columns(w);
    Mat h(2, t);
    {
        const Eigen::Matrix2d gram = w.transpose() * w;
        const Eigen::Matrix2d inv = gram.inverse();
        const Eigen::Vector2d diag = gram.diagonal();
        for (Eigen::Index j = 0; j < t; ++j) h.col(j) = nnls2(w, inv, diag, v.col(j)).cwiseMax(1e-3);
    }
    const double v_norm = std::max(v.norm(), kTiny);
    double f = objective(v, w, h, opt.lambda);
    for (std::size_t it = 0; it < opt.iterations; ++it) {
        // H: multiplicative update for the L1-penalised least squares.
        const Mat num_h = w.transpose() * v;
        const Mat den_h = (w.transpose() * w) * h;
        Mat h_new = h.cwiseProduct(num_h.cwiseQuotient((den_h.array() + opt.lambda + kTiny).matrix()));
        const double f_h = objective(v, w, h_new, opt.lambda);
        if (f_h <= f) {
            h.swap(h_new);
            f = f_h;
        }

        // W: multiplicative step, renormalised, accepted only if it does not
        // increase the objective; otherwise shrink towards the current W.
        const Mat num_w = v * h.transpose();
        const Mat den_w = w * (h * h.transpose());
        Mat cand = w.cwiseProduct(num_w.cwiseQuotient((den_w.array() + kTiny).matrix()));
        normalize_columns(cand);
        double step = 1.0;
        for (int tries = 0; tries < 20; ++tries) {
            Mat trial = w + step * (cand - w);
            normalize_columns(trial);
            const double f_w = objective(v, trial, h, opt.lambda);
            if (f_w <= f) {
                w = trial;
                f = f_w;
                break;
            }
            step *= 0.5;
        }
        fit.objective.push_back(f);
        fit.relative_error.push_back((v - w * h).norm() / v_norm);
    }
    fit.basis = from_matrix(w);
    fit.density = Tensor(Shape{2, fit.tissue.size()});
    const bool swap = w(2, 1) > w(2, 0);
    fit.basis.canonicalize();
    for (Eigen::Index j = 0; j < t; ++j) {
        fit.density(0, static_cast<std::size_t>(j)) = h(swap ? 1 : 0, j);
        fit.density(1, static_cast<std::size_t>(j)) = h(swap ? 0 : 1, j);
    }
    return fit;
}

Tensor stain_densities(const OdImage& od, const StainBasis& basis) {
    basis.validate();
    const Mat w = basis_matrix(basis);
    const Eigen::Matrix2d gram = w.transpose() * w;
    if (std::fabs(gram.determinant()) < 1e-10) throw FitError("stain basis columns are collinear");
    const Eigen::Matrix2d inv = gram.inverse();
    const Eigen::Vector2d diag = gram.diagonal();
    const std::size_t n = od.od.rows();
    Tensor out(Shape{2, n});
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = od.od.row_span(i);
        const Eigen::Vector2d h = nnls2(w, inv, diag, Eigen::Vector3d(r[0], r[1], r[2]));
        out(0, i) = h(0);
        out(1, i) = h(1);
    }
    return out;
}

std::array<double, 2> density_percentile(const Tensor& density, const std::vector<std::size_t>& tissue,
                                         double percentile) {
    if (tissue.empty()) throw FitError("no tissue pixels for the density percentile");
    std::array<double, 2> out{};
    std::vector<double> vals(tissue.size());
    for (std::size_t k = 0; k < 2; ++k) {
        for (std::size_t i = 0; i < tissue.size(); ++i) vals[i] = density(k, tissue[i]);
        std::sort(vals.begin(), vals.end());
        const double pos = percentile / 100.0 * static_cast<double>(vals.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, vals.size() - 1);
        out[k] = vals[lo] + (pos - static_cast<double>(lo)) * (vals[hi] - vals[lo]);
    }
    return out;
}

StainReference make_reference(const RgbImage& image, const FitOptions& opt) {
    const OdImage od = rgb_to_od(image);
    StainFit fit = fit_stain_basis(od, opt);
    const Tensor dens = stain_densities(od, fit.basis);
    return {fit.basis, density_percentile(dens, fit.tissue)};
}

RgbImage normalize_to_reference(const RgbImage& src, const StainReference& ref, const FitOptions& opt) {
    ref.basis.validate();
    const OdImage od = rgb_to_od(src);
    if (tissue_pixels(od, opt.threshold).empty()) return src;
    const StainFit fit = fit_stain_basis(od, opt);
    Tensor dens = stain_densities(od, fit.basis);
    const auto p = density_percentile(dens, fit.tissue);
    std::array<double, 2> scale{};
    for (std::size_t k = 0; k < 2; ++k) scale[k] = p[k] > kTiny ? ref.max_density[k] / p[k] : 0.0;
    OdImage out{od.height, od.width, Tensor(Shape{od.od.rows(), 3})};
    for (std::size_t i = 0; i < od.od.rows(); ++i) {
        const double h0 = dens(0, i) * scale[0], h1 = dens(1, i) * scale[1];
        for (std::size_t c = 0; c < 3; ++c) out.od(i, c) = ref.basis.w(c, 0) * h0 + ref.basis.w(c, 1) * h1;
    }
    return od_to_rgb(out);
}

RgbImage read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("file not found: " + path.string());
    auto token = [&]() {
        std::string s;
        char c;
        while (in.get(c)) {
            if (c == '#') {
                std::string skip;
                std::getline(in, skip);
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!s.empty()) break;
                continue;
            }
            s.push_back(c);
        }
        return s;
    };
    if (token() != "P6") throw ParseError(path.string() + ": not a binary PPM (P6)");
    const auto w = ingest::parse_int(token(), path.string() + " width");
    const auto h = ingest::parse_int(token(), path.string() + " height");
    const auto maxv = ingest::parse_int(token(), path.string() + " maxval");
    if (w <= 0 || h <= 0 || maxv != 255) throw ParseError(path.string() + ": unsupported PPM geometry or maxval");
    RgbImage img(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
    in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.data.size()))
        throw ParseError(path.string() + ": truncated pixel data");
    return img;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.data.data()), static_cast<std::streamsize>(image.data.size()));
}

StainReference read_reference(const std::filesystem::path& path) {
    const auto lines = ingest::read_lines(path);
    StainReference ref;
    bool have_max = false;
    std::size_t rows = 0;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        if (lines[ln].empty() || lines[ln][0] == '#') continue;
        const auto f = ingest::split_tabs(lines[ln]);
        const std::string where = path.string() + " line " + std::to_string(ln + 1);
        if (f.size() != 3) throw ParseError(where + ": expected 3 fields");
        if (f[0] == "channel") continue;
        if (f[0] == "max_density") {
            ref.max_density = {ingest::parse_double(f[1], where), ingest::parse_double(f[2], where)};
            have_max = true;
        } else {
            if (rows == 3) throw ParseError(where + ": more than 3 channel rows");
            ref.basis.w(rows, 0) = ingest::parse_double(f[1], where);
            ref.basis.w(rows, 1) = ingest::parse_double(f[2], where);
            ++rows;
        }
    }
    if (rows != 3 || !have_max) throw ParseError(path.string() + ": expected 3 channel rows and max_density");
    ref.basis.validate();
    return ref;
}

void write_reference(const std::filesystem::path& path, const StainReference& ref) {
    std::ostringstream s;
    static const char* names[] = {"R", "G", "B"};
    s << "channel\tH\tE\n";
    for (std::size_t c = 0; c < 3; ++c)
        s << names[c] << '\t' << ingest::format_double(ref.basis.w(c, 0)) << '\t'
          << ingest::format_double(ref.basis.w(c, 1)) << '\n';
    s << "max_density\t" << ingest::format_double(ref.max_density[0]) << '\t'
      << ingest::format_double(ref.max_density[1]) << '\n';
    ingest::write_text(path, s.str());
}

double angle_degrees(std::span<const double> a, std::span<const double> b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    const double c = std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
    return std::acos(c) * 180.0 / M_PI;
}

}  // namespace bitro::stain
