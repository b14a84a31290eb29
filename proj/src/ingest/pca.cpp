// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/ingest/pca.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "bitro/error.hpp"

namespace bitro::ingest {

PcaModel fit_pca(const Tensor& x, std::size_t d) {
    if (x.rank() != 2) throw DimensionError("PCA expects an N x F matrix");
    const std::size_t n = x.rows(), f = x.cols();
    if (d == 0 || d >= f || d >= n)
        throw ContractError("PCA width " + std::to_string(d) + " must be in [1, min(F, N)) with F=" +
                            std::to_string(f) + ", N=" + std::to_string(n));
    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> m(x.data().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
    const Eigen::RowVectorXd mean = m.colwise().mean();
    const Mat centred = m.rowwise() - mean;
    const Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw FitError("PCA eigendecomposition failed");

    PcaModel p;
    p.mean = Tensor(Shape{f});
    for (std::size_t j = 0; j < f; ++j) p.mean[j] = mean(static_cast<Eigen::Index>(j));
    p.components = Tensor(Shape{d, f});
    p.explained_variance = Tensor(Shape{d});
    p.total_variance = cov.trace();
    for (std::size_t c = 0; c < d; ++c) {
        // eigenvalues ascend; take from the top
        const auto col = static_cast<Eigen::Index>(f - 1 - c);
        Eigen::VectorXd v = es.eigenvectors().col(col);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) v = -v;
        for (std::size_t j = 0; j < f; ++j) p.components(c, j) = v(static_cast<Eigen::Index>(j));
        p.explained_variance[c] = std::max(0.0, es.eigenvalues()(col));
    }
    return p;
}

Tensor apply_pca(const PcaModel& p, const Tensor& x) {
    if (x.rank() != 2 || x.cols() != p.in_width())
        throw DimensionError("PCA input " + shape_str(x.shape()) + " does not have width " +
                             std::to_string(p.in_width()));
    const std::size_t n = x.rows(), f = x.cols(), d = p.out_width();
    Tensor out(Shape{n, d});
    std::vector<double> centred(f);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < f; ++j) centred[j] = x(i, j) - p.mean[j];
        for (std::size_t c = 0; c < d; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < f; ++j) s += centred[j] * p.components(c, j);
            out(i, c) = s;
        }
    }
    return out;
}

}  // namespace bitro::ingest
