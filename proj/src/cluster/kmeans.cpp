// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include "bitro/cluster/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "bitro/error.hpp"
#include "bitro/rng.hpp"
#include "bitro/simd/kernels.hpp"

namespace bitro::cluster {

namespace {

struct Stats {
    Tensor sums;  // K x D
    std::vector<std::size_t> count;
    std::vector<double> sse;
};

Stats cluster_stats(const Tensor& h, std::span<const std::size_t> labels, std::size_t k) {
    const std::size_t d = h.cols();
    Stats s{Tensor(Shape{k, d}), std::vector<std::size_t>(k, 0), std::vector<double>(k, 0.0)};
    for (std::size_t i = 0; i < h.rows(); ++i) {
        ++s.count[labels[i]];
        simd::axpy(1.0, h.row_span(i), s.sums.row_span(labels[i]));
    }
    Tensor means = s.sums;
    for (std::size_t c = 0; c < k; ++c)
        if (s.count[c] > 0)
            for (double& v : means.row_span(c)) v /= static_cast<double>(s.count[c]);
    for (std::size_t i = 0; i < h.rows(); ++i) s.sse[labels[i]] += simd::sq_dist(h.row_span(i), means.row_span(labels[i]));
    s.sums = std::move(means);
    return s;
}

double j_of(const Stats& s) {
    double j = 0.0;
    for (std::size_t c = 0; c < s.count.size(); ++c)
        if (s.count[c] > 0) j += s.sse[c] / static_cast<double>(s.count[c]);
    return j;
}

Tensor seed_plus_plus(const Tensor& h, std::size_t k, Rng& rng) {
    const std::size_t n = h.rows(), d = h.cols();
    Tensor c(Shape{k, d});
    std::size_t first = rng.below(n);
    std::copy_n(h.row_span(first).begin(), d, c.row_span(0).begin());
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    for (std::size_t m = 1; m < k; ++m) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dist[i] = std::min(dist[i], simd::sq_dist(h.row_span(i), c.row_span(m - 1)));
            total += dist[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                if (dist[i] <= 0.0) continue;
                if (r < dist[i]) {
                    pick = i;
                    break;
                }
                r -= dist[i];
            }
            while (dist[pick] <= 0.0) --pick;  // guard against rounding at the end
        } else {
            // every point coincides with a centroid; duplicates are unavoidable
            pick = rng.below(n);
        }
        std::copy_n(h.row_span(pick).begin(), d, c.row_span(m).begin());
    }
    return c;
}

std::vector<std::size_t> assign_initial_nonempty(const Tensor& h, const Tensor& centroids) {
    // Nearest-centroid labels, then any empty cluster steals the point closest
    // to its centroid from a cluster with at least two members.
    std::vector<std::size_t> labels = assign(centroids, h);
    const std::size_t k = centroids.rows();
    std::vector<std::size_t> count(k, 0);
    for (std::size_t l : labels) ++count[l];
    for (std::size_t c = 0; c < k; ++c) {
        if (count[c] > 0) continue;
        std::size_t best = h.rows();
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < h.rows(); ++i) {
            if (count[labels[i]] < 2) continue;
            const double dd = simd::sq_dist(h.row_span(i), centroids.row_span(c));
            if (dd < best_d) {
                best_d = dd;
                best = i;
            }
        }
        --count[labels[best]];
        labels[best] = c;
        ++count[c];
    }
    return labels;
}

// Exact change of J when point x moves from cluster a to cluster b.
double move_delta(const Stats& s, std::span<const double> x, std::size_t a, std::size_t b) {
    const double na = static_cast<double>(s.count[a]), nb = static_cast<double>(s.count[b]);
    const double da = simd::sq_dist(x, s.sums.row_span(a)), db = simd::sq_dist(x, s.sums.row_span(b));
    const double sse_a = s.sse[a] - na / (na - 1.0) * da;
    const double sse_b = s.sse[b] + nb / (nb + 1.0) * db;
    const double before = s.sse[a] / na + s.sse[b] / nb;
    const double after = sse_a / (na - 1.0) + sse_b / (nb + 1.0);
    return after - before;
}

void apply_move(Stats& s, std::span<const double> x, std::size_t a, std::size_t b) {
    const double na = static_cast<double>(s.count[a]), nb = static_cast<double>(s.count[b]);
    s.sse[a] -= na / (na - 1.0) * simd::sq_dist(x, s.sums.row_span(a));
    s.sse[b] += nb / (nb + 1.0) * simd::sq_dist(x, s.sums.row_span(b));
    auto ma = s.sums.row_span(a), mb = s.sums.row_span(b);
    for (std::size_t j = 0; j < x.size(); ++j) {
        ma[j] = (na * ma[j] - x[j]) / (na - 1.0);
        mb[j] = (nb * mb[j] + x[j]) / (nb + 1.0);
    }
    --s.count[a];
    ++s.count[b];
}

}  // namespace

double objective(const Tensor& h, std::span<const std::size_t> labels, std::size_t k) {
    if (labels.size() != h.rows()) throw DimensionError("label count does not match rows");
    for (std::size_t l : labels)
        if (l >= k) throw ContractError("label " + std::to_string(l) + " out of range for k=" + std::to_string(k));
    return j_of(cluster_stats(h, labels, k));
}

std::vector<std::size_t> assign(const Tensor& centroids, const Tensor& h) {
    if (h.rank() != 2 || centroids.rank() != 2 || h.cols() != centroids.cols())
        throw DimensionError("points " + shape_str(h.shape()) + " and centroids " + shape_str(centroids.shape()) +
                             " differ in width");
    std::vector<std::size_t> out(h.rows());
    for (std::size_t i = 0; i < h.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centroids.rows(); ++c) {
            const double d = simd::sq_dist(h.row_span(i), centroids.row_span(c));
            if (d < best) {
                best = d;
                out[i] = c;
            }
        }
    }
    return out;
}

PhenotypeModel kmeans_fit(const Tensor& h, const KMeansOptions& opt) {
    if (h.rank() != 2) throw DimensionError("k-means expects an N x D matrix");
    const std::size_t n = h.rows(), k = opt.k;
    if (k == 0) throw ContractError("k must be positive");
    if (n < k) throw ContractError("k-means needs N >= k, got N=" + std::to_string(n) + " k=" + std::to_string(k));
    Rng rng(opt.seed);
    PhenotypeModel m;
    Tensor seeds = seed_plus_plus(h, k, rng);
    m.labels = assign_initial_nonempty(h, seeds);
    Stats st = cluster_stats(h, m.labels, k);
    m.history.push_back(j_of(st));

    for (std::size_t it = 0; it < opt.max_iter; ++it) {
        ++m.iterations;
        const double j_now = m.history.back();
        std::vector<std::size_t> next = assign(st.sums, h);
        bool changed = next != m.labels;
        if (!changed) {
            m.converged = true;
            break;
        }
        std::vector<std::size_t> count(k, 0);
        for (std::size_t l : next) ++count[l];
        const bool keeps_all = std::all_of(count.begin(), count.end(), [](std::size_t c) { return c > 0; });
        Stats cand = keeps_all ? cluster_stats(h, next, k) : Stats{};
        if (keeps_all && j_of(cand) < j_now) {
            m.labels = std::move(next);
            st = std::move(cand);
        } else {
            // Greedy moves: each point may go to its nearest centroid if that
            // strictly lowers J and leaves its cluster non-empty.
            changed = false;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t a = m.labels[i], b = next[i];
                if (a == b || st.count[a] < 2) continue;
                if (move_delta(st, h.row_span(i), a, b) < -1e-12 * (1.0 + j_now)) {
                    apply_move(st, h.row_span(i), a, b);
                    m.labels[i] = b;
                    changed = true;
                }
            }
            if (!changed) {
                m.converged = true;
                break;
            }
        }
        if (!keeps_all || m.labels != next) st = cluster_stats(h, m.labels, k);  // drop accumulated drift
        m.history.push_back(j_of(st));
    }
    m.centroids = std::move(st.sums);
    return m;
}

ad::Var cluster_loss(ad::Var y_cell, std::span<const std::size_t> labels) {
    if (labels.size() != y_cell.rows())
        throw DimensionError("cluster_loss: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(y_cell.rows()) + " cells");
    std::map<std::size_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
    ad::Tape& t = y_cell.tape();
    ad::Var total;
    for (const auto& [label, rows] : members) {
        if (rows.size() < 2) continue;
        ad::Var ys = ad::gather_rows(y_cell, rows);
        ad::Var dev = ad::sub_row(ys, ad::mean_rows(ys));
        ad::Var term = ad::scale(ad::sum(ad::square(dev)), 1.0 / static_cast<double>(rows.size()));
        total = total.valid() ? ad::add(total, term) : term;
    }
    return total.valid() ? total : t.constant(Tensor::scalar(0.0));
}

}  // namespace bitro::cluster
