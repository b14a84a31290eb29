// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <limits>
#include <vector>

namespace bitro::testing {

/// Raw-sum Pearson in extended precision.
inline double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    long double n = x.size(), sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += (long double)x[i] * x[i];
        syy += (long double)y[i] * y[i];
        sxy += (long double)x[i] * y[i];
    }
    const long double vx = n * sxx - sx * sx, vy = n * syy - sy * sy;
    if (vx <= 0 || vy <= 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>((n * sxy - sx * sy) / std::sqrt(vx * vy));
}

/// Jensen-Shannon as entropy of the mixture minus mean entropy.
inline double js_oracle(std::vector<double> p, std::vector<double> q) {
    auto prep = [](std::vector<double>& v) {
        long double t = 0;
        for (double& x : v) {
            x = (x < 0 ? 0 : x) + 1e-12;
            t += x;
        }
        for (double& x : v) x = static_cast<double>(x / t);
    };
    prep(p);
    prep(q);
    auto entropy = [](const std::vector<long double>& v) {
        long double h = 0;
        for (long double x : v) h -= x * std::log(x);
        return h;
    };
    std::vector<long double> lp(p.begin(), p.end()), lq(q.begin(), q.end()), m(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) m[i] = (lp[i] + lq[i]) / 2;
    return static_cast<double>(entropy(m) - (entropy(lp) + entropy(lq)) / 2);
}

}  // namespace bitro::testing
