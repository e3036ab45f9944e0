// SPDX-License-Identifier: Apache-2.0
#include "arc/numeric.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace arc {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double distance(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(squared_distance(a, b));
}

double pairwise_sum(std::span<const double> values) {
    constexpr std::size_t kBlock = 8;
    if (values.size() <= kBlock) {
        double s = 0.0;
        for (double v : values) {
            s += v;
        }
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

namespace {

struct SimpsonPanel {
    double a, m, b, fa, fm, fb, whole;
};

double simpson_recurse(const std::function<double(double)>& f, const SimpsonPanel& p,
                       double abs_tol, double rel_tol, int depth) {
    const double lm = 0.5 * (p.a + p.m);
    const double rm = 0.5 * (p.m + p.b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (p.m - p.a) / 6.0 * (p.fa + 4.0 * flm + p.fm);
    const double right = (p.b - p.m) / 6.0 * (p.fm + 4.0 * frm + p.fb);
    const double refined = left + right;
    const double err = refined - p.whole;
    const double tol = std::max(abs_tol, rel_tol * std::abs(refined));
    if (depth <= 0 || std::abs(err) <= 15.0 * tol) {
        return refined + err / 15.0;
    }
    return simpson_recurse(f, {p.a, lm, p.m, p.fa, flm, p.fm, left}, 0.5 * abs_tol, rel_tol,
                           depth - 1) +
           simpson_recurse(f, {p.m, rm, p.b, p.fm, frm, p.fb, right}, 0.5 * abs_tol, rel_tol,
                           depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double abs_tol, double rel_tol, int max_depth) {
    if (a == b) {
        return 0.0;
    }
    if (!(abs_tol > 0.0) && !(rel_tol > 0.0)) {
        throw std::invalid_argument("adaptive_simpson: tolerance must be positive");
    }
    const double m = 0.5 * (a + b);
    const double fa = f(a);
    const double fm = f(m);
    const double fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_recurse(f, {a, m, b, fa, fm, fb, whole}, abs_tol, rel_tol, max_depth);
}

void Moments::merge(const Moments& other) {
    if (other.count == 0.0) {
        return;
    }
    if (count == 0.0) {
        *this = other;
        return;
    }
    const double total = count + other.count;
    const double delta = other.mean - mean;
    mean += delta * other.count / total;
    m2 += other.m2 + delta * delta * count * other.count / total;
    count = total;
}

std::string format_real(double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, "%.16e", value);
    return buffer;
}

}  // namespace arc
