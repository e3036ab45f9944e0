// SPDX-License-Identifier: Apache-2.0
//! \file arc/numeric.hpp
//! Small numerical building blocks shared by the modules.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace arc {

using Vector = std::vector<double>;

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
double squared_distance(std::span<const double> a, std::span<const double> b);
double distance(std::span<const double> a, std::span<const double> b);

//! Pairwise (cascade) summation; the reduction tree depends only on size.
double pairwise_sum(std::span<const double> values);

/*!
 * Adaptive Simpson quadrature of f over [a, b].
 *
 * A subinterval is accepted when |S_left + S_right - S| <= 15 * max(abs_tol,
 * rel_tol * |S_left + S_right|); the Richardson-corrected value is returned.
 */
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double abs_tol, double rel_tol = 0.0, int max_depth = 48);

//! Running mean / second central moment with an exact pairwise merge (Chan et al.).
struct Moments {
    double count = 0.0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        count += 1.0;
        const double delta = x - mean;
        mean += delta / count;
        m2 += delta * (x - mean);
    }
    void merge(const Moments& other);
    //! Unbiased sample variance; 0 for fewer than two samples.
    double variance() const { return count > 1.0 ? m2 / (count - 1.0) : 0.0; }
};

//! Real number in C-locale scientific notation with round-trip precision.
std::string format_real(double value);

/*!
 * Run fn(i) for i in [0, count) on `threads` workers (0 = hardware
 * concurrency). Results must be written to index-owned slots by the caller;
 * the first exception thrown by any task is rethrown here.
 */
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) {
                return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next.store(count);
            }
        }
    };
    std::vector<std::thread> pool;
    const auto n_workers = std::min<std::size_t>(threads, count);
    pool.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) {
        pool.emplace_back(worker);
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

}  // namespace arc
