#pragma once

#include <cstddef>

#include "distileval/dual.hpp"

namespace distileval {

// Row-major matrix products shared by the linear and convolution layers.
// C = A * B            (mm_nn)   A: m x k, B: k x n, C: m x n
// C = A * B^T          (mm_nt)   A: m x k, B: n x k, C: m x n
// C = A^T * B          (mm_tn)   A: k x m, B: k x n, C: m x n
// accumulate=true adds into C instead of overwriting it.
//
// The double overloads route through Eigen (single threaded so results do
// not depend on core count); the generic template covers dual numbers.

void mm_nn(const double* a, const double* b, double* c, int m, int k, int n,
           bool accumulate = false);
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n,
           bool accumulate = false);
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n,
           bool accumulate = false);

template <class S>
void mm_nn(const S* a, const S* b, S* c, int m, int k, int n,
           bool accumulate = false) {
    for (int i = 0; i < m; ++i) {
        S* crow = c + static_cast<std::size_t>(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) crow[j] = S{};
        for (int p = 0; p < k; ++p) {
            const S aip = a[static_cast<std::size_t>(i) * k + p];
            const S* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

template <class S>
void mm_nt(const S* a, const S* b, S* c, int m, int k, int n,
           bool accumulate = false) {
    for (int i = 0; i < m; ++i) {
        const S* arow = a + static_cast<std::size_t>(i) * k;
        S* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const S* brow = b + static_cast<std::size_t>(j) * k;
            S acc{};
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            if (accumulate)
                crow[j] += acc;
            else
                crow[j] = acc;
        }
    }
}

template <class S>
void mm_tn(const S* a, const S* b, S* c, int m, int k, int n,
           bool accumulate = false) {
    if (!accumulate)
        for (std::size_t i = 0; i < static_cast<std::size_t>(m) * n; ++i)
            c[i] = S{};
    for (int p = 0; p < k; ++p) {
        const S* arow = a + static_cast<std::size_t>(p) * m;
        const S* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const S api = arow[i];
            S* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += api * brow[j];
        }
    }
}

} // namespace distileval
