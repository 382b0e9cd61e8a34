// Double-precision GEMM wrappers. Eigen is compiled single threaded here so
// training runs reproduce bit for bit regardless of machine core count.
#define EIGEN_DONT_PARALLELIZE 1

#include "distileval/matmul.hpp"

#include <Eigen/Dense>

namespace distileval {

namespace {
using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;
} // namespace

void mm_nn(const double* a, const double* b, double* c, int m, int k, int n,
           bool accumulate) {
    MapC A(a, m, k), B(b, k, n);
    MapM C(c, m, n);
    if (accumulate)
        C.noalias() += A * B;
    else
        C.noalias() = A * B;
}

void mm_nt(const double* a, const double* b, double* c, int m, int k, int n,
           bool accumulate) {
    MapC A(a, m, k), B(b, n, k);
    MapM C(c, m, n);
    if (accumulate)
        C.noalias() += A * B.transpose();
    else
        C.noalias() = A * B.transpose();
}

void mm_tn(const double* a, const double* b, double* c, int m, int k, int n,
           bool accumulate) {
    MapC A(a, k, m), B(b, k, n);
    MapM C(c, m, n);
    if (accumulate)
        C.noalias() += A.transpose() * B;
    else
        C.noalias() = A.transpose() * B;
}

} // namespace distileval
