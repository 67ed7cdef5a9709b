#include "mutual/kernels.hpp"

#include <algorithm>
#include <atomic>

namespace mutual::kernels {

namespace {

std::atomic<Exec> g_exec{Exec::serial};

// Below this many multiply-adds the fork/join cost dominates.
constexpr long kParallelWork = 1L << 14;

bool go_parallel(Exec e, long work) { return e == Exec::parallel && work >= kParallelWork; }

}  // namespace

void set_default_exec(Exec e) { g_exec = e; }
Exec default_exec() { return g_exec; }

void matvec(const double* A, const double* x, double* y, int r, int c, Exec e) {
  // Four rows at a time for independent accumulators; each row still sums
  // left to right.
  const int blocks = (r + 3) / 4;
#pragma omp parallel for schedule(static) if (go_parallel(e, static_cast<long>(r) * c))
  for (int b = 0; b < blocks; ++b) {
    const int i0 = 4 * b;
    if (i0 + 4 <= r) {
      const double* r0 = A + static_cast<long>(i0) * c;
      const double *r1 = r0 + c, *r2 = r1 + c, *r3 = r2 + c;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      for (int j = 0; j < c; ++j) {
        s0 += r0[j] * x[j];
        s1 += r1[j] * x[j];
        s2 += r2[j] * x[j];
        s3 += r3[j] * x[j];
      }
      y[i0] = s0;
      y[i0 + 1] = s1;
      y[i0 + 2] = s2;
      y[i0 + 3] = s3;
    } else {
      for (int i = i0; i < r; ++i) {
        const double* row = A + static_cast<long>(i) * c;
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += row[j] * x[j];
        y[i] = s;
      }
    }
  }
}

void matvec_t(const double* A, const double* x, double* y, int r, int c, Exec e) {
  // Column blocks walked row by row: contiguous reads, and every y[j] still
  // sums over i in ascending order.
  constexpr int kBlock = 64;
  const int blocks = (c + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static) if (go_parallel(e, static_cast<long>(r) * c))
  for (int b = 0; b < blocks; ++b) {
    const int j0 = b * kBlock, j1 = std::min(c, j0 + kBlock);
    for (int j = j0; j < j1; ++j) y[j] = 0.0;
    for (int i = 0; i < r; ++i) {
      const double* row = A + static_cast<long>(i) * c;
      const double xi = x[i];
      for (int j = j0; j < j1; ++j) y[j] += row[j] * xi;
    }
  }
}

void matmul_nt(const double* A, const double* B, double* C, int n, int d, int o, Exec e) {
#pragma omp parallel for schedule(static) if (go_parallel(e, static_cast<long>(n) * d * o))
  for (int k = 0; k < n; ++k) {
    const double* a = A + static_cast<long>(k) * d;
    for (int m = 0; m < o; ++m) {
      const double* b = B + static_cast<long>(m) * d;
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += a[j] * b[j];
      C[static_cast<long>(k) * o + m] = s;
    }
  }
}

void matmul_nn(const double* A, const double* B, double* C, int n, int o, int d, Exec e) {
#pragma omp parallel for schedule(static) if (go_parallel(e, static_cast<long>(n) * d * o))
  for (int k = 0; k < n; ++k) {
    double* c = C + static_cast<long>(k) * d;
    for (int j = 0; j < d; ++j) c[j] = 0.0;
    for (int m = 0; m < o; ++m) {
      const double a = A[static_cast<long>(k) * o + m];
      const double* b = B + static_cast<long>(m) * d;
      for (int j = 0; j < d; ++j) c[j] += a * b[j];
    }
  }
}

void matmul_tn_acc(const double* A, const double* B, double* C, int n, int o, int d, Exec e) {
#pragma omp parallel for schedule(static) if (go_parallel(e, static_cast<long>(n) * d * o))
  for (int m = 0; m < o; ++m) {
    double* c = C + static_cast<long>(m) * d;
    for (int k = 0; k < n; ++k) {
      const double a = A[static_cast<long>(k) * o + m];
      const double* b = B + static_cast<long>(k) * d;
      for (int j = 0; j < d; ++j) c[j] += a * b[j];
    }
  }
}

void outer_acc(double* G, const double* a, const double* b, int r, int c, Exec e) {
#pragma omp parallel for schedule(static) if (go_parallel(e, static_cast<long>(r) * c))
  for (int i = 0; i < r; ++i) {
    double* row = G + static_cast<long>(i) * c;
    const double ai = a[i];
    for (int j = 0; j < c; ++j) row[j] += ai * b[j];
  }
}

}  // namespace mutual::kernels
