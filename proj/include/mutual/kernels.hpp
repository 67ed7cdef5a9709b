#pragma once

// Dense row-major kernels used by the tape. Every kernel has a serial
// version and an OpenMP version; the OpenMP version only splits the
// outer (output) loop, so each output element is summed in the same order
// and both versions produce bit-identical results.

namespace mutual::kernels {

enum class Exec { serial, parallel };

void set_default_exec(Exec e);
Exec default_exec();

// y[r] = A[r,c] x[c]
void matvec(const double* A, const double* x, double* y, int r, int c, Exec e);
inline void matvec(const double* A, const double* x, double* y, int r, int c) { matvec(A, x, y, r, c, default_exec()); }

// y[c] = A[r,c]^T x[r]
void matvec_t(const double* A, const double* x, double* y, int r, int c, Exec e);
inline void matvec_t(const double* A, const double* x, double* y, int r, int c) {
  matvec_t(A, x, y, r, c, default_exec());
}

// C[n,o] = A[n,d] B[o,d]^T
void matmul_nt(const double* A, const double* B, double* C, int n, int d, int o, Exec e);
inline void matmul_nt(const double* A, const double* B, double* C, int n, int d, int o) {
  matmul_nt(A, B, C, n, d, o, default_exec());
}

// C[n,d] = A[n,o] B[o,d]
void matmul_nn(const double* A, const double* B, double* C, int n, int o, int d, Exec e);
inline void matmul_nn(const double* A, const double* B, double* C, int n, int o, int d) {
  matmul_nn(A, B, C, n, o, d, default_exec());
}

// C[o,d] += A[n,o]^T B[n,d]
void matmul_tn_acc(const double* A, const double* B, double* C, int n, int o, int d, Exec e);
inline void matmul_tn_acc(const double* A, const double* B, double* C, int n, int o, int d) {
  matmul_tn_acc(A, B, C, n, o, d, default_exec());
}

// G[r,c] += a[r] b[c]^T
void outer_acc(double* G, const double* a, const double* b, int r, int c, Exec e);
inline void outer_acc(double* G, const double* a, const double* b, int r, int c) {
  outer_acc(G, a, b, r, c, default_exec());
}

}  // namespace mutual::kernels
