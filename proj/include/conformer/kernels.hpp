#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision inner loops used by every matrix-shaped primitive.
//
// Each table is a complete implementation. The scalar table is the reference;
// vector tables must agree with it to rounding (they may reassociate sums and
// fuse multiply-adds). The active table is picked once per process from CPU
// features, or forced with CONFORMER_KERNELS=scalar|avx2|neon.

namespace conformer::kernels {

struct KernelTable {
  std::string_view name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m,n] += A[m,k] * B[k,n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // C[m,n] += A[m,k] * B[n,k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // C[m,n] += A[k,m]^T * B[k,n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
};

const KernelTable& scalar_table();
// nullptr when the variant is not compiled in or the CPU lacks the features.
const KernelTable* avx2_table();
const KernelTable* neon_table();

const KernelTable& active();

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
  active().gemm_nn(m, n, k, a, b, c);
}
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
  active().gemm_nt(m, n, k, a, b, c);
}
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
  active().gemm_tn(m, n, k, a, b, c);
}

}  // namespace conformer::kernels
