// Data-parallel inner loops behind the tensor engine.
//
// Every kernel exists twice: a portable scalar reference and an AVX2+FMA
// variant selected at runtime via CPU detection. The two are equivalence
// tested against each other; the backend can be forced programmatically or
// through the CINETAB_KERNELS environment variable (scalar|avx2|auto).
#pragma once

#include <cstddef>
#include <cstdint>

namespace cinetab::kernels {

enum class Backend { Auto, Scalar, Avx2 };

// Forces a backend. Backend::Auto re-runs CPU detection. Throws ConfigError
// if the requested ISA is unavailable on this machine.
void set_backend(Backend b);
Backend active_backend();
const char* backend_name();

// Row-major GEMM family. accumulate=false writes C, true adds into C.
//   gemm_nn: C[m x n] (+)= A[m x k] * B[k x n]
//   gemm_nt: C[m x n] (+)= A[m x k] * B[n x k]^T
//   gemm_tn: C[k x n] (+)= A[m x k]^T * B[m x n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);

// Elementwise and reduction kernels.
template <typename T>
void add(const T* a, const T* b, T* out, std::size_t n);
template <typename T>
void sub(const T* a, const T* b, T* out, std::size_t n);
template <typename T>
void mul(const T* a, const T* b, T* out, std::size_t n);
template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n);  // y += alpha * x
template <typename T>
void scale(T alpha, T* x, std::size_t n);  // x *= alpha
template <typename T>
T sum(const T* x, std::size_t n);
template <typename T>
T dot(const T* a, const T* b, std::size_t n);

}  // namespace cinetab::kernels
