// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string_view>

namespace grace::simd {

enum class Isa { Scalar, Avx2 };

/// Table of inner-loop kernels. Every entry has a scalar reference
/// implementation; wider variants must agree with it up to summation order.
struct Kernels {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y *= alpha
  void (*scale)(double alpha, double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
};

const Kernels& scalar_kernels();
const Kernels& avx2_kernels();

bool cpu_has_avx2();

/// Kernels chosen at startup: AVX2 when the CPU supports it, unless the
/// environment sets GRACE_SIMD=scalar.
const Kernels& active();
Isa active_isa();
std::string_view isa_name(Isa isa);

/// Overrides the runtime choice (tests use this to run both paths).
/// Requesting Avx2 on a CPU without it falls back to Scalar.
void force(Isa isa);

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline void scale(double alpha, double* y, std::size_t n) { active().scale(alpha, y, n); }
inline double sum(const double* x, std::size_t n) { return active().sum(x, n); }

}  // namespace grace::simd
