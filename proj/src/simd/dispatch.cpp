// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string>

#include "grace/simd.hpp"

namespace grace::simd {

bool cpu_has_avx2() {
#if defined(GRACE_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

Isa detect() {
  if (const char* env = std::getenv("GRACE_SIMD"); env && std::string(env) == "scalar") return Isa::Scalar;
  return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

const Kernels& active() {
  return current().load(std::memory_order_relaxed) == Isa::Avx2 ? avx2_kernels() : scalar_kernels();
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

std::string_view isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

void force(Isa isa) {
  if (isa == Isa::Avx2 && !cpu_has_avx2()) isa = Isa::Scalar;
  current().store(isa, std::memory_order_relaxed);
}

}  // namespace grace::simd
