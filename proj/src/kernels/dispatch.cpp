#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "kernels/kernels_internal.hpp"

namespace protosure::kernels {

namespace {

const KernelTable kScalar{Level::Scalar, "scalar", detail::dot_scalar, detail::axpy_scalar,
                          detail::scale_scalar, detail::max_scalar};

#if defined(__x86_64__) || defined(_M_X64)
const KernelTable kAvx2{Level::Avx2, "avx2", detail::dot_avx2, detail::axpy_avx2, detail::scale_avx2,
                        detail::max_avx2};
#endif

#if defined(__aarch64__)
const KernelTable kNeon{Level::Neon, "neon", detail::dot_neon, detail::axpy_neon, detail::scale_neon,
                        detail::max_neon};
#endif

const KernelTable* table_for(Level level) {
  switch (level) {
    case Level::Scalar:
      return &kScalar;
    case Level::Avx2:
      return avx2_table();
    case Level::Neon:
      return neon_table();
  }
  return nullptr;
}

const KernelTable* initial_table() {
  Level level = detect();
  if (const char* env = std::getenv("PROTOSURE_SIMD")) {
    const std::string requested(env);
    if (requested == "scalar") {
      level = Level::Scalar;
    } else if (requested == "avx2" && available(Level::Avx2)) {
      level = Level::Avx2;
    } else if (requested == "neon" && available(Level::Neon)) {
      level = Level::Neon;
    }
  }
  return table_for(level);
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{initial_table()};
  return slot;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#if defined(__x86_64__) || defined(_M_X64)
  return &kAvx2;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(__aarch64__)
  return &kNeon;
#else
  return nullptr;
#endif
}

bool available(Level level) {
  switch (level) {
    case Level::Scalar:
      return true;
    case Level::Avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Level::Neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Level detect() {
  if (available(Level::Avx2)) return Level::Avx2;
  if (available(Level::Neon)) return Level::Neon;
  return Level::Scalar;
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

void set_level(Level level) {
  if (!available(level)) {
    throw std::invalid_argument("kernel level '" + std::string(level_name(level)) +
                                "' is not available on this CPU");
  }
  active_slot().store(table_for(level), std::memory_order_release);
}

Level current_level() { return active().level; }

std::string_view level_name(Level level) {
  switch (level) {
    case Level::Scalar:
      return "scalar";
    case Level::Avx2:
      return "avx2";
    case Level::Neon:
      return "neon";
  }
  return "unknown";
}

}  // namespace protosure::kernels
