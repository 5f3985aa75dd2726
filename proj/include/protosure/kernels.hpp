#pragma once

// Inner-loop arithmetic used by every numeric module. Each kernel has a
// scalar reference implementation plus vectorized variants (AVX2+FMA on
// x86-64, NEON on AArch64). The variant is chosen once at startup from the
// CPU feature bits and can be overridden with PROTOSURE_SIMD=scalar|avx2|neon
// or set_level().

#include <cstddef>
#include <string_view>

namespace protosure::kernels {

enum class Level { Scalar, Avx2, Neon };

struct KernelTable {
  Level level;
  std::string_view name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y[i] *= alpha
  void (*scale)(double alpha, double* y, std::size_t n);
  // max_i x[i]; n >= 1
  double (*max)(const double* x, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the variant was not compiled into this build.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Best level the running CPU supports.
Level detect();
bool available(Level level);

const KernelTable& active();
// Throws std::invalid_argument when the level is unavailable on this CPU.
void set_level(Level level);
Level current_level();
std::string_view level_name(Level level);

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline void scale(double alpha, double* y, std::size_t n) { active().scale(alpha, y, n); }
inline double max(const double* x, std::size_t n) { return active().max(x, n); }

}  // namespace protosure::kernels
