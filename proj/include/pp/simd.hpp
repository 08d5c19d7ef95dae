#pragma once

#include <cstddef>
#include <string_view>

// Row-level arithmetic kernels used by the convolution and metric loops.
// Every kernel has a scalar reference implementation; ISA-specific variants
// are compiled in separate translation units and chosen at runtime.

namespace pp::simd {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  /// y[i] += a * x[i]. Variants must match the scalar result bit for bit
  /// (one multiply and one add per element, no fused multiply-add).
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  /// sum_i x[i] * y[i]. Variants may reassociate the sum.
  double (*dot)(std::size_t n, const double* x, const double* y);
  /// sum_i x[i]. Variants may reassociate the sum.
  double (*sum)(std::size_t n, const double* x);
  /// out[i] = x[i] * y[i], bit-exact across variants.
  void (*mul)(std::size_t n, const double* x, const double* y, double* out);
};

std::string_view isa_name(Isa isa);

/// Parses "scalar" / "avx2"; throws DomainError on anything else.
Isa parse_isa(std::string_view name);

/// True if the variant was compiled in and the running CPU supports it.
bool isa_available(Isa isa);

/// Widest available variant.
Isa best_isa();

const KernelTable& table_for(Isa isa);

/// The table used by library code. Defaults to best_isa().
const KernelTable& active();
Isa active_isa();

/// Selects the variant used by library code; throws DomainError if unavailable.
void set_active_isa(Isa isa);

namespace detail {
const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when not compiled in
}  // namespace detail

}  // namespace pp::simd
