#include <atomic>
#include <string>

#include "pp/error.hpp"
#include "pp/simd.hpp"

namespace pp::simd {

namespace detail {
#ifndef PP_HAVE_AVX2_KERNELS
const KernelTable* avx2_table() { return nullptr; }
#endif
}  // namespace detail

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&table_for(best_isa())};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  throw DomainError("unknown ISA '" + std::string(name) + "' (expected scalar or avx2)");
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return detail::avx2_table() != nullptr && cpu_has_avx2();
  }
  return false;
}

Isa best_isa() { return isa_available(Isa::avx2) ? Isa::avx2 : Isa::scalar; }

const KernelTable& table_for(Isa isa) {
  if (!isa_available(isa)) {
    throw DomainError("ISA " + std::string(isa_name(isa)) + " is not available on this build or CPU");
  }
  return isa == Isa::avx2 ? *detail::avx2_table() : detail::scalar_table();
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

Isa active_isa() { return active().isa; }

void set_active_isa(Isa isa) { active_slot().store(&table_for(isa), std::memory_order_release); }

}  // namespace pp::simd
