#include <cstdlib>
#include <stdexcept>
#include <string>

#include "conformer/kernels.hpp"

namespace conformer::kernels {

#ifndef CONFORMER_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif
#ifndef CONFORMER_HAVE_NEON
const KernelTable* neon_table() { return nullptr; }
#endif

namespace {

const KernelTable& select() {
  if (const char* forced = std::getenv("CONFORMER_KERNELS")) {
    const std::string want = forced;
    if (want == "scalar") return scalar_table();
    const KernelTable* t = want == "avx2" ? avx2_table() : want == "neon" ? neon_table() : nullptr;
    if (t == nullptr) throw std::runtime_error("CONFORMER_KERNELS=" + want + " is not available");
    return *t;
  }
  if (const KernelTable* t = avx2_table()) return *t;
  if (const KernelTable* t = neon_table()) return *t;
  return scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace conformer::kernels
