#include "bgm/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace bgm::kernels {
namespace {

const KernelTable* initial_table() {
  if (const char* env = std::getenv("BGM_KERNELS"); env && std::string_view(env) == "scalar")
    return &scalar_table();
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

const KernelTable*& current() {
  static const KernelTable* table = initial_table();
  return table;
}

}  // namespace

const KernelTable& active() { return *current(); }

bool select(std::string_view name) {
  if (name == "scalar") {
    current() = &scalar_table();
    return true;
  }
  if (name == "avx2") {
    if (const KernelTable* t = avx2_table()) {
      current() = t;
      return true;
    }
  }
  return false;
}

}  // namespace bgm::kernels
