#include "txd/kernels.hpp"

#include <cstdlib>
#include <string>

namespace txd::kernels {

const Ops* avx2_ops();  // nullptr when not built for x86-64

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const Ops* detect_best() {
  if (const Ops* ops = avx2_ops(); ops && cpu_has_avx2()) return ops;
  return &scalar_ops();
}

const Ops* resolve(std::string_view name) {
  if (name == "scalar") return &scalar_ops();
  if (name == "avx2") {
    const Ops* ops = avx2_ops();
    return (ops && cpu_has_avx2()) ? ops : nullptr;
  }
  if (name == "auto") return detect_best();
  return nullptr;
}

const Ops* initial_selection() {
  if (const char* env = std::getenv("TXD_KERNELS"); env && *env) {
    if (const Ops* ops = resolve(env)) return ops;
  }
  return detect_best();
}

const Ops*& current() {
  static const Ops* sel = initial_selection();
  return sel;
}

}  // namespace

const Ops& active() { return *current(); }

bool select(std::string_view name) {
  const Ops* ops = resolve(name);
  if (!ops) return false;
  current() = ops;
  return true;
}

std::vector<const Ops*> available() {
  std::vector<const Ops*> out{&scalar_ops()};
  if (const Ops* ops = avx2_ops(); ops && cpu_has_avx2()) out.push_back(ops);
  return out;
}

}  // namespace txd::kernels
