#include "cycnpf/util.hpp"

#include <cstdio>

namespace cycnpf {

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace cycnpf
