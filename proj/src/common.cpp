#include "fetalus/common.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace fetalus {

std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open file for hashing: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    std::streamsize got = in.gcount();
    const auto* p = reinterpret_cast<const unsigned char*>(buf);
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string to_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string format_ga_weeks_days(int ga_days) {
  int weeks = ga_days / 7;
  int days = ga_days % 7;
  return std::to_string(weeks) + "w " + std::to_string(days) + "d";
}

std::string format_number(double v) {
  // Try increasing precision until the string round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    std::string s = os.str();
    if (std::stod(s) == v) return s;
  }
  return std::to_string(v);
}

}  // namespace fetalus
