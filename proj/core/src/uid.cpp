#include "flagforge/uid.hpp"

#include <cstdlib>
#include <random>

namespace flagforge {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

UidGenerator::UidGenerator(std::uint64_t seed) : seed_(splitmix64(seed)) {}

UidGenerator UidGenerator::from_environment() {
  if (const char* seed = std::getenv("FLAGFORGE_SEED"); seed && *seed) {
    return UidGenerator(std::strtoull(seed, nullptr, 0));
  }
  std::random_device rd;
  return UidGenerator((std::uint64_t{rd()} << 32) ^ rd());
}

std::string UidGenerator::next() {
  // splitmix64 is a bijection, so distinct counters give distinct uids.
  std::uint64_t value = splitmix64(seed_ + counter_++);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[value & 0xf];
    value >>= 4;
  }
  return out;
}

bool is_uid(std::string_view text) {
  if (text.size() != 16) return false;
  for (char c : text) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

}  // namespace flagforge
