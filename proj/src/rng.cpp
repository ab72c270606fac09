#include "silo/rng.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "silo/errors.hpp"

namespace silo {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = splitmix64(master);
  for (char c : tag) h = splitmix64(h ^ static_cast<unsigned char>(c));
  for (std::uint64_t c : coords) h = splitmix64(h ^ splitmix64(c + 0x51ed270b27cf9a3dULL));
  return h;
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw DomainError("Rng::below(0)");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double Rng::normal() {
  const double u1 = uniform_open();
  const double u2 = uniform_open();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gumbel() { return silo::gumbel(uniform_open()); }

double gumbel(double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("gumbel: u must lie in (0, 1), got " + std::to_string(u));
  return -std::log(-std::log(u));
}

}  // namespace silo
