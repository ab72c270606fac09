#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace silo {

std::uint64_t splitmix64(std::uint64_t x);

// Named sub-stream seed: every random consumer derives its seed from the
// master seed, a tag, and up to a handful of integer coordinates, so that
// streams never depend on how many draws other consumers made.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::initializer_list<std::uint64_t> coords = {});

// Thin wrapper over mt19937_64 with platform-independent transforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in the open interval (0, 1).
  double uniform_open() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  double normal();
  double gumbel();

 private:
  std::mt19937_64 engine_;
};

// Inverse-CDF Gumbel(0, 1): -log(-log u). Throws DomainError unless 0 < u < 1.
double gumbel(double u);

}  // namespace silo
