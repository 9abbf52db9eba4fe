#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

namespace convexctrl {

// Deterministic random stream. mt19937_64 is fully specified by the standard;
// the bit->double mappings below avoid the implementation-defined std
// distributions so that seeded runs reproduce bit-for-bit everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // uniform in [0,1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller (deterministic)
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 1e-300);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  int index(int n) {
    if (n <= 0) throw std::invalid_argument("Rng::index: n must be positive");
    return static_cast<int>(gen_() % static_cast<std::uint64_t>(n));
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// radical-inverse Halton point, index >= 0
double halton(std::uint64_t index, int base);

// worker cap: min(hardware, CONVEXCTRL_THREADS); at least 1
int worker_count();

// Runs body(i) for i in [0,n). Each call writes only its own slot, so the
// result does not depend on the thread schedule.
void parallel_for(int n, const std::function<void(int)>& body);

}  // namespace convexctrl
