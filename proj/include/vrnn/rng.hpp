#ifndef VRNN_RNG_HPP
#define VRNN_RNG_HPP

#include <cstdint>
#include <string_view>

namespace vrnn {

// Counter-based pseudo-random stream: output i is a hash of (key, i), so a
// stream can be re-opened at any point and two streams with different labels
// are independent. All randomness in the project flows from one root seed
// through named substreams of this generator.
class Rng {
 public:
  explicit Rng(uint64_t key) : key_(key) {}

  // Derive an independent child stream from a string label.
  Rng stream(std::string_view label) const;
  // Derive a child stream from an integer label (epoch, batch index, ...).
  Rng stream(uint64_t label) const;

  uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller (one draw per call, cached pair).
  double normal();

  uint64_t key() const { return key_; }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// Root generator for a named run seed.
inline Rng root_rng(uint64_t seed) { return Rng(seed * 0x9E3779B97F4A7C15ull + 0x1234567887654321ull); }

}  // namespace vrnn

#endif
