#pragma once

#include <array>
#include <cstdint>

namespace bnndp {

// Philox4x32-10 counter-based generator.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;
  static Counter block(Counter ctr, Key key);
};

// Sequential uniforms/normals from one Philox stream. The stream is fully
// identified by (seed, a, b); the block index runs in the first counter word.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint32_t a, std::uint32_t b);

  double uniform();  // in (0, 1)
  double normal();

 private:
  void refill();

  Philox4x32::Key key_;
  Philox4x32::Counter ctr_;
  Philox4x32::Counter buf_{};
  int used_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace bnndp
