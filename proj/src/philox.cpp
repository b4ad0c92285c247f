#include "bnndp/rng.hpp"

#include <cmath>
#include <numbers>

namespace bnndp {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = std::uint64_t(a) * b;
  hi = std::uint32_t(p >> 32);
  lo = std::uint32_t(p);
}

}  // namespace

Philox4x32::Counter Philox4x32::block(Counter c, Key k) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      k[0] += kW0;
      k[1] += kW1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kM0, c[0], hi0, lo0);
    mulhilo(kM1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
  return c;
}

NormalStream::NormalStream(std::uint64_t seed, std::uint32_t a, std::uint32_t b)
    : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)}, ctr_{0u, 0u, a, b} {}

void NormalStream::refill() {
  buf_ = Philox4x32::block(ctr_, key_);
  if (++ctr_[0] == 0) ++ctr_[1];
  used_ = 0;
}

double NormalStream::uniform() {
  if (used_ > 2) refill();
  const std::uint64_t bits = (std::uint64_t(buf_[used_]) << 32) | buf_[used_ + 1];
  used_ += 2;
  return (double(bits >> 11) + 0.5) * 0x1.0p-53;
}

double NormalStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform(), u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double th = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(th);
  has_spare_ = true;
  return r * std::cos(th);
}

}  // namespace bnndp
