#include "nwlab/common.hpp"

#include <cmath>
#include <cstring>

namespace nwlab {

std::string u128_to_string(u128 v) {
  if (v == 0) return "0";
  std::string out;
  while (v > 0) {
    out.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  std::string rev(out.rbegin(), out.rend());
  return rev;
}

u128 u128_from_string(const std::string& s) {
  if (s.empty()) throw Error(ErrorCode::io, "empty integer field");
  u128 v = 0;
  for (char c : s) {
    if (c < '0' || c > '9')
      throw Error(ErrorCode::io, "bad integer field: " + s);
    v = v * 10 + static_cast<unsigned>(c - '0');
  }
  return v;
}

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::config:
      return 2;
    case ErrorCode::oversubscribed:
    case ErrorCode::io:
      return 3;
    case ErrorCode::verification:
      return 4;
    default:
      return 1;
  }
}

std::uint64_t Rng::next_below(std::uint64_t bound) noexcept {
  // Lemire's multiply-shift rejection method.
  if (bound == 0) return 0;
  std::uint64_t x = next();
  u128 m = static_cast<u128>(x) * static_cast<u128>(bound);
  std::uint64_t lo = static_cast<std::uint64_t>(m);
  if (lo < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (lo < threshold) {
      x = next();
      m = static_cast<u128>(x) * static_cast<u128>(bound);
      lo = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

u128 Rng::next_below_u128(u128 bound) noexcept {
  if (bound == 0) return 0;
  if (bound <= ~std::uint64_t{0})
    return next_below(static_cast<std::uint64_t>(bound));
  // Classic rejection: accept draws below the largest multiple of bound.
  const u128 limit = static_cast<u128>(0) - ((static_cast<u128>(0) - bound) % bound);
  for (;;) {
    const u128 draw = (static_cast<u128>(next()) << 64) | next();
    if (draw < limit || limit == 0) return draw % bound;
  }
}

double Rng::next_normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 1 - u keeps the log argument strictly positive.
  const double u1 = 1.0 - next_unit();
  const double u2 = next_unit();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t keyed_word(std::uint64_t seed, u128 index) noexcept {
  std::uint64_t h = mix64(seed ^ 0xA24BAED4963EE407ULL);
  h = mix64(h ^ static_cast<std::uint64_t>(index >> 64));
  h = mix64(h ^ static_cast<std::uint64_t>(index));
  return h;
}

std::uint64_t fnv1a64(const void* data, std::size_t n) noexcept {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) noexcept {
  return fnv1a64(s.data(), s.size());
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

}  // namespace nwlab
