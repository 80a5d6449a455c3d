#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

namespace gridloc {

inline constexpr double kTau = 6.283185307179586476925286766559;
inline constexpr double kPi = kTau / 2.0;

// Wraps an angle into [0, tau).
inline double wrap_angle(double a) {
  double r = std::fmod(a, kTau);
  if (r < 0.0) r += kTau;
  if (r >= kTau) r = 0.0;
  return r;
}

// Wraps an angle difference into [-pi, pi).
inline double wrap_signed(double a) {
  return wrap_angle(a + kPi) - kPi;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double norm() const { return std::hypot(x, y); }
  Vec2 rotated(double angle) const {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * x - s * y, s * x + c * y};
  }
};

// Parse failure with position information (maps, logs, configs).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line, int column = 0)
      : std::runtime_error("line " + std::to_string(line) +
                           (column > 0 ? ", column " + std::to_string(column) : std::string()) +
                           ": " + what),
        line_(line),
        column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

// Deterministic random stream. Gaussian draws use Box-Muller on top of the
// raw mt19937_64 output so sequences are identical across standard libraries.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Inclusive integer range.
  int uniform_int(int a, int b) {
    return a + static_cast<int>(gen_() % static_cast<std::uint64_t>(b - a + 1));
  }

  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTau * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Truncated Gaussian via rejection; cutoff in multiples of sigma.
  double normal_truncated(double mean, double sigma, double cutoff) {
    if (sigma <= 0.0) return mean;
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= cutoff) return mean + sigma * z;
    }
  }

 private:
  std::mt19937_64 gen_;
};

// Little-endian binary IO helpers.
inline void write_u8(std::ostream& os, std::uint8_t v) {
  os.put(static_cast<char>(v));
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void write_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline std::uint8_t read_u8(std::istream& is) {
  const int c = is.get();
  if (c == EOF) throw std::runtime_error("unexpected end of binary stream");
  return static_cast<std::uint8_t>(c);
}

inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(read_u8(is)) << (8 * i);
  return v;
}

inline double read_f64(std::istream& is) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(read_u8(is)) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace gridloc
