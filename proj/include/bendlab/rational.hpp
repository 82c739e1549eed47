#pragma once

#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace bendlab {

/// Exact rational number used for all musical time arithmetic (durations and
/// offsets in quarter lengths). Always stored in lowest terms with a positive
/// denominator, so defaulted equality is structural equality.
class Rational {
 public:
  constexpr Rational() : num_(0), den_(1) {}
  constexpr Rational(std::int64_t n) : num_(n), den_(1) {}
  Rational(std::int64_t n, std::int64_t d) : num_(n), den_(d) { normalize(); }

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }

  Rational operator+(const Rational& o) const {
    std::int64_t g = std::gcd(den_, o.den_);
    std::int64_t scale = o.den_ / g;
    return Rational(num_ * scale + o.num_ * (den_ / g), den_ * scale);
  }
  Rational operator-(const Rational& o) const { return *this + Rational(-o.num_, o.den_); }
  Rational operator*(const Rational& o) const {
    std::int64_t g1 = std::gcd(std::abs(num_), o.den_);
    std::int64_t g2 = std::gcd(std::abs(o.num_), den_);
    return Rational((num_ / g1) * (o.num_ / g2), (den_ / g2) * (o.den_ / g1));
  }
  Rational operator/(const Rational& o) const {
    if (o.num_ == 0) throw std::domain_error("rational division by zero");
    return *this * Rational(o.den_, o.num_);
  }
  Rational operator-() const { return Rational(-num_, den_); }

  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator-=(const Rational& o) { return *this = *this - o; }
  Rational& operator*=(const Rational& o) { return *this = *this * o; }
  Rational& operator/=(const Rational& o) { return *this = *this / o; }

  bool operator==(const Rational& o) const = default;

  bool operator<(const Rational& o) const {
    return (__int128)num_ * o.den_ < (__int128)o.num_ * den_;
  }
  bool operator>(const Rational& o) const { return o < *this; }
  bool operator<=(const Rational& o) const { return !(o < *this); }
  bool operator>=(const Rational& o) const { return !(*this < o); }

  /// True when this value is an integer multiple of `grid`.
  bool is_multiple_of(const Rational& grid) const {
    return (*this / grid).den_ == 1;
  }

  bool is_integer() const { return den_ == 1; }
  bool is_zero() const { return num_ == 0; }
  bool is_negative() const { return num_ < 0; }

  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  /// "p/q" in lowest terms, or just "p" when the denominator is 1.
  std::string str() const {
    if (den_ == 1) return std::to_string(num_);
    return std::to_string(num_) + "/" + std::to_string(den_);
  }

  /// Parses "p" or "p/q". Throws std::invalid_argument on malformed input.
  static Rational parse(const std::string& text) {
    std::size_t slash = text.find('/');
    try {
      if (slash == std::string::npos) {
        return Rational(parse_int(text));
      }
      std::int64_t p = parse_int(text.substr(0, slash));
      std::int64_t q = parse_int(text.substr(slash + 1));
      if (q == 0) throw std::invalid_argument("zero denominator");
      return Rational(p, q);
    } catch (const std::exception&) {
      throw std::invalid_argument("not a rational: \"" + text + "\"");
    }
  }

 private:
  static std::int64_t parse_int(const std::string& s) {
    if (s.empty()) throw std::invalid_argument("empty");
    std::size_t pos = 0;
    std::int64_t v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  }

  void normalize() {
    if (den_ == 0) throw std::domain_error("rational with zero denominator");
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    std::int64_t g = std::gcd(std::abs(num_), den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }

  std::int64_t num_;
  std::int64_t den_;
};

/// Quarter-length time: durations and offsets measured in quarter notes.
using QL = Rational;

}  // namespace bendlab
