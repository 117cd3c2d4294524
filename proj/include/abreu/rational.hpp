#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace abreu {

/// Exact rational with 64-bit numerator/denominator, always reduced and with a
/// positive denominator. Intermediate products go through 128-bit integers;
/// overflow of the reduced result throws.
class Rational {
public:
    constexpr Rational() = default;
    Rational(std::int64_t num, std::int64_t den = 1);

    std::int64_t num() const { return num_; }
    std::int64_t den() const { return den_; }

    double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
    int sign() const { return num_ > 0 ? 1 : (num_ < 0 ? -1 : 0); }

    /// Accepts "3", "-7/2", "0.125", "-1.5e-2" (decimals are converted exactly).
    static Rational parse(std::string_view text);

    std::string str() const;

    friend Rational operator+(const Rational& a, const Rational& b);
    friend Rational operator-(const Rational& a, const Rational& b);
    friend Rational operator*(const Rational& a, const Rational& b);
    friend Rational operator/(const Rational& a, const Rational& b);
    Rational operator-() const { return Rational(-num_, den_); }

    friend bool operator==(const Rational& a, const Rational& b) = default;
    friend std::strong_ordering operator<=>(const Rational& a, const Rational& b);

private:
    static Rational from_wide(__int128 num, __int128 den);

    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

} // namespace abreu
