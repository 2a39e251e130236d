#ifndef FEDMD_COMMON_HPP
#define FEDMD_COMMON_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedmd {

using Vec = std::vector<double>;

/// Error type thrown by every operation in this library.
/// Messages start with a short stable identifier (e.g. "MalformedRow: ...").
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

/// Dense row-major matrix of doubles. Rows are samples unless noted.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }

  Vec row_vec(std::size_t i) const {
    return Vec(row(i), row(i) + cols);
  }

  void set_row(std::size_t i, const Vec& v) {
    for (std::size_t j = 0; j < cols; ++j) data[i * cols + j] = v[j];
  }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  bool operator==(const Matrix& o) const {
    return rows == o.rows && cols == o.cols && data == o.data;
  }
};

inline double mean_of(const Vec& v) {
  if (v.empty()) fail("EmptyInput: mean of empty vector");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Population standard deviation (divides by n).
inline double population_std(const Vec& v) {
  double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

inline double median_of(Vec v) {
  if (v.empty()) fail("EmptyInput: median of empty vector");
  std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

/// Ceiling division for layer sizing.
inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

/// FNV-1a 64-bit hash over the raw bytes of a double vector.
inline std::uint64_t fnv1a_hash(const Vec& values) {
  std::uint64_t h = 1469598103934665603ull;
  for (double value : values) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(value));
    std::memcpy(&bits, &value, sizeof(bits));
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (bits >> (8 * byte)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace fedmd

#endif  // FEDMD_COMMON_HPP
