#ifndef GTD_TENSOR_HPP
#define GTD_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gtd {

/// Base of every error the library raises.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operand extents disagree with what an operation requires.
struct ShapeError : Error {
  using Error::Error;
};

/// A value became NaN/Inf, or an operation hit a singular point.
struct NumericError : Error {
  using Error::Error;
};

/// Serialized data is malformed, truncated, or of an unsupported version.
struct FormatError : Error {
  using Error::Error;
};

/// Invalid configuration or argument values.
struct ConfigError : Error {
  using Error::Error;
};

using Dims = std::vector<std::size_t>;

inline std::string dims_to_string(const Dims& dims) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    out << (i ? "x" : "") << dims[i];
  }
  out << ']';
  return out.str();
}

inline std::size_t dims_volume(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

/// Dense row-major fp64 tensor. Extents are positive; data size equals their product.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Dims dims, double fill = 0.0) : dims_(std::move(dims)) {
    for (auto d : dims_) {
      if (d == 0) throw ShapeError("tensor extents must be positive, got " + dims_to_string(dims_));
    }
    data_.assign(dims_volume(dims_), fill);
  }

  Tensor(Dims dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
    for (auto d : dims_) {
      if (d == 0) throw ShapeError("tensor extents must be positive, got " + dims_to_string(dims_));
    }
    if (data_.size() != dims_volume(dims_)) {
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match extents " +
                       dims_to_string(dims_));
    }
  }

  static Tensor vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
  }

  const Dims& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }

  double& at(std::size_t a, std::size_t b, std::size_t c) {
    return data_[(a * dims_[1] + b) * dims_[2] + c];
  }
  double at(std::size_t a, std::size_t b, std::size_t c) const {
    return data_[(a * dims_[1] + b) * dims_[2] + c];
  }

  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * dims_[1], dims_[1]); }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * dims_[1], dims_[1]);
  }

  bool same_shape(const Tensor& other) const noexcept { return dims_ == other.dims_; }

  bool all_finite() const noexcept {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor transposed() const {
    if (rank() != 2) throw ShapeError("transpose needs a rank-2 tensor, got " + dims_to_string(dims_));
    Tensor out({dims_[1], dims_[0]});
    for (std::size_t r = 0; r < dims_[0]; ++r) {
      for (std::size_t c = 0; c < dims_[1]; ++c) out.at(c, r) = at(r, c);
    }
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Dims dims_;
  std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + dims_to_string(a.dims()) + " vs " +
                     dims_to_string(b.dims()));
  }
}

inline void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite value");
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace gtd

#endif  // GTD_TENSOR_HPP
