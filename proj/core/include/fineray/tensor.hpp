#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fineray {

/// Error type for all recoverable failures in the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when optimization produces non-finite values (NaN/inf losses or
/// gradients); callers map this to a distinct process exit code.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

namespace detail {
inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}
}  // namespace detail

/// Dense row-major array of rank 1 or 2. Rank-1 tensors are plain vectors;
/// a scalar is a rank-1 tensor of size 1.
template <class Real>
struct Tensor {
  using MatMap = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatMap =
      Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using VecMap = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>>;
  using ConstVecMap = Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>>;

  std::vector<int> shape;
  std::vector<Real> data;

  Tensor() = default;
  Tensor(std::vector<int> shape_, std::vector<Real> data_)
      : shape(std::move(shape_)), data(std::move(data_)) {
    if (numel_of(shape) != static_cast<int64_t>(data.size()))
      throw Error("Tensor: shape " + detail::shape_str(shape) + " does not match data length " +
                  std::to_string(data.size()));
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw Error("Tensor: negative extent in shape " + detail::shape_str(s));
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) {
    Tensor t;
    int64_t n = numel_of(s);
    t.shape = std::move(s);
    t.data.assign(static_cast<size_t>(n), Real(0));
    return t;
  }
  static Tensor full(std::vector<int> s, Real v) {
    Tensor t = zeros(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(Real v) { return Tensor({1}, {v}); }
  static Tensor vec1d(std::vector<Real> v) {
    int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v));
  }

  int rank() const { return static_cast<int>(shape.size()); }
  int64_t size() const { return static_cast<int64_t>(data.size()); }
  bool is_scalar() const { return size() == 1; }

  /// Rows/cols with rank-1 treated as a single row.
  int rows() const { return rank() == 2 ? shape[0] : 1; }
  int cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 0); }

  Real& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  Real operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }
  Real& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  Real at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

  MatMap mat() { return MatMap(data.data(), rows(), cols()); }
  ConstMatMap mat() const { return ConstMatMap(data.data(), rows(), cols()); }
  VecMap vec() { return VecMap(data.data(), size()); }
  ConstVecMap vec() const { return ConstVecMap(data.data(), size()); }

  bool all_finite() const {
    for (Real v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  Tensor<double> to_double() const {
    Tensor<double> t;
    t.shape = shape;
    t.data.assign(data.begin(), data.end());
    return t;
  }
  Tensor<float> to_float() const {
    Tensor<float> t;
    t.shape = shape;
    t.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<float>(data[i]);
    return t;
  }
};

}  // namespace fineray
