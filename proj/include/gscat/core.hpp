#pragma once

// Shared vocabulary for the geometric scattering library: error types,
// Eigen aliases, the Signal value type and a small content hash.

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gscat {

using Real = double;
using Complex = std::complex<double>;
using Vec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;

inline constexpr double kPi = 3.14159265358979323846;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A build or experiment configuration that violates a precondition
/// (aliasing, insufficient quadrature, bad filter generator, path cap ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Objects bound to different manifolds / spectra / banks were combined.
class MismatchError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver did not reach its tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the operation's domain (eigenvalue not in the spectrum,
/// path index out of range, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Requested quantity is not defined for this manifold kind (e.g. A3 on meshes).
class NotComputable : public Error {
 public:
  using Error::Error;
};

// 64-bit FNV-1a. Used for manifold identity and cheap fingerprints.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  template <typename Derived>
  void update(const Eigen::DenseBase<Derived>& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto v = m(i, j);
        update(&v, sizeof(v));
      }
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

/// A complex-valued function sampled on the points of one manifold.
struct Signal {
  CVec values;
  std::uint64_t manifold_id = 0;

  Signal() = default;
  Signal(CVec v, std::uint64_t id) : values(std::move(v)), manifold_id(id) {}

  Eigen::Index size() const { return values.size(); }
  bool is_finite() const { return values.allFinite(); }
};

inline void require_same_manifold(const Signal& a, const Signal& b) {
  if (a.manifold_id != b.manifold_id || a.size() != b.size())
    throw MismatchError("signals live on different manifolds");
}

inline Signal operator-(const Signal& a, const Signal& b) {
  require_same_manifold(a, b);
  return {a.values - b.values, a.manifold_id};
}

inline Signal operator+(const Signal& a, const Signal& b) {
  require_same_manifold(a, b);
  return {a.values + b.values, a.manifold_id};
}

inline Signal operator*(Complex s, const Signal& a) { return {s * a.values, a.manifold_id}; }

/// Pointwise modulus M f(x) = |f(x)|.
inline Signal modulus(const Signal& f) {
  CVec out(f.size());
  for (Eigen::Index i = 0; i < f.size(); ++i) out[i] = std::abs(f.values[i]);
  return {std::move(out), f.manifold_id};
}

}  // namespace gscat
