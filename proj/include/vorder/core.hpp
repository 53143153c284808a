#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace vorder {

using Complex = std::complex<double>;

using Vec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;
using Vec2 = Eigen::Vector2d;

inline constexpr double kPi = 3.14159265358979323846264338327950288;

/// Failure categories shared by every module. The CLI maps them onto exit codes.
enum class ErrorKind {
  Domain,         // argument outside the mathematical domain of an operation
  Branch,         // argument on (or too close to) a branch cut
  Precision,      // requested accuracy not reachable with the chosen method
  Unsupported,    // input combination the operation does not handle
  Genericity,     // no sufficiently generic direction found
  Separation,     // vertex is not an extreme point
  Geometry,       // inconsistent or insufficient geometric data
  Numerics,       // linear or nonlinear solver failure
  Contract,       // caller violated an interface precondition
  Configuration,  // invalid configuration values
  Mesh            // mesh generation failure
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline CVec to_complex(const Vec& v) { return v.cast<Complex>(); }

/// Bilinear (non-conjugating) dot product; the moment identities are holomorphic.
template <typename A, typename B>
auto bdot(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return (a.array() * b.array()).sum();
}

}  // namespace vorder
