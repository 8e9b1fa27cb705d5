#pragma once

// Independent references used by the tests. They work on plain 3x3 arrays
// and never call into the library's algebra code.

#include "lieneurons/lie_algebra.hpp"
#include "lieneurons/tensor.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace testref {

using M3 = std::array<std::array<double, 3>, 3>;

inline M3 zero3() { return M3{}; }

inline M3 mul(const M3& a, const M3& b) {
  M3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline M3 add(const M3& a, const M3& b, double s = 1.0) {
  M3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) c[i][j] = a[i][j] + s * b[i][j];
  return c;
}

inline M3 comm(const M3& a, const M3& b) { return add(mul(a, b), mul(b, a), -1.0); }

inline double trace(const M3& a) { return a[0][0] + a[1][1] + a[2][2]; }

inline double det(const M3& a) {
  return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
         a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
}

// sl(3) written out by hand: e12, e13, e21, e23, e31, e32, diag(1,-1,0), diag(0,1,-1).
inline M3 sl3_hat(const double* x) {
  M3 m{};
  m[0][1] = x[0];
  m[0][2] = x[1];
  m[1][0] = x[2];
  m[1][2] = x[3];
  m[2][0] = x[4];
  m[2][1] = x[5];
  m[0][0] = x[6];
  m[1][1] = -x[6] + x[7];
  m[2][2] = -x[7];
  return m;
}

inline std::array<double, 8> sl3_vee(const M3& m) {
  return {m[0][1], m[0][2], m[1][0], m[1][2], m[2][0], m[2][1], m[0][0], -m[2][2]};
}

inline M3 sl3_hat(const Eigen::VectorXd& x) { return sl3_hat(x.data()); }

inline M3 from_eigen(const Eigen::MatrixXd& a) {
  M3 m{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[i][j] = a(i, j);
  return m;
}

inline M3 inverse(const M3& a) {
  const double d = det(a);
  M3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const int i1 = (j + 1) % 3, i2 = (j + 2) % 3, j1 = (i + 1) % 3, j2 = (i + 2) % 3;
      r[i][j] = (a[i1][j1] * a[i2][j2] - a[i1][j2] * a[i2][j1]) / d;
    }
  return r;
}

// sin(tr XY) + cos(tr YY) - tr(YY)^3 / 2 + det(XY) + exp(tr XX)
inline double invariant_target(const double* x, const double* y) {
  const M3 X = sl3_hat(x), Y = sl3_hat(y);
  const double tyy = trace(mul(Y, Y));
  return std::sin(trace(mul(X, Y))) + std::cos(tyy) - tyy * tyy * tyy / 2.0 + det(mul(X, Y)) +
         std::exp(trace(mul(X, X)));
}

// [[X, Y], Y] + [Y, X]
inline std::array<double, 8> equivariant_target(const double* x, const double* y) {
  const M3 X = sl3_hat(x), Y = sl3_hat(y);
  return sl3_vee(add(comm(comm(X, Y), Y), comm(Y, X)));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Copy of a tensor's values; data() is not available on temporaries.
inline std::vector<double> values(const lieneurons::Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline lieneurons::Tensor random_tensor(lieneurons::Shape shape, lieneurons::Rng& rng, bool parameter = false) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(lieneurons::shape_numel(shape));
  for (double& x : v) x = normal(rng);
  return parameter ? lieneurons::Tensor::parameter(std::move(shape), std::move(v))
                   : lieneurons::Tensor::from(std::move(shape), std::move(v));
}

}  // namespace testref
