#pragma once

// Matrix Lie algebras and groups: hat/vee coordinates, the commutator bracket,
// structure constants, the Killing form, adjoint matrices and exp/log.

#include <Eigen/Dense>

#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lieneurons {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

// One nonzero structure constant: [E_i, E_j] has coefficient c on E_k.
struct StructureTerm {
  int i;
  int j;
  int k;
  double c;
};

/// Immutable descriptor of a real matrix Lie algebra in a fixed basis.
///
/// Structure constants and the Killing Gram matrix are derived from the basis
/// when the descriptor is built; nothing is tabulated by hand. Descriptors are
/// safe to share between threads.
class LieAlgebra {
 public:
  /// Builds a descriptor from n x n basis matrices.
  ///
  /// Throws ArgumentError when the matrices are not square and equal-sized, when
  /// their span is not closed under the commutator, and (unless
  /// `allow_degenerate`) when they are linearly dependent or the Killing form is
  /// degenerate. With `allow_degenerate` a dependent spanning set is accepted and
  /// coordinates are taken as minimum-norm least-squares solutions, so the
  /// resulting Gram matrix is singular and check_semisimple() reports false.
  static LieAlgebra from_basis(std::string name, std::vector<Matrix> basis,
                               bool allow_degenerate = false);

  const std::string& name() const { return name_; }
  int n() const { return n_; }
  int dim() const { return dim_; }
  const std::vector<Matrix>& basis() const { return basis_; }
  const Matrix& basis(int i) const { return basis_.at(static_cast<std::size_t>(i)); }

  double structure_constant(int i, int j, int k) const {
    return structure_[static_cast<std::size_t>((i * dim_ + j) * dim_ + k)];
  }
  std::span<const StructureTerm> structure_terms() const { return terms_; }
  const Matrix& killing_gram() const { return killing_gram_; }
  bool linearly_independent() const { return independent_; }

  /// Sum_i x_i E_i.
  Matrix hat(const Vector& x) const;
  /// Coordinates of X; throws SpanError when X is outside the span
  /// (residual >= 1e-8 * |X|).
  Vector vee(const Matrix& X) const;
  /// Frobenius norm of X minus its projection onto the span.
  double projection_residual(const Matrix& X) const;

  /// Matrix of ad_x in coordinates: ad_matrix(x) * y = vee([hat(x), hat(y)]).
  Matrix ad_matrix(const Vector& x) const;
  double killing_form(const Vector& x, const Vector& y) const;

 private:
  LieAlgebra() = default;

  std::string name_;
  int n_ = 0;
  int dim_ = 0;
  bool independent_ = true;
  std::vector<Matrix> basis_;
  Matrix frame_;       // n^2 x K, column i = vec(E_i)
  Matrix coordinate_;  // K x n^2 pseudo-inverse of frame_
  std::vector<double> structure_;
  std::vector<StructureTerm> terms_;
  Matrix killing_gram_;
};

/// The canonical sl(3) basis: E1..E6 = e12, e13, e21, e23, e31, e32 and
/// E7 = diag(1,-1,0), E8 = diag(0,1,-1).
const LieAlgebra& sl3();
/// Cross-product generators with [G1, G2] = G3 cyclically.
const LieAlgebra& so3();

/// Registry lookup by name ("sl3", "so3", or a registered user algebra).
/// Throws ArgumentError for unknown names.
std::shared_ptr<const LieAlgebra> find_algebra(std::string_view name);
/// Adds a user algebra to the registry, replacing any algebra of the same name
/// other than the built-ins.
std::shared_ptr<const LieAlgebra> register_algebra(LieAlgebra algebra);

/// Reads {"name": ..., "basis": [[[row], ...], ...]} with row-major matrices.
LieAlgebra load_algebra_json(const std::filesystem::path& path, bool allow_degenerate = false);

/// Commutator XY - YX.
Matrix bracket(const Matrix& X, const Matrix& Y);

/// An invertible n x n matrix. The adjoint matrix is computed on first use per
/// algebra and cached; the cache is not synchronized, so share a GroupElement
/// between threads only after its adjoint has been computed.
class GroupElement {
 public:
  explicit GroupElement(Matrix a);

  const Matrix& matrix() const { return matrix_; }
  const Matrix& inverse() const { return inverse_; }
  int n() const { return static_cast<int>(matrix_.rows()); }

  const Matrix& adjoint(const LieAlgebra& algebra) const;

  GroupElement operator*(const GroupElement& other) const;
  GroupElement inverted() const;

 private:
  Matrix matrix_;
  Matrix inverse_;
  mutable const LieAlgebra* cached_for_ = nullptr;
  mutable Matrix cached_adjoint_;
};

/// K x K matrix whose column i is vee(a E_i a^-1). Throws StructureError when a
/// conjugated basis element leaves the algebra.
Matrix adjoint_matrix(const GroupElement& a, const LieAlgebra& algebra);

/// Matrix exponential by scaling and squaring with a degree-13 Pade approximant.
GroupElement exp_map(const Matrix& X);
Matrix matrix_exp(const Matrix& X);

/// Principal matrix logarithm by inverse scaling and squaring. Throws
/// LogUndefinedError when an eigenvalue lies on the closed negative real axis.
Matrix log_map(const GroupElement& a);
Matrix matrix_log(const Matrix& a);

/// I.i.d. Normal(0, scale^2) coefficients. scale must be >= 0.
Vector sample_algebra(Rng& rng, double scale, const LieAlgebra& algebra);
/// exp(hat(sample_algebra(rng, scale))).
GroupElement sample_group(Rng& rng, double scale, const LieAlgebra& algebra);

struct SemisimpleReport {
  bool semisimple = false;
  double smallest_singular_value = 0.0;
  double largest_singular_value = 0.0;
};

/// Cartan's criterion on the Killing Gram matrix: semisimple iff
/// sigma_min > 1e-9 * sigma_max.
SemisimpleReport check_semisimple(const LieAlgebra& algebra);

}  // namespace lieneurons
