#include "lieneurons/lie_algebra.hpp"

#include "lieneurons/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <mutex>

namespace lieneurons {
namespace {

Eigen::Map<const Vector> flatten(const Matrix& m) { return {m.data(), m.size()}; }

double norm1(const Matrix& m) { return m.cwiseAbs().colwise().sum().maxCoeff(); }

Matrix elementary(int n, int row, int col) {
  Matrix e = Matrix::Zero(n, n);
  e(row, col) = 1.0;
  return e;
}

LieAlgebra build_sl3() {
  std::vector<Matrix> basis;
  const int offdiag[6][2] = {{0, 1}, {0, 2}, {1, 0}, {1, 2}, {2, 0}, {2, 1}};
  for (const auto& rc : offdiag) basis.push_back(elementary(3, rc[0], rc[1]));
  Matrix h1 = Matrix::Zero(3, 3);
  h1(0, 0) = 1.0;
  h1(1, 1) = -1.0;
  Matrix h2 = Matrix::Zero(3, 3);
  h2(1, 1) = 1.0;
  h2(2, 2) = -1.0;
  basis.push_back(h1);
  basis.push_back(h2);
  return LieAlgebra::from_basis("sl3", std::move(basis));
}

LieAlgebra build_so3() {
  std::vector<Matrix> basis(3, Matrix::Zero(3, 3));
  basis[0](2, 1) = 1.0;
  basis[0](1, 2) = -1.0;
  basis[1](0, 2) = 1.0;
  basis[1](2, 0) = -1.0;
  basis[2](1, 0) = 1.0;
  basis[2](0, 1) = -1.0;
  return LieAlgebra::from_basis("so3", std::move(basis));
}

struct Registry {
  std::mutex mutex;
  std::map<std::string, std::shared_ptr<const LieAlgebra>, std::less<>> algebras;
};

Registry& registry() {
  static Registry r;
  return r;
}

std::shared_ptr<const LieAlgebra> builtin(std::string_view name) {
  static const auto sl = std::make_shared<const LieAlgebra>(build_sl3());
  static const auto so = std::make_shared<const LieAlgebra>(build_so3());
  if (name == "sl3") return sl;
  if (name == "so3") return so;
  return nullptr;
}

// Principal square root by the Denman-Beavers iteration.
Matrix principal_sqrt(const Matrix& a) {
  Matrix y = a;
  Matrix z = Matrix::Identity(a.rows(), a.cols());
  for (int iter = 0; iter < 100; ++iter) {
    const Matrix y_inv = y.inverse();
    const Matrix z_inv = z.inverse();
    Matrix y_next = 0.5 * (y + z_inv);
    z = 0.5 * (z + y_inv);
    const double change = norm1(y_next - y);
    y = std::move(y_next);
    if (change <= 1e-15 * norm1(y)) break;
  }
  return y;
}

}  // namespace

LieAlgebra LieAlgebra::from_basis(std::string name, std::vector<Matrix> basis,
                                  bool allow_degenerate) {
  if (basis.empty()) throw ArgumentError("algebra '" + name + "': empty basis");
  const Eigen::Index n = basis.front().rows();
  for (const auto& e : basis) {
    if (e.rows() != n || e.cols() != n || n == 0) {
      throw ArgumentError("algebra '" + name + "': basis matrices must be square and equal-sized");
    }
  }

  LieAlgebra alg;
  alg.name_ = std::move(name);
  alg.n_ = static_cast<int>(n);
  alg.dim_ = static_cast<int>(basis.size());
  alg.basis_ = std::move(basis);
  const int K = alg.dim_;

  alg.frame_.resize(n * n, K);
  for (int i = 0; i < K; ++i) alg.frame_.col(i) = flatten(alg.basis_[i]);

  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(alg.frame_);
  cod.setThreshold(1e-10);
  alg.independent_ = cod.rank() == K;
  if (!alg.independent_ && !allow_degenerate) {
    throw ArgumentError("algebra '" + alg.name_ + "': basis matrices are linearly dependent (rank " +
                        std::to_string(cod.rank()) + " < " + std::to_string(K) + ")");
  }
  alg.coordinate_ = cod.pseudoInverse();

  alg.structure_.assign(static_cast<std::size_t>(K) * K * K, 0.0);
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) {
      const Matrix c = bracket(alg.basis_[i], alg.basis_[j]);
      const double residual = alg.projection_residual(c);
      if (residual > 1e-8 * std::max(1.0, c.norm())) {
        throw ArgumentError("algebra '" + alg.name_ + "': span is not closed under the bracket "
                            "(residual " + std::to_string(residual) + ")");
      }
      const Vector coeffs = alg.coordinate_ * flatten(c);
      for (int k = 0; k < K; ++k) {
        double value = coeffs[k];
        if (std::abs(value) < 1e-13) value = 0.0;
        alg.structure_[static_cast<std::size_t>((i * K + j) * K + k)] = value;
        if (value != 0.0) alg.terms_.push_back({i, j, k, value});
      }
    }
  }

  std::vector<Matrix> ad(K);
  for (int i = 0; i < K; ++i) ad[i] = alg.ad_matrix(Vector::Unit(K, i));
  alg.killing_gram_.resize(K, K);
  for (int i = 0; i < K; ++i) {
    for (int j = i; j < K; ++j) {
      const double b = (ad[i] * ad[j]).trace();
      alg.killing_gram_(i, j) = b;
      alg.killing_gram_(j, i) = b;
    }
  }

  if (!allow_degenerate) {
    const auto report = check_semisimple(alg);
    if (!report.semisimple) {
      throw ArgumentError("algebra '" + alg.name_ + "': Killing form is degenerate (sigma_min " +
                          std::to_string(report.smallest_singular_value) + ")");
    }
  }
  return alg;
}

Matrix LieAlgebra::hat(const Vector& x) const {
  if (x.size() != dim_) {
    throw ArgumentError("hat: expected " + std::to_string(dim_) + " coefficients, got " +
                        std::to_string(x.size()));
  }
  Matrix out = Matrix::Zero(n_, n_);
  for (int i = 0; i < dim_; ++i) out += x[i] * basis_[i];
  return out;
}

double LieAlgebra::projection_residual(const Matrix& X) const {
  if (X.rows() != n_ || X.cols() != n_) {
    throw ArgumentError("vee: expected a " + std::to_string(n_) + "x" + std::to_string(n_) + " matrix");
  }
  const Vector coeffs = coordinate_ * flatten(X);
  return (flatten(X) - frame_ * coeffs).norm();
}

Vector LieAlgebra::vee(const Matrix& X) const {
  const double residual = projection_residual(X);
  if (residual > 1e-8 * X.norm()) {
    throw SpanError("vee: matrix is outside the span of '" + name_ + "' (residual " +
                        std::to_string(residual) + ")",
                    residual);
  }
  return coordinate_ * flatten(X);
}

Matrix LieAlgebra::ad_matrix(const Vector& x) const {
  if (x.size() != dim_) throw ArgumentError("ad_matrix: coefficient length mismatch");
  Matrix out = Matrix::Zero(dim_, dim_);
  for (const auto& t : terms_) out(t.k, t.j) += x[t.i] * t.c;
  return out;
}

double LieAlgebra::killing_form(const Vector& x, const Vector& y) const {
  if (x.size() != dim_ || y.size() != dim_) throw ArgumentError("killing_form: coefficient length mismatch");
  return x.dot(killing_gram_ * y);
}

const LieAlgebra& sl3() { return *builtin("sl3"); }
const LieAlgebra& so3() { return *builtin("so3"); }

std::shared_ptr<const LieAlgebra> find_algebra(std::string_view name) {
  if (auto b = builtin(name)) return b;
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  if (auto it = r.algebras.find(name); it != r.algebras.end()) return it->second;
  throw ArgumentError("unknown algebra '" + std::string(name) + "'");
}

std::shared_ptr<const LieAlgebra> register_algebra(LieAlgebra algebra) {
  if (builtin(algebra.name())) {
    throw ArgumentError("cannot replace built-in algebra '" + algebra.name() + "'");
  }
  auto ptr = std::make_shared<const LieAlgebra>(std::move(algebra));
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  r.algebras[ptr->name()] = ptr;
  return ptr;
}

LieAlgebra load_algebra_json(const std::filesystem::path& path, bool allow_degenerate) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open algebra file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("algebra file " + path.string() + ": " + e.what());
  }
  if (!doc.contains("name") || !doc.contains("basis") || !doc["basis"].is_array()) {
    throw FormatError("algebra file " + path.string() + ": expected keys 'name' and 'basis'");
  }
  std::vector<Matrix> basis;
  for (const auto& m : doc["basis"]) {
    const auto rows = static_cast<Eigen::Index>(m.size());
    Matrix e(rows, rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (m[r].size() != static_cast<std::size_t>(rows)) {
        throw FormatError("algebra file " + path.string() + ": basis matrices must be square");
      }
      for (Eigen::Index c = 0; c < rows; ++c) e(r, c) = m[r][c].get<double>();
    }
    basis.push_back(std::move(e));
  }
  return LieAlgebra::from_basis(doc["name"].get<std::string>(), std::move(basis), allow_degenerate);
}

Matrix bracket(const Matrix& X, const Matrix& Y) {
  if (X.rows() != Y.rows() || X.cols() != Y.cols() || X.rows() != X.cols()) {
    throw ArgumentError("bracket: operands must be square matrices of the same size");
  }
  return X * Y - Y * X;
}

GroupElement::GroupElement(Matrix a) : matrix_(std::move(a)) {
  if (matrix_.rows() != matrix_.cols() || matrix_.rows() == 0) {
    throw ArgumentError("group element must be a non-empty square matrix");
  }
  Eigen::FullPivLU<Matrix> lu(matrix_);
  if (!lu.isInvertible()) throw ArgumentError("group element must be invertible");
  inverse_ = lu.inverse();
}

const Matrix& GroupElement::adjoint(const LieAlgebra& algebra) const {
  if (cached_for_ != &algebra) {
    cached_adjoint_ = adjoint_matrix(*this, algebra);
    cached_for_ = &algebra;
  }
  return cached_adjoint_;
}

GroupElement GroupElement::operator*(const GroupElement& other) const {
  return GroupElement(matrix_ * other.matrix_);
}

GroupElement GroupElement::inverted() const { return GroupElement(inverse_); }

Matrix adjoint_matrix(const GroupElement& a, const LieAlgebra& algebra) {
  if (a.n() != algebra.n()) throw ArgumentError("adjoint_matrix: group element size mismatch");
  const int K = algebra.dim();
  Matrix out(K, K);
  for (int i = 0; i < K; ++i) {
    const Matrix conj = a.matrix() * algebra.basis(i) * a.inverse();
    const double residual = algebra.projection_residual(conj);
    if (residual > 1e-8 * std::max(1.0, conj.norm())) {
      throw StructureError("adjoint_matrix: conjugated basis element " + std::to_string(i) +
                           " leaves '" + algebra.name() + "' (residual " + std::to_string(residual) +
                           "); the group element is not in this algebra's group");
    }
    out.col(i) = algebra.vee(conj);
  }
  return out;
}

Matrix matrix_exp(const Matrix& X) {
  if (X.rows() != X.cols()) throw ArgumentError("matrix_exp: square matrix required");
  if (!X.allFinite()) throw ArgumentError("matrix_exp: non-finite entries");
  static constexpr double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                                 1187353796428800.0,  129060195264000.0,   10559470521600.0,
                                 670442572800.0,      33522128640.0,       1323241920.0,
                                 40840800.0,          960960.0,            16380.0,
                                 182.0,               1.0};
  constexpr double theta13 = 5.371920351148152;

  const Eigen::Index n = X.rows();
  const double norm = norm1(X);
  int squarings = 0;
  if (norm > theta13) squarings = static_cast<int>(std::ceil(std::log2(norm / theta13)));
  const Matrix A = X / std::ldexp(1.0, squarings);

  const Matrix I = Matrix::Identity(n, n);
  const Matrix A2 = A * A;
  const Matrix A4 = A2 * A2;
  const Matrix A6 = A4 * A2;
  const Matrix U = A * (A6 * (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 +
                        b[3] * A2 + b[1] * I);
  const Matrix V = A6 * (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 +
                   b[2] * A2 + b[0] * I;
  Matrix R = (V - U).partialPivLu().solve(V + U);
  for (int s = 0; s < squarings; ++s) R = R * R;
  return R;
}

GroupElement exp_map(const Matrix& X) { return GroupElement(matrix_exp(X)); }

Matrix matrix_log(const Matrix& a) {
  if (a.rows() != a.cols()) throw ArgumentError("matrix_log: square matrix required");
  const Eigen::Index n = a.rows();
  Eigen::EigenSolver<Matrix> eig(a, false);
  for (const auto& lambda : eig.eigenvalues()) {
    const double scale = std::max(1.0, std::abs(lambda));
    if (std::abs(lambda.imag()) <= 1e-12 * scale && lambda.real() <= 1e-14 * scale) {
      throw LogUndefinedError("matrix_log: eigenvalue (" + std::to_string(lambda.real()) + ", " +
                              std::to_string(lambda.imag()) +
                              ") on the closed negative real axis; principal log undefined");
    }
  }

  const Matrix I = Matrix::Identity(n, n);
  Matrix A = a;
  int roots = 0;
  while (norm1(A - I) > 0.25 && roots < 64) {
    A = principal_sqrt(A);
    ++roots;
  }

  // log(A) = 2 atanh(Z) with Z = (A - I)(A + I)^-1.
  const Matrix Z = (A + I).transpose().partialPivLu().solve((A - I).transpose()).transpose();
  const Matrix Z2 = Z * Z;
  Matrix power = Z;
  Matrix series = Z;
  for (int k = 1; k < 40; ++k) {
    power = power * Z2;
    const Matrix term = power / static_cast<double>(2 * k + 1);
    series += term;
    if (norm1(term) <= 1e-18 * std::max(1.0, norm1(series))) break;
  }
  return std::ldexp(2.0, roots) * series;
}

Matrix log_map(const GroupElement& a) { return matrix_log(a.matrix()); }

Vector sample_algebra(Rng& rng, double scale, const LieAlgebra& algebra) {
  if (!(scale >= 0.0)) throw ArgumentError("sample_algebra: scale must be non-negative");
  Vector x = Vector::Zero(algebra.dim());
  if (scale == 0.0) return x;
  std::normal_distribution<double> normal(0.0, scale);
  for (int i = 0; i < algebra.dim(); ++i) x[i] = normal(rng);
  return x;
}

GroupElement sample_group(Rng& rng, double scale, const LieAlgebra& algebra) {
  return exp_map(algebra.hat(sample_algebra(rng, scale, algebra)));
}

SemisimpleReport check_semisimple(const LieAlgebra& algebra) {
  Eigen::JacobiSVD<Matrix> svd(algebra.killing_gram());
  const auto& sv = svd.singularValues();
  SemisimpleReport report;
  report.largest_singular_value = sv.size() > 0 ? sv.maxCoeff() : 0.0;
  report.smallest_singular_value = sv.size() > 0 ? sv.minCoeff() : 0.0;
  report.semisimple = report.largest_singular_value > 0.0 &&
                      report.smallest_singular_value > 1e-9 * report.largest_singular_value;
  return report;
}

}  // namespace lieneurons
