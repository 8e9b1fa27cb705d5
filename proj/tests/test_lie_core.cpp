#include "support.hpp"

#include "lieneurons/errors.hpp"
#include "lieneurons/lie_algebra.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>

using namespace lieneurons;

namespace {

Vector unit(int K, int i) {
  Vector v = Vector::Zero(K);
  v(i) = 1.0;
  return v;
}

Matrix elementary(int i, int j) {
  Matrix m = Matrix::Zero(3, 3);
  m(i, j) = 1.0;
  return m;
}

Matrix rotation_from(const Vector& axis_angle) { return matrix_exp(so3().hat(axis_angle)); }

}  // namespace

TEST(Hat, ZeroVectorGivesZeroMatrix) {
  EXPECT_EQ(sl3().hat(Vector::Zero(8)).norm(), 0.0);
  EXPECT_EQ(so3().hat(Vector::Zero(3)).norm(), 0.0);
}

TEST(Hat, UnitVectorGivesBasisMatrix) {
  EXPECT_EQ((sl3().hat(unit(8, 0)) - elementary(0, 1)).norm(), 0.0);
}

TEST(Hat, DiagonalGeneratorsSum) {
  Vector x = Vector::Zero(8);
  x(6) = 1.0;
  x(7) = 1.0;
  Matrix expect = Matrix::Zero(3, 3);
  expect(0, 0) = 1.0;
  expect(2, 2) = -1.0;
  EXPECT_EQ((sl3().hat(x) - expect).norm(), 0.0);
}

TEST(Hat, WrongLengthIsRejected) { EXPECT_THROW(sl3().hat(Vector::Zero(3)), ArgumentError); }

TEST(Hat, MatchesHandWrittenBasis) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const Vector x = sample_algebra(rng, 1.0, sl3());
    const auto ref = testref::sl3_hat(x);
    const Matrix X = sl3().hat(x);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) EXPECT_NEAR(X(i, j), ref[i][j], 1e-15);
  }
}

TEST(Vee, ZeroAndDiagonal) {
  EXPECT_EQ(sl3().vee(Matrix::Zero(3, 3)).norm(), 0.0);
  Matrix d = Matrix::Zero(3, 3);
  d(0, 0) = 1.0;
  d(1, 1) = -1.0;
  EXPECT_LT((sl3().vee(d) - unit(8, 6)).norm(), 1e-15);
}

TEST(Vee, RoundTrip) {
  Rng rng(1);
  for (const LieAlgebra* g : {&sl3(), &so3()}) {
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const Vector x = sample_algebra(rng, 1.0, *g);
      worst = std::max(worst, (g->vee(g->hat(x)) - x).cwiseAbs().maxCoeff());
    }
    EXPECT_LT(worst, 1e-12) << g->name();
  }
}

TEST(Vee, OutsideSpanReportsResidual) {
  const Matrix I = Matrix::Identity(3, 3);  // not traceless
  try {
    sl3().vee(I);
    FAIL() << "expected SpanError";
  } catch (const SpanError& e) {
    EXPECT_NEAR(e.residual(), std::sqrt(3.0), 1e-12);
  }
}

TEST(Bracket, SelfBracketVanishes) {
  Rng rng(2);
  const Matrix X = sl3().hat(sample_algebra(rng, 1.0, sl3()));
  EXPECT_EQ(bracket(X, X).norm(), 0.0);
}

TEST(Bracket, DiagonalWithRaisingOperator) {
  const Matrix b = bracket(sl3().basis(6), sl3().basis(0));
  EXPECT_EQ((b - 2.0 * elementary(0, 1)).norm(), 0.0);
}

TEST(Bracket, ShapeMismatch) { EXPECT_THROW(bracket(Matrix::Zero(3, 3), Matrix::Zero(2, 2)), ArgumentError); }

TEST(Bracket, JacobiIdentity) {
  Rng rng(4);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Matrix X = sl3().hat(sample_algebra(rng, 1.0, sl3()));
    const Matrix Y = sl3().hat(sample_algebra(rng, 1.0, sl3()));
    const Matrix Z = sl3().hat(sample_algebra(rng, 1.0, sl3()));
    const Matrix j = bracket(X, bracket(Y, Z)) + bracket(Y, bracket(Z, X)) + bracket(Z, bracket(X, Y));
    worst = std::max(worst, j.cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(AdMatrix, ZeroAndConsistency) {
  EXPECT_EQ(sl3().ad_matrix(Vector::Zero(8)).norm(), 0.0);
  Rng rng(5);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Vector x = sample_algebra(rng, 1.0, sl3()), y = sample_algebra(rng, 1.0, sl3());
    const auto ref = testref::sl3_vee(testref::comm(testref::sl3_hat(x), testref::sl3_hat(y)));
    const Vector got = sl3().ad_matrix(x) * y;
    for (int k = 0; k < 8; ++k) worst = std::max(worst, std::abs(got(k) - ref[k]));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(AdMatrix, So3EqualsHat) {
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    const Vector x = sample_algebra(rng, 1.0, so3());
    EXPECT_LT((so3().ad_matrix(x) - so3().hat(x)).norm(), 1e-14);
  }
}

TEST(Killing, Sl3BasisValues) {
  EXPECT_EQ(sl3().killing_form(unit(8, 0), unit(8, 0)), 0.0);
  EXPECT_NEAR(sl3().killing_form(unit(8, 0), unit(8, 2)), 6.0, 1e-12);
  EXPECT_EQ(sl3().killing_form(unit(8, 3), Vector::Zero(8)), 0.0);
}

TEST(Killing, GramMatchesSixTraceOracle) {
  const Matrix& G = sl3().killing_gram();
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      const auto Ei = testref::sl3_hat(unit(8, i)), Ej = testref::sl3_hat(unit(8, j));
      EXPECT_NEAR(G(i, j), 6.0 * testref::trace(testref::mul(Ei, Ej)), 1e-10) << i << "," << j;
    }
}

TEST(Killing, So3GramIsMinusTwoIdentity) {
  EXPECT_LT((so3().killing_gram() + 2.0 * Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Killing, InvariantUnderAdjoint) {
  Rng rng(7);
  for (const LieAlgebra* g : {&sl3(), &so3()}) {
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const GroupElement a = sample_group(rng, 0.5, *g);
      const Vector x = sample_algebra(rng, 1.0, *g), y = sample_algebra(rng, 1.0, *g);
      const Matrix& A = a.adjoint(*g);
      const double b = g->killing_form(x, y);
      worst = std::max(worst, std::abs(g->killing_form(A * x, A * y) - b) / (1.0 + std::abs(b)));
    }
    EXPECT_LT(worst, 1e-8) << g->name();
  }
}

TEST(Adjoint, IdentityAndRotation) {
  EXPECT_LT((adjoint_matrix(GroupElement(Matrix::Identity(3, 3)), sl3()) - Matrix::Identity(8, 8)).norm(), 1e-15);
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    const Matrix R = rotation_from(sample_algebra(rng, 1.0, so3()));
    EXPECT_LT((adjoint_matrix(GroupElement(R), so3()) - R).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Adjoint, ColumnsAreConjugatedBasis) {
  Rng rng(9);
  const GroupElement a = sample_group(rng, 0.5, sl3());
  const auto am = testref::from_eigen(a.matrix()), ai = testref::inverse(am);
  const Matrix& A = a.adjoint(sl3());
  for (int i = 0; i < 8; ++i) {
    const auto col = testref::sl3_vee(testref::mul(testref::mul(am, testref::sl3_hat(unit(8, i))), ai));
    for (int k = 0; k < 8; ++k) EXPECT_NEAR(A(k, i), col[k], 1e-12);
  }
}

TEST(Adjoint, Homomorphism) {
  Rng rng(10);
  for (int t = 0; t < 100; ++t) {
    const GroupElement a = sample_group(rng, 0.5, sl3()), b = sample_group(rng, 0.5, sl3());
    const Matrix ab = (a * b).adjoint(sl3());
    EXPECT_LT((ab - a.adjoint(sl3()) * b.adjoint(sl3())).norm() / ab.norm(), 1e-9);
    EXPECT_LT((a.inverted().adjoint(sl3()) - a.adjoint(sl3()).inverse()).norm() / ab.norm(), 1e-9);
  }
}

TEST(Adjoint, OutsideGroupIsStructuralError) {
  // A general invertible matrix does not preserve antisymmetry.
  Matrix a = Matrix::Identity(3, 3);
  a(0, 1) = 0.7;
  EXPECT_THROW(adjoint_matrix(GroupElement(a), so3()), StructureError);
}

TEST(Adjoint, BracketEquivariance) {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const GroupElement a = sample_group(rng, 0.5, sl3());
    const Matrix& A = a.adjoint(sl3());
    const Vector x = sample_algebra(rng, 1.0, sl3()), y = sample_algebra(rng, 1.0, sl3());
    const Vector lhs = A * sl3().vee(bracket(sl3().hat(x), sl3().hat(y)));
    const Vector rhs = sl3().vee(bracket(sl3().hat(A * x), sl3().hat(A * y)));
    EXPECT_LT((lhs - rhs).norm(), 1e-9 * (1.0 + lhs.norm()));
  }
}

TEST(Exp, ZeroAndDiagonal) {
  EXPECT_LT((exp_map(Matrix::Zero(3, 3)).matrix() - Matrix::Identity(3, 3)).norm(), 1e-15);
  const double t = 0.7;
  const Matrix e = exp_map(t * sl3().basis(6)).matrix();
  EXPECT_NEAR(e(0, 0), std::exp(t), 1e-14);
  EXPECT_NEAR(e(1, 1), std::exp(-t), 1e-14);
  EXPECT_NEAR(e(2, 2), 1.0, 1e-14);
  EXPECT_NEAR(e(0, 1), 0.0, 1e-15);
}

TEST(Exp, UnitDeterminantForTraceless) {
  Rng rng(12);
  for (int t = 0; t < 200; ++t)
    EXPECT_NEAR(sample_group(rng, 1.0, sl3()).matrix().determinant(), 1.0, 1e-9);
}

TEST(Exp, MatchesTaylorSeries) {
  Rng rng(13);
  const Matrix X = sl3().hat(sample_algebra(rng, 0.4, sl3()));
  Matrix sum = Matrix::Identity(3, 3), term = Matrix::Identity(3, 3);
  for (int k = 1; k < 40; ++k) {
    term = term * X / k;
    sum += term;
  }
  EXPECT_LT((matrix_exp(X) - sum).norm(), 1e-14);
}

TEST(Log, IdentityAndDiagonal) {
  EXPECT_LT(log_map(GroupElement(Matrix::Identity(3, 3))).norm(), 1e-15);
  Matrix a = Matrix::Zero(3, 3);
  a(0, 0) = std::exp(1.0);
  a(1, 1) = std::exp(-1.0);
  a(2, 2) = 1.0;
  Matrix expect = Matrix::Zero(3, 3);
  expect(0, 0) = 1.0;
  expect(1, 1) = -1.0;
  EXPECT_LT((log_map(GroupElement(a)) - expect).norm(), 1e-13);
}

TEST(Log, RoundTrips) {
  Rng rng(14);
  for (int t = 0; t < 500; ++t) {
    Vector x = sample_algebra(rng, 1.0, sl3());
    x *= 0.3 / x.norm();
    EXPECT_LT((sl3().vee(log_map(exp_map(sl3().hat(x)))) - x).norm(), 1e-8);
    const Matrix a = sample_group(rng, 0.5, sl3()).matrix();
    EXPECT_LT((matrix_exp(matrix_log(a)) - a).norm() / a.norm(), 1e-8);
  }
}

TEST(Log, NegativeEigenvalueUndefined) {
  Matrix a = Matrix::Identity(3, 3);
  a(0, 0) = -1.0;
  a(1, 1) = -1.0;
  EXPECT_THROW(log_map(GroupElement(a)), LogUndefinedError);
}

TEST(Sampling, ScaleZeroAndDeterminism) {
  Rng rng(15);
  EXPECT_EQ(sample_algebra(rng, 0.0, sl3()).norm(), 0.0);
  Rng r1(99), r2(99);
  EXPECT_EQ(sample_algebra(r1, 1.0, sl3()), sample_algebra(r2, 1.0, sl3()));
  Rng r3(16);
  EXPECT_LT((sample_group(r3, 1e-12, sl3()).matrix() - Matrix::Identity(3, 3)).norm(), 1e-10);
}

TEST(Sampling, EmpiricalStandardDeviation) {
  Rng rng(17);
  const double scale = 0.8;
  double sq = 0.0;
  std::size_t count = 0;
  for (int t = 0; t < 100000 / 8; ++t) {
    const Vector x = sample_algebra(rng, scale, sl3());
    sq += x.squaredNorm();
    count += 8;
  }
  EXPECT_NEAR(std::sqrt(sq / count), scale, 0.02 * scale);
}

TEST(Semisimple, RegisteredAlgebrasPass) {
  for (const LieAlgebra* g : {&sl3(), &so3()}) {
    const auto r = check_semisimple(*g);
    EXPECT_TRUE(r.semisimple) << g->name();
    EXPECT_GT(r.smallest_singular_value, 1e-9 * r.largest_singular_value);
  }
}

TEST(Semisimple, DuplicatedBasisIsDegenerate) {
  auto basis = so3().basis();
  basis.push_back(basis[0]);
  EXPECT_THROW(LieAlgebra::from_basis("dup", basis), ArgumentError);
  const LieAlgebra g = LieAlgebra::from_basis("dup", basis, /*allow_degenerate=*/true);
  EXPECT_FALSE(check_semisimple(g).semisimple);
}

TEST(Descriptor, StructureConstantsAntisymmetricAndDerived) {
  const LieAlgebra& g = sl3();
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      for (int k = 0; k < 8; ++k) EXPECT_EQ(g.structure_constant(i, j, k), -g.structure_constant(j, i, k));
  EXPECT_EQ(g.structure_constant(6, 0, 0), 2.0);
  for (const auto& b : g.basis()) EXPECT_NEAR(b.trace(), 0.0, 0.0);
  for (const auto& b : so3().basis()) EXPECT_LT((b + b.transpose()).norm(), 1e-15);
}

TEST(Descriptor, NotClosedIsRejected) {
  // e12 and e21 alone: their bracket diag(1,-1,0) is outside the span.
  EXPECT_THROW(LieAlgebra::from_basis("open", {elementary(0, 1), elementary(1, 0)}), ArgumentError);
}

TEST(Registry, LookupAndUserAlgebra) {
  EXPECT_EQ(find_algebra("sl3")->dim(), 8);
  EXPECT_EQ(find_algebra("so3")->dim(), 3);
  EXPECT_THROW(find_algebra("nope"), ArgumentError);

  // so(3) in a scaled basis, read from a descriptor file.
  const auto path = std::filesystem::temp_directory_path() / "ln_user_algebra.json";
  {
    nlohmann::json j;
    j["name"] = "so3x2";
    for (const auto& b : so3().basis()) {
      nlohmann::json rows = nlohmann::json::array();
      for (int r = 0; r < 3; ++r) rows.push_back({2.0 * b(r, 0), 2.0 * b(r, 1), 2.0 * b(r, 2)});
      j["basis"].push_back(rows);
    }
    std::ofstream(path) << j.dump();
  }
  const auto g = register_algebra(load_algebra_json(path));
  EXPECT_EQ(find_algebra("so3x2")->dim(), 3);
  // [2G1, 2G2] = 2 (2G3): structure constant 2, Gram -8 I.
  EXPECT_NEAR(g->structure_constant(0, 1, 2), 2.0, 1e-12);
  EXPECT_LT((g->killing_gram() + 8.0 * Matrix::Identity(3, 3)).norm(), 1e-12);
  std::filesystem::remove(path);
}
