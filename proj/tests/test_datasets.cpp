#include "support.hpp"

#include "lieneurons/datasets.hpp"
#include "lieneurons/errors.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

using namespace lieneurons;

namespace {

Dataset regression(Task task, std::size_t n, std::uint64_t seed) {
  RegressionConfig c;
  c.task = task;
  c.n_samples = n;
  c.seed = seed;
  return gen_regression_set(c);
}

}  // namespace

TEST(Targets, InvariantAtOrigin) { EXPECT_DOUBLE_EQ(target_invariant(Vector::Zero(8), Vector::Zero(8)), 2.0); }

TEST(Targets, InvariantMatchesIndependentEvaluator) {
  const Dataset d = regression(Task::Invariant, 20, 0);
  for (const auto& r : d.records) {
    const Vector x = r.input(0, 0, 8), y = r.input(0, 1, 8);
    const double ref = testref::invariant_target(x.data(), y.data());
    EXPECT_NEAR(r.scalar_target, ref, 1e-12 * (1.0 + std::abs(ref)));
    EXPECT_NEAR(target_invariant(x, y), ref, 1e-12 * (1.0 + std::abs(ref)));
  }
}

TEST(Targets, EquivariantSpecialCasesAndOracle) {
  Rng rng(1);
  const Vector x = sample_algebra(rng, 1.0, sl3()), y = sample_algebra(rng, 1.0, sl3());
  EXPECT_EQ(target_equivariant(x, Vector::Zero(8)).norm(), 0.0);
  EXPECT_LT(target_equivariant(x, x).norm(), 1e-14);
  const auto ref = testref::equivariant_target(x.data(), y.data());
  const Vector got = target_equivariant(x, y);
  for (int k = 0; k < 8; ++k) EXPECT_NEAR(got(k), ref[k], 1e-12);
}

TEST(Targets, ConjugationLaws) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const Vector x = sample_algebra(rng, 0.5, sl3()), y = sample_algebra(rng, 0.5, sl3());
    const Matrix A = sample_group(rng, 0.5, sl3()).adjoint(sl3());
    const double g = target_invariant(x, y);
    EXPECT_LT(std::abs(target_invariant(A * x, A * y) - g), 1e-8 * (1.0 + std::abs(g)));
    const Vector h = target_equivariant(x, y);
    EXPECT_LT((target_equivariant(A * x, A * y) - A * h).norm(), 1e-8 * (1.0 + h.norm()));
  }
}

TEST(Regression, DeterministicAndBounded) {
  const Dataset a = regression(Task::Invariant, 300, 7), b = regression(Task::Invariant, 300, 7);
  EXPECT_EQ(serialize_dataset(a), serialize_dataset(b));
  for (const auto& r : a.records) {
    EXPECT_TRUE(std::isfinite(r.scalar_target));
    const auto X = testref::sl3_hat(r.input(0, 0, 8)), Y = testref::sl3_hat(r.input(0, 1, 8));
    EXPECT_LE(std::abs(testref::trace(testref::mul(X, X))), 4.0);
    EXPECT_LE(std::abs(testref::trace(testref::mul(Y, Y))), 4.0);
    EXPECT_NEAR(testref::trace(X), 0.0, 1e-15);
  }
  EXPECT_TRUE(a.metadata.contains("rejected"));
}

TEST(Regression, DifferentSeedsShareNoRecords) {
  const Dataset a = regression(Task::Equivariant, 500, 1), b = regression(Task::Equivariant, 500, 2);
  std::set<std::string> hashes;
  for (const auto& r : a.records)
    hashes.insert(sha256_hex({reinterpret_cast<const char*>(r.inputs.data()), r.inputs.size() * sizeof(double)}));
  for (const auto& r : b.records)
    EXPECT_FALSE(hashes.count(sha256_hex({reinterpret_cast<const char*>(r.inputs.data()), r.inputs.size() * sizeof(double)})));
}

TEST(Regression, ZeroSamplesRejected) {
  EXPECT_THROW(regression(Task::Invariant, 0, 0), ArgumentError);
  EXPECT_THROW(regression(Task::Platonic, 5, 0), ArgumentError);
}

TEST(Conjugated, SizeStorageAndIdentity) {
  const Dataset base = regression(Task::Invariant, 10, 3);
  const Dataset aug = gen_conjugated_testset(base, 4, 11);
  ASSERT_EQ(aug.size(), 40u);
  for (const auto& r : aug.records) {
    ASSERT_TRUE(r.conjugator && r.source_index);
    EXPECT_NEAR(r.conjugator->determinant(), 1.0, 1e-9);
    const auto& src = base.records[*r.source_index];
    EXPECT_EQ(r.scalar_target, src.scalar_target);
    // Stored invariant targets still agree with the conjugated inputs.
    const double g = target_invariant(r.input(0, 0, 8), r.input(0, 1, 8));
    EXPECT_LT(std::abs(g - r.scalar_target), 1e-8 * (1.0 + std::abs(g)));
  }
  const Dataset same = conjugate_dataset(base, {GroupElement(Matrix::Identity(3, 3))});
  ASSERT_EQ(same.size(), base.size());
  for (std::size_t i = 0; i < base.size(); ++i)
    EXPECT_LT(testref::max_abs_diff(same.records[i].inputs, base.records[i].inputs), 1e-14);
  EXPECT_THROW(gen_conjugated_testset(base, 0, 1), ArgumentError);
}

TEST(Files, RoundTripIsByteIdentical) {
  const auto dir = std::filesystem::temp_directory_path() / "ln_dataset_test";
  std::filesystem::create_directories(dir);
  const Dataset base = regression(Task::Equivariant, 25, 4);
  const Dataset aug = gen_conjugated_testset(base, 2, 5);
  for (const Dataset* d : {&base, &aug}) {
    for (auto enc : {DatasetEncoding::Binary, DatasetEncoding::Json}) {
      const auto p = dir / "d.lnd";
      write_dataset(*d, p, enc);
      const Dataset back = read_dataset(p);
      EXPECT_EQ(serialize_dataset(back, enc), serialize_dataset(*d, enc));
      EXPECT_EQ(back.records.size(), d->records.size());
    }
  }
  std::filesystem::remove_all(dir);
}

TEST(Files, CorruptionDetected) {
  std::string bytes = serialize_dataset(regression(Task::Invariant, 3, 0));
  EXPECT_EQ(bytes.rfind(std::string(kDatasetMagic), 0), 0u);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(parse_dataset(bad), FormatError);
  EXPECT_THROW(parse_dataset(bytes.substr(0, bytes.size() - 5)), FormatError);
}

TEST(Batching, PaddingModes) {
  Dataset d;
  d.task = Task::Platonic;
  d.channels = 1;
  for (std::size_t n : {2u, 3u}) {
    DatasetRecord r;
    r.set_size = n;
    r.channels = 1;
    r.label = 0;
    for (std::size_t i = 0; i < n * 8; ++i) r.inputs.push_back(static_cast<double>(i + 1));
    d.records.push_back(r);
  }
  const std::vector<std::size_t> idx = {0, 1};
  const Batch rep = make_batch(d, idx, Padding::Repeat);
  EXPECT_EQ(rep.inputs.shape(), (Shape{2, 3, 8, 1}));
  EXPECT_EQ(rep.inputs.data()[16], 1.0);  // element 2 of record 0 repeats element 0
  const Batch zero = make_batch(d, idx, Padding::Zero, 4);
  EXPECT_EQ(zero.inputs.shape(), (Shape{2, 4, 8, 1}));
  EXPECT_EQ(zero.inputs.data()[16], 0.0);
  EXPECT_EQ(zero.labels, (std::vector<int>{0, 0}));
}
