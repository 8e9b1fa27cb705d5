#include "support.hpp"

#include "lieneurons/datasets.hpp"
#include "lieneurons/errors.hpp"
#include "lieneurons/metrics.hpp"
#include "lieneurons/models.hpp"

#include <gtest/gtest.h>

using namespace lieneurons;

namespace {

Dataset regression(Task task, std::size_t n, std::uint64_t seed) {
  RegressionConfig c;
  c.task = task;
  c.n_samples = n;
  c.seed = seed;
  return gen_regression_set(c);
}

Model model_of(Architecture arch, Head head, std::uint64_t seed, std::size_t hidden = 5) {
  ModelSpec s;
  s.architecture = arch;
  s.head = head;
  s.hidden = hidden;
  Rng rng(seed);
  return build_model(s, rng);
}

void fill_parameters(Model& m, double value) {
  for (auto& p : m.parameters())
    for (double& v : p.value.mutable_data()) v = value;
}

}  // namespace

TEST(Metrics, StructuralErrorsAreTiny) {
  const Dataset inv = regression(Task::Invariant, 50, 1), eq = regression(Task::Equivariant, 50, 2);
  const auto actions = sample_actions(5, 3);
  EXPECT_LT(invariance_error(model_of(Architecture::LnLrLnLb, Head::InvariantScalar, 4), inv, actions), 1e-6);
  EXPECT_LT(equivariance_error(model_of(Architecture::TwoLnLrTwoLnLb, Head::EquivariantAlgebra, 5), eq, actions), 1e-6);
  EXPECT_GT(invariance_error(model_of(Architecture::Mlp, Head::InvariantScalar, 6, 32), inv, actions), 1e-3);
  EXPECT_GT(equivariance_error(model_of(Architecture::Mlp, Head::EquivariantAlgebra, 6, 32), eq, actions), 1e-3);
}

TEST(Metrics, ConstantAndZeroModels) {
  const Dataset inv = regression(Task::Invariant, 20, 1), eq = regression(Task::Equivariant, 20, 2);
  const auto actions = sample_actions(3, 3);
  Model c = model_of(Architecture::Mlp, Head::InvariantScalar, 7);
  fill_parameters(c, 0.0);
  for (auto& p : c.parameters())
    if (p.name.find("b") != std::string::npos && p.value.numel() == 1) p.value.mutable_data()[0] = 1.5;
  EXPECT_EQ(invariance_error(c, inv, actions), 0.0);
  Model z = model_of(Architecture::Mlp, Head::EquivariantAlgebra, 8);
  fill_parameters(z, 0.0);
  EXPECT_EQ(equivariance_error(z, eq, actions), 0.0);
}

TEST(Metrics, ConjugatedMseAgreesWithPlain) {
  const Dataset eq = regression(Task::Equivariant, 30, 9);
  const Model m = model_of(Architecture::TwoLnLb, Head::EquivariantAlgebra, 10);
  const double plain = mse(m, eq);
  EXPECT_NEAR(mse_conjugated(m, conjugate_dataset(eq, {GroupElement(Matrix::Identity(3, 3))})), plain, 1e-12);
  EXPECT_NEAR(mse_conjugated(m, gen_conjugated_testset(eq, 4, 11)), plain, 1e-6);
  const EvalReport r = evaluate(m, eq, sample_actions(4, 11));
  EXPECT_NEAR(*r.mse_conjugated, plain, 1e-6);
  EXPECT_EQ(r.n_actions, 4u);
  EXPECT_EQ(r.n_samples, 30u);
  EXPECT_THROW(mse_conjugated(m, eq), ConfigError);
}

TEST(Metrics, MseMatchesHandComputation) {
  const Dataset inv = regression(Task::Invariant, 15, 12);
  const Model m = model_of(Architecture::LnLr, Head::InvariantScalar, 13);
  const Matrix y = predict(m, inv);
  double sq = 0.0;
  for (std::size_t i = 0; i < inv.size(); ++i) {
    const double d = y(static_cast<Eigen::Index>(i), 0) - inv.records[i].scalar_target;
    sq += d * d;
  }
  EXPECT_NEAR(mse(m, inv), sq / 15.0, 1e-12 * sq);
}

TEST(Metrics, AccuracyTiesAndChance) {
  Matrix logits(3, 3);
  logits << 1, 0, 0,  //
      0.5, 0.5, 0,    // tie: counted wrong
      0, 0, 2;
  EXPECT_DOUBLE_EQ(accuracy_from_logits(logits, {0, 0, 2}), 2.0 / 3.0);

  Rng rng(14);
  std::uniform_int_distribution<int> cls(0, 2);
  Matrix big = Matrix::Zero(30000, 3);
  std::vector<int> labels(30000);
  for (int i = 0; i < 30000; ++i) {
    big(i, cls(rng)) = 1.0;
    labels[static_cast<std::size_t>(i)] = cls(rng);
  }
  EXPECT_NEAR(accuracy_from_logits(big, labels), 1.0 / 3.0, 0.02);
}

TEST(Metrics, ReportJsonAndCsv) {
  EvalReport r;
  r.task = "invariant";
  r.n_samples = 10;
  r.n_actions = 2;
  r.mse_id = 0.1;
  r.invariance_error = 3e-15;
  const auto j = to_json(r);
  EXPECT_TRUE(j["accuracy"].is_null());
  const EvalReport back = eval_report_from_json(j);
  EXPECT_EQ(back.mse_id, r.mse_id);
  EXPECT_EQ(back.invariance_error, r.invariance_error);
  EXPECT_EQ(eval_csv_row(r), "invariant,10,2,0.1,,3e-15,,");
  EXPECT_EQ(format_double(0.1 + 0.2), "0.30000000000000004");
}

TEST(Metrics, StoredAugmentedSetReportsConjugatedMse) {
  const Dataset eq = regression(Task::Equivariant, 12, 15);
  const Model m = model_of(Architecture::TwoLnLb, Head::EquivariantAlgebra, 16);
  const Dataset aug = gen_conjugated_testset(eq, 3, 17);
  const EvalReport r = evaluate(m, aug);
  EXPECT_FALSE(r.mse_id.has_value());
  EXPECT_EQ(r.n_actions, 3u);
  EXPECT_EQ(*r.mse_conjugated, mse_conjugated(m, aug));
}
