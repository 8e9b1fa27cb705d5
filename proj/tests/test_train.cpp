#include "support.hpp"

#include "lieneurons/errors.hpp"
#include "lieneurons/platonic.hpp"
#include "lieneurons/train.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>

using namespace lieneurons;
namespace fs = std::filesystem;

namespace {

Dataset regression(Task task, std::size_t n, std::uint64_t seed) {
  RegressionConfig c;
  c.task = task;
  c.n_samples = n;
  c.seed = seed;
  return gen_regression_set(c);
}

TrainConfig small_config(Task task, Architecture arch, std::size_t hidden = 8) {
  TrainConfig c;
  c.task = task;
  c.model.architecture = arch;
  c.model.head = task == Task::Invariant ? Head::InvariantScalar : Head::EquivariantAlgebra;
  c.model.hidden = hidden;
  c.epochs = 3;
  c.batch_size = 32;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(Losses, MseValuesAndGradient) {
  Rng rng(1);
  const Tensor t = testref::random_tensor({4, 3}, rng);
  EXPECT_EQ(loss_mse(t, t).item(), 0.0);
  EXPECT_DOUBLE_EQ(loss_mse(add(t, Tensor::full({4, 3}, 1.0)), t).item(), 1.0);

  const Tensor p = testref::random_tensor({4, 3}, rng, true);
  loss_mse(p, t).backward();
  for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(p.grad()[i], 2.0 * (p.data()[i] - t.data()[i]) / 12.0, 1e-15);
  EXPECT_LT(grad_check([&](const Tensor& x) { return loss_mse(x, t); }, p, 1e-5), 1e-9);
  EXPECT_THROW(loss_mse(p, Tensor::zeros({3, 4})), ArgumentError);
}

TEST(Losses, CrossEntropy) {
  const std::vector<int> labels = {1};
  EXPECT_NEAR(loss_cross_entropy(Tensor::zeros({1, 3}), labels).item(), std::log(3.0), 1e-15);
  EXPECT_LT(loss_cross_entropy(Tensor::from({1, 3}, {0, 60, 0}), labels).item(), 1e-25);
  Rng rng(2);
  const Tensor logits = testref::random_tensor({5, 3}, rng, true);
  const std::vector<int> l5 = {0, 1, 2, 2, 0};
  EXPECT_LT(grad_check([&](const Tensor& x) { return loss_cross_entropy(x, l5); }, logits, 1e-5), 1e-8);
  EXPECT_THROW(loss_cross_entropy(Tensor::zeros({1, 3}), std::vector<int>{3}), ArgumentError);
}

TEST(Config, JsonRoundTripAndValidation) {
  TrainConfig c = small_config(Task::Equivariant, Architecture::TwoLnLb);
  c.optimizer = OptimizerKind::Sgd;
  c.train_data = "a.lnd";
  const auto j = to_json(c);
  EXPECT_EQ(to_json(train_config_from_json(j)), j);

  const auto path = fs::temp_directory_path() / "ln_cfg.json";
  save_train_config(c, path);
  EXPECT_EQ(to_json(load_train_config(path)), j);
  fs::remove(path);

  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config(Task::Invariant, Architecture::LnLr);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Training, SameSeedSameCheckpointBytes) {
  const Dataset d = regression(Task::Invariant, 200, 1);
  const TrainConfig c = small_config(Task::Invariant, Architecture::LnLrLnLb);
  const auto a = fit(c, d), b = fit(c, d);
  EXPECT_EQ(serialize_checkpoint(a.final_checkpoint), serialize_checkpoint(b.final_checkpoint));
  EXPECT_EQ(serialize_checkpoint(a.best_checkpoint), serialize_checkpoint(b.best_checkpoint));
  ASSERT_EQ(a.history.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
}

TEST(Training, EquivariantLossFallsAndStaysEquivariant) {
  const Dataset d = regression(Task::Equivariant, 2000, 2);
  TrainConfig c;  // optimizer defaults; width reduced for test time
  c.task = Task::Equivariant;
  c.model.architecture = Architecture::TwoLnLb;
  c.model.head = Head::EquivariantAlgebra;
  c.model.hidden = 64;
  c.epochs = 5;
  const auto r = fit(c, d);
  ASSERT_EQ(r.history.size(), 5u);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_LT(r.history[i].train_loss, r.history[i - 1].train_loss);
  for (const auto& e : r.history) {
    ASSERT_TRUE(e.equivariance_check);
    EXPECT_LT(*e.equivariance_check, 1e-6);
  }
}

TEST(Training, SmallStepLowersSingleSampleLoss) {
  struct Family {
    Task task;
    Architecture arch;
  };
  const std::vector<Family> families = {{Task::Invariant, Architecture::Mlp},
                                        {Task::Invariant, Architecture::LnLr},
                                        {Task::Invariant, Architecture::LnLb},
                                        {Task::Invariant, Architecture::LnLrLnLb},
                                        {Task::Equivariant, Architecture::TwoLnLr},
                                        {Task::Equivariant, Architecture::TwoLnLb},
                                        {Task::Equivariant, Architecture::TwoLnLrTwoLnLb},
                                        {Task::Equivariant, Architecture::LnLbn}};
  for (const auto& f : families) {
    const Dataset d = regression(f.task, 10, 3);
    TrainConfig c = small_config(f.task, f.arch, 6);
    c.learning_rate = 1e-5;  // default optimizer: each weight moves about lr
    Rng rng(c.seed);
    Model m = build_model(c.model, rng);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const std::vector<std::size_t> idx = {i};
      const Batch b = make_batch(d, idx, m.padding(), m.fixed_set_size());
      const Tensor pred = m.forward(b.inputs);
      const Tensor before = loss_mse(pred, b.targets);
      for (auto& p : m.parameters()) p.value.zero_grad();
      before.backward();
      Optimizer opt(c, m.parameters());
      std::vector<std::vector<double>> saved;
      for (auto& p : m.parameters()) saved.emplace_back(p.value.data().begin(), p.value.data().end());
      opt.step(m.parameters());
      const double after = loss_mse(m.forward(b.inputs), b.targets).item();
      EXPECT_LT(after, before.item()) << to_string(f.arch) << " sample " << i;
      // Undo so every sample starts from the same weights.
      for (std::size_t k = 0; k < saved.size(); ++k) std::copy(saved[k].begin(), saved[k].end(), m.parameters()[k].value.mutable_data().begin());
    }
  }
}

TEST(Training, NonFiniteLossAborts) {
  Dataset d = regression(Task::Invariant, 64, 4);
  d.records[5].scalar_target = std::numeric_limits<double>::infinity();
  try {
    fit(small_config(Task::Invariant, Architecture::LnLr), d);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.epoch(), 1u);
  }
}

TEST(Training, ShapeMismatchIsConfigError) {
  const Dataset d = regression(Task::Invariant, 20, 5);
  EXPECT_THROW(fit(small_config(Task::Equivariant, Architecture::TwoLnLb), d), ConfigError);
}

TEST(Training, FilesCheckpointsAndHistory) {
  const auto dir = fs::temp_directory_path() / "ln_train_test";
  fs::create_directories(dir);
  write_dataset(regression(Task::Invariant, 100, 6), dir / "train.lnd");
  write_dataset(regression(Task::Invariant, 50, 7), dir / "eval.lnd");
  TrainConfig c = small_config(Task::Invariant, Architecture::LnLr);
  c.train_data = dir / "train.lnd";
  c.eval_data = dir / "eval.lnd";
  c.checkpoint = dir / "m.ckpt";
  c.history = dir / "h.csv";
  const auto r = train_model(c);
  EXPECT_TRUE(fs::exists(dir / "m.ckpt"));
  EXPECT_TRUE(fs::exists(best_checkpoint_path(dir / "m.ckpt")));
  std::ifstream in(dir / "h.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_NE(header.find("train_loss"), std::string::npos);

  // Reloaded weights reproduce the evaluation bit for bit.
  const Model a = model_from_checkpoint(r.final_checkpoint);
  const Model b = model_from_checkpoint(load_checkpoint(dir / "m.ckpt"));
  const Dataset e = read_dataset(dir / "eval.lnd");
  EXPECT_EQ(dataset_loss(a, e), dataset_loss(b, e));
  EXPECT_EQ(dataset_loss(b, e), *r.history.back().eval_loss);

  c.train_data = dir / "missing.lnd";
  try {
    train_model(c);
    FAIL();
  } catch (const ConfigError& err) {
    EXPECT_NE(std::string(err.what()).find("missing.lnd"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Training, ClassifierFitsPlatonicData) {
  PlatonicConfig pc;
  pc.n_per_class = 20;
  const Dataset d = gen_platonic_set(pc);
  TrainConfig c;
  c.task = Task::Platonic;
  c.model.architecture = Architecture::LnLr;
  c.model.head = Head::Classifier;
  c.model.input_channels = 1;
  c.model.hidden = 4;
  c.epochs = 2;
  c.batch_size = 16;
  const auto r = fit(c, d);
  EXPECT_TRUE(std::isfinite(r.history.back().train_loss));
}
