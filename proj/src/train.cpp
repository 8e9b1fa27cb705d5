#include "lieneurons/train.hpp"

#include "lieneurons/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace lieneurons {
namespace {

constexpr std::uint64_t kShuffleStream = 0x5851f42d4c957f2dULL;
constexpr std::uint64_t kProbeStream = 0x14057b7ef767814fULL;

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view tag) {
  if (tag == "adam") return OptimizerKind::Adam;
  if (tag == "sgd") return OptimizerKind::Sgd;
  throw ConfigError("unknown optimizer '" + std::string(tag) + "'");
}

Tensor batch_loss(const Model& model, const Batch& batch) {
  const Tensor out = model.forward(batch.inputs);
  if (!batch.labels.empty()) return loss_cross_entropy(out, batch.labels);
  return loss_mse(out, batch.targets);
}

void check_fit(const ModelSpec& spec, const Dataset& data, const char* which) {
  if (data.records.empty()) throw ConfigError(std::string(which) + " dataset is empty");
  if (spec.algebra != data.algebra) {
    throw ConfigError(std::string(which) + " dataset is over '" + data.algebra + "' but the model over '" +
                      spec.algebra + "'");
  }
  if (spec.input_channels != data.channels) {
    throw ConfigError(std::string(which) + " dataset has " + std::to_string(data.channels) +
                      " channels, model expects " + std::to_string(spec.input_channels));
  }
  const Head expected = data.task == Task::Invariant     ? Head::InvariantScalar
                        : data.task == Task::Equivariant ? Head::EquivariantAlgebra
                                                         : Head::Classifier;
  if (spec.head != expected) {
    throw ConfigError(std::string(which) + " dataset task '" + std::string(to_string(data.task)) +
                      "' does not match model head '" + std::string(to_string(spec.head)) + "'");
  }
  if (spec.architecture == Architecture::Mlp && data.max_set_size() > spec.set_size) {
    throw ConfigError(std::string(which) + " dataset has sets of size " + std::to_string(data.max_set_size()) +
                      " but the MLP flattens " + std::to_string(spec.set_size));
  }
}

double relative_gap(const Vector& a, const Vector& b) {
  const double denom = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / denom;
}

// Largest relative commutation error of the model on the first `count`
// records under one random conjugation.
double equivariance_probe(const Model& model, const Dataset& data, std::size_t count, std::uint64_t seed) {
  count = std::min(count, data.records.size());
  Dataset probe = data;
  probe.records.resize(count);
  Rng rng(seed);
  const GroupElement a = sample_group(rng, 0.5, model.algebra());
  const Matrix base = predict(model, probe);
  const Matrix moved = predict(model, conjugate_dataset(probe, {a}));
  const bool equivariant_head = model.spec().head == Head::EquivariantAlgebra;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < base.rows(); ++i) {
    const Vector expected = equivariant_head ? Vector(a.adjoint(model.algebra()) * base.row(i).transpose())
                                             : Vector(base.row(i).transpose());
    worst = std::max(worst, relative_gap(expected, moved.row(i).transpose()));
  }
  return worst;
}

std::string csv_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

Tensor loss_mse(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ArgumentError("loss_mse: shapes " + shape_string(pred.shape()) + " and " + shape_string(target.shape()) +
                        " differ");
  }
  return reduce_mean(square(sub(pred, target)));
}

Tensor loss_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  return softmax_cross_entropy(logits, labels);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam eps must be > 0");
  model.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"task", to_string(c.task)},
          {"model", to_json(c.model)},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"optimizer", to_string(c.optimizer)},
          {"adam", {{"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.adam_eps}}},
          {"train_data", c.train_data.string()},
          {"eval_data", c.eval_data.string()},
          {"checkpoint", c.checkpoint.string()},
          {"history", c.history.string()},
          {"eval_every", c.eval_every},
          {"eval_limit", c.eval_limit},
          {"equivariance_probe", c.equivariance_probe}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.task = parse_task(j.at("task").get<std::string>());
    c.model = model_spec_from_json(j.at("model"));
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.optimizer = parse_optimizer(j.value("optimizer", std::string("adam")));
    if (j.contains("adam")) {
      const auto& a = j["adam"];
      c.beta1 = a.value("beta1", c.beta1);
      c.beta2 = a.value("beta2", c.beta2);
      c.adam_eps = a.value("eps", c.adam_eps);
    }
    c.train_data = j.value("train_data", std::string());
    c.eval_data = j.value("eval_data", std::string());
    c.checkpoint = j.value("checkpoint", std::string());
    c.history = j.value("history", std::string());
    c.eval_every = j.value("eval_every", c.eval_every);
    c.eval_limit = j.value("eval_limit", c.eval_limit);
    c.equivariance_probe = j.value("equivariance_probe", c.equivariance_probe);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return train_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

void save_train_config(const TrainConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << to_json(config).dump(2) << '\n';
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,eval_loss,equivariance_check\n";
  for (const auto& h : history) {
    out += std::to_string(h.epoch) + "," + format_double(h.train_loss) + "," + csv_cell(h.eval_loss) + "," +
           csv_cell(h.equivariance_check) + "\n";
  }
  return out;
}

Optimizer::Optimizer(const TrainConfig& config, const std::vector<NamedParameter>& params)
    : kind_(config.optimizer),
      lr_(config.learning_rate),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.adam_eps) {
  for (const auto& p : params) {
    m_.emplace_back(p.value.numel(), 0.0);
    v_.emplace_back(p.value.numel(), 0.0);
  }
}

void Optimizer::step(std::vector<NamedParameter>& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& tensor = params[p].value;
    const auto g = tensor.grad();
    if (g.empty()) continue;  // parameter did not influence the loss
    auto w = tensor.mutable_data();
    if (kind_ == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr_ * g[i];
      continue;
    }
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double dataset_loss(const Model& model, const Dataset& data, std::size_t limit) {
  NoGradGuard no_grad;
  const std::size_t n = limit == 0 ? data.records.size() : std::min(limit, data.records.size());
  if (n == 0) throw ArgumentError("dataset_loss on an empty dataset");
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < n; begin += 512) {
    const std::size_t end = std::min(n, begin + 512);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const Batch batch = make_batch(data, idx, model.padding(), model.fixed_set_size());
    total += batch_loss(model, batch).item() * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(n);
}

std::filesystem::path best_checkpoint_path(const std::filesystem::path& final_path) {
  auto p = final_path;
  p.replace_filename(final_path.stem().string() + ".best" + final_path.extension().string());
  return p;
}

TrainResult fit(const TrainConfig& config, const Dataset& train, const Dataset* eval, const EpochCallback& on_epoch) {
  config.validate();
  check_fit(config.model, train, "training");
  if (eval) check_fit(config.model, *eval, "evaluation");

  Rng init(config.seed);
  Model model = build_model(config.model, init);
  Optimizer optimizer(config, model.parameters());
  Rng shuffle(config.seed ^ kShuffleStream);

  const nlohmann::json meta_config = to_json(config);
  TrainResult result;
  std::optional<double> best;
  std::vector<std::size_t> order(train.records.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Batch batch = make_batch(train, idx, model.padding(), model.fixed_set_size());
      for (auto& p : model.parameters()) p.value.zero_grad();
      const Tensor loss = batch_loss(model, batch);
      const double value = loss.item();
      ++step;
      if (!std::isfinite(value)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                                  std::to_string(step) + " (batch of records starting at shuffled position " +
                                  std::to_string(begin) + ")",
                              epoch, step);
      }
      loss.backward();
      optimizer.step(model.parameters());
      loss_sum += value * static_cast<double>(idx.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    if (eval && (epoch % config.eval_every == 0 || epoch == config.epochs)) {
      rec.eval_loss = dataset_loss(model, *eval, config.eval_limit);
    }
    if (model.is_equivariant() && config.equivariance_probe > 0) {
      rec.equivariance_check = equivariance_probe(model, train, config.equivariance_probe, config.seed ^ kProbeStream ^ epoch);
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const double score = eval ? rec.eval_loss.value_or(std::numeric_limits<double>::infinity()) : rec.train_loss;
    if (!best || score < *best) {
      best = score;
      result.best_checkpoint =
          make_checkpoint(model, config.seed, {{"config", meta_config}, {"epoch", epoch}, {"score", score}});
    }
  }
  result.final_checkpoint = make_checkpoint(
      model, config.seed,
      {{"config", meta_config}, {"epoch", config.epochs}, {"train_loss", result.history.back().train_loss}});
  return result;
}

TrainResult train_model(const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (config.train_data.empty()) throw ConfigError("train config has no train_data path");
  if (!std::filesystem::exists(config.train_data)) {
    throw ConfigError("training dataset not found: " + config.train_data.string());
  }
  const Dataset train = read_dataset(config.train_data);
  std::optional<Dataset> eval;
  if (!config.eval_data.empty()) {
    if (!std::filesystem::exists(config.eval_data)) {
      throw ConfigError("evaluation dataset not found: " + config.eval_data.string());
    }
    eval = read_dataset(config.eval_data);
  }
  TrainResult result = fit(config, train, eval ? &*eval : nullptr, on_epoch);
  if (!config.checkpoint.empty()) {
    save_checkpoint(result.final_checkpoint, config.checkpoint);
    save_checkpoint(result.best_checkpoint, best_checkpoint_path(config.checkpoint));
  }
  if (!config.history.empty()) {
    std::ofstream out(config.history, std::ios::trunc);
    if (!out) throw ConfigError("cannot write history " + config.history.string());
    out << history_csv(result.history);
  }
  return result;
}

}  // namespace lieneurons
