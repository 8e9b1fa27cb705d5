#include "lieneurons/metrics.hpp"

#include "lieneurons/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

namespace lieneurons {
namespace {

struct ConjugatedStats {
  double mse = 0.0;
  double error = 0.0;  // invariance or equivariance
};

ConjugatedStats conjugated_stats(const Model& model, const Dataset& base, const std::vector<GroupElement>& actions) {
  if (actions.empty()) throw ArgumentError("conjugated evaluation needs at least one action");
  if (base.records.empty()) throw ArgumentError("conjugated evaluation on an empty dataset");
  const auto kind = base.target_kind();
  if (kind == TargetKind::Label) throw ConfigError("conjugated MSE is defined for regression tasks only");
  const auto& alg = model.algebra();
  const Matrix id = predict(model, base);

  double sq = 0.0, err = 0.0;
  for (const auto& a : actions) {
    const Dataset moved = conjugate_dataset(base, {a});
    const Matrix out = predict(model, moved);
    const Matrix& Ad = a.adjoint(alg);
    for (std::size_t i = 0; i < base.records.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const auto& r = base.records[i];
      if (kind == TargetKind::Scalar) {
        const double d = out(row, 0) - r.scalar_target;
        sq += d * d;
        err += std::abs(out(row, 0) - id(row, 0));
      } else {
        const Vector y = out.row(row).transpose();
        const Vector back = a.inverted().adjoint(alg) * y;
        const Eigen::Map<const Vector> t(r.algebra_target.data(), static_cast<Eigen::Index>(r.algebra_target.size()));
        sq += (back - t).squaredNorm() / static_cast<double>(t.size());
        const Vector expected = Ad * id.row(row).transpose();
        err += alg.hat(expected - y).norm();
      }
    }
  }
  const double count = static_cast<double>(base.records.size() * actions.size());
  return {sq / count, err / count};
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j = {{"task", r.task}, {"n_samples", r.n_samples}, {"n_actions", r.n_actions}};
  auto put = [&](const char* key, const std::optional<double>& v) { j[key] = v ? nlohmann::json(*v) : nlohmann::json(); };
  put("mse_id", r.mse_id);
  put("mse_conjugated", r.mse_conjugated);
  put("invariance_error", r.invariance_error);
  put("equivariance_error", r.equivariance_error);
  put("accuracy", r.accuracy);
  return j;
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.task = j.at("task").get<std::string>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.n_actions = j.at("n_actions").get<std::size_t>();
  auto get = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
  };
  r.mse_id = get("mse_id");
  r.mse_conjugated = get("mse_conjugated");
  r.invariance_error = get("invariance_error");
  r.equivariance_error = get("equivariance_error");
  r.accuracy = get("accuracy");
  return r;
}

std::string eval_csv_header() {
  return "task,n_samples,n_actions,mse_id,mse_conjugated,invariance_error,equivariance_error,accuracy";
}

std::string eval_csv_row(const EvalReport& r) {
  auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  return r.task + "," + std::to_string(r.n_samples) + "," + std::to_string(r.n_actions) + "," + cell(r.mse_id) + "," +
         cell(r.mse_conjugated) + "," + cell(r.invariance_error) + "," + cell(r.equivariance_error) + "," +
         cell(r.accuracy);
}

Matrix predict(const Model& model, const Dataset& data, std::size_t batch_size) {
  if (batch_size == 0) throw ArgumentError("predict: batch_size must be >= 1");
  NoGradGuard no_grad;
  const auto out_dim = static_cast<Eigen::Index>(model.output_dim());
  Matrix out(static_cast<Eigen::Index>(data.records.size()), out_dim);
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < data.records.size(); begin += batch_size) {
    const std::size_t end = std::min(data.records.size(), begin + batch_size);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const Batch batch = make_batch(data, idx, model.padding(), model.fixed_set_size());
    const Tensor y = model.forward(batch.inputs);
    const auto v = y.data();
    for (std::size_t b = 0; b < idx.size(); ++b)
      for (Eigen::Index k = 0; k < out_dim; ++k)
        out(static_cast<Eigen::Index>(begin + b), k) = v[b * static_cast<std::size_t>(out_dim) + static_cast<std::size_t>(k)];
  }
  return out;
}

double mse(const Model& model, const Dataset& data) {
  if (data.records.empty()) throw ArgumentError("mse on an empty dataset");
  const Matrix y = predict(model, data);
  double sq = 0.0;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& r = data.records[i];
    const auto row = static_cast<Eigen::Index>(i);
    switch (data.target_kind()) {
      case TargetKind::Scalar: sq += (y(row, 0) - r.scalar_target) * (y(row, 0) - r.scalar_target); break;
      case TargetKind::Algebra:
        for (std::size_t k = 0; k < r.algebra_target.size(); ++k) {
          const double d = y(row, static_cast<Eigen::Index>(k)) - r.algebra_target[k];
          sq += d * d / static_cast<double>(r.algebra_target.size());
        }
        break;
      case TargetKind::Label: throw ConfigError("mse is defined for regression tasks only");
    }
  }
  return sq / static_cast<double>(data.records.size());
}

double mse_conjugated(const Model& model, const Dataset& augmented) {
  if (augmented.records.empty()) throw ArgumentError("mse_conjugated on an empty dataset");
  const auto kind = augmented.target_kind();
  if (kind == TargetKind::Label) throw ConfigError("mse_conjugated is defined for regression tasks only");
  for (const auto& r : augmented.records)
    if (!r.conjugator) throw ConfigError("mse_conjugated: record without conjugator metadata");
  const Matrix y = predict(model, augmented);
  const auto& alg = model.algebra();
  double sq = 0.0;
  for (std::size_t i = 0; i < augmented.records.size(); ++i) {
    const auto& r = augmented.records[i];
    const auto row = static_cast<Eigen::Index>(i);
    if (kind == TargetKind::Scalar) {
      sq += (y(row, 0) - r.scalar_target) * (y(row, 0) - r.scalar_target);
    } else {
      const GroupElement a(*r.conjugator);
      const Vector back = a.inverted().adjoint(alg) * y.row(row).transpose();
      const Eigen::Map<const Vector> t(r.algebra_target.data(), static_cast<Eigen::Index>(r.algebra_target.size()));
      sq += (back - t).squaredNorm() / static_cast<double>(t.size());
    }
  }
  return sq / static_cast<double>(augmented.records.size());
}

double invariance_error(const Model& model, const Dataset& base, const std::vector<GroupElement>& actions) {
  if (model.output_dim() != 1 || base.target_kind() != TargetKind::Scalar) {
    throw ConfigError("invariance_error needs a scalar-output model on the invariant task");
  }
  return conjugated_stats(model, base, actions).error;
}

double equivariance_error(const Model& model, const Dataset& base, const std::vector<GroupElement>& actions) {
  if (base.target_kind() != TargetKind::Algebra) {
    throw ConfigError("equivariance_error needs an algebra-output model on the equivariant task");
  }
  return conjugated_stats(model, base, actions).error;
}

double accuracy_from_logits(const Matrix& logits, const std::vector<int>& labels) {
  if (logits.rows() != static_cast<Eigen::Index>(labels.size()) || labels.empty()) {
    throw ArgumentError("accuracy: logits and labels disagree in length");
  }
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    bool tie = false;
    for (Eigen::Index k = 1; k < logits.cols(); ++k) {
      if (logits(i, k) > logits(i, best)) {
        best = k;
        tie = false;
      } else if (logits(i, k) == logits(i, best)) {
        tie = true;
      }
    }
    if (!tie && best == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double accuracy(const Model& model, const Dataset& data) {
  if (data.target_kind() != TargetKind::Label) throw ConfigError("accuracy is defined for the classification task only");
  std::vector<int> labels;
  labels.reserve(data.records.size());
  for (const auto& r : data.records) labels.push_back(r.label);
  return accuracy_from_logits(predict(model, data), labels);
}

EvalReport evaluate(const Model& model, const Dataset& test, const std::vector<GroupElement>& actions) {
  EvalReport report;
  report.task = std::string(to_string(test.task));
  report.n_samples = test.records.size();
  if (test.target_kind() == TargetKind::Label) {
    report.accuracy = accuracy(model, test);
    return report;
  }
  // A stored augmented set carries its own conjugators; its targets belong to
  // the unconjugated sources, so only the conjugated MSE is meaningful.
  const bool augmented = std::all_of(test.records.begin(), test.records.end(),
                                     [](const DatasetRecord& r) { return r.conjugator.has_value(); });
  if (augmented && !test.records.empty()) {
    report.mse_conjugated = mse_conjugated(model, test);
    report.n_actions = test.metadata.value("n_actions", std::size_t{0});
    return report;
  }
  report.mse_id = mse(model, test);
  if (!actions.empty()) {
    const auto stats = conjugated_stats(model, test, actions);
    report.n_actions = actions.size();
    report.mse_conjugated = stats.mse;
    if (test.target_kind() == TargetKind::Scalar) report.invariance_error = stats.error;
    else report.equivariance_error = stats.error;
  }
  return report;
}

}  // namespace lieneurons
