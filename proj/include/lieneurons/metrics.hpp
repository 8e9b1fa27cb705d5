#pragma once

// Test-set quantities: plain and conjugated MSE, invariance and equivariance
// errors, and classification accuracy.

#include "lieneurons/datasets.hpp"
#include "lieneurons/models.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace lieneurons {

struct EvalReport {
  std::string task;
  std::size_t n_samples = 0;  // N_x
  std::size_t n_actions = 0;  // N_a (0 when no conjugated evaluation ran)
  std::optional<double> mse_id;
  std::optional<double> mse_conjugated;
  std::optional<double> invariance_error;
  std::optional<double> equivariance_error;
  std::optional<double> accuracy;
};

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);
std::string eval_csv_header();
std::string eval_csv_row(const EvalReport& report);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// Model outputs, one row per record. Rows are batched with the model's
/// padding rule.
Matrix predict(const Model& model, const Dataset& data, std::size_t batch_size = 512);

double mse(const Model& model, const Dataset& data);

/// Uses the conjugators stored in an augmented set: equivariant outputs are
/// mapped back by Adm_{a^-1} before comparing with the stored target.
/// ConfigError when a record carries no conjugator.
double mse_conjugated(const Model& model, const Dataset& augmented);

/// Mean over records and actions of |f(x_i) - f(Ad_a x_i)|.
double invariance_error(const Model& model, const Dataset& base, const std::vector<GroupElement>& actions);
/// Mean over records and actions of |(Ad_a f(x_i))^ - f(Ad_a x_i)^|_F.
double equivariance_error(const Model& model, const Dataset& base, const std::vector<GroupElement>& actions);

/// Fraction of argmax-logit predictions equal to the label; ties are errors.
double accuracy(const Model& model, const Dataset& data);
double accuracy_from_logits(const Matrix& logits, const std::vector<int>& labels);

/// mse_id plus, when actions are given, mse_conjugated and the invariance or
/// equivariance error; for the classification task, accuracy. The
/// conjugated quantities are computed action by action without materializing
/// the augmented set. A stored augmented set (every record has a conjugator)
/// gets mse_conjugated alone, and `actions` is ignored.
EvalReport evaluate(const Model& model, const Dataset& test, const std::vector<GroupElement>& actions = {});

}  // namespace lieneurons
