#include "lieneurons/reproduce.hpp"

#include "lieneurons/datasets.hpp"
#include "lieneurons/errors.hpp"
#include "lieneurons/platonic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace lieneurons {

std::string_view to_string(Budget budget) { return budget == Budget::Quick ? "quick" : "full"; }

Budget parse_budget(std::string_view tag) {
  if (tag == "quick") return Budget::Quick;
  if (tag == "full") return Budget::Full;
  throw ConfigError("unknown budget '" + std::string(tag) + "' (expected quick or full)");
}

const TaskBudget& BudgetSettings::of(Task task) const {
  switch (task) {
    case Task::Invariant: return invariant;
    case Task::Equivariant: return equivariant;
    case Task::Platonic: return platonic;
  }
  return invariant;
}

BudgetSettings budget_settings(Budget budget) {
  BudgetSettings s;
  if (budget == Budget::Quick) {
    s.invariant = {.n_train = 4000, .n_test = 1000, .n_actions = 5, .epochs = 30, .batch_size = 256,
                   .ln_hidden = 32, .mlp_hidden = 128, .ln_learning_rate = 3e-3, .mlp_learning_rate = 3e-3};
    s.equivariant = s.invariant;
    s.equivariant.epochs = 15;
    s.platonic = {.n_train = 200, .n_test = 200, .n_actions = 100, .epochs = 40, .batch_size = 256,
                  .ln_hidden = 16, .mlp_hidden = 128, .ln_learning_rate = 1e-2, .mlp_learning_rate = 1e-3};
  } else {
    s.invariant = {.n_train = 10000, .n_test = 10000, .n_actions = 500, .epochs = 60, .batch_size = 256,
                   .ln_hidden = 256, .mlp_hidden = 256, .ln_learning_rate = 1e-3, .mlp_learning_rate = 1e-3};
    s.equivariant = s.invariant;
    // The Killing ReLU costs O(hidden^2) per set element and the sets hold up
    // to 60 elements, so the classifier stays narrower.
    s.platonic = {.n_train = 1000, .n_test = 1000, .n_actions = 500, .epochs = 40, .batch_size = 256,
                  .ln_hidden = 32, .mlp_hidden = 256, .ln_learning_rate = 1e-2, .mlp_learning_rate = 1e-3};
  }
  return s;
}

nlohmann::json to_json(const TaskBudget& b) {
  return {{"n_train", b.n_train},
          {"n_test", b.n_test},
          {"n_actions", b.n_actions},
          {"epochs", b.epochs},
          {"batch_size", b.batch_size},
          {"ln_hidden", b.ln_hidden},
          {"mlp_hidden", b.mlp_hidden},
          {"ln_learning_rate", b.ln_learning_rate},
          {"mlp_learning_rate", b.mlp_learning_rate}};
}

nlohmann::json to_json(const CellResult& cell) {
  nlohmann::json j = {{"task", to_string(cell.task)},
                      {"architecture", to_string(cell.architecture)},
                      {"report", to_json(cell.report)},
                      {"parameter_count", cell.parameter_count}};
  j["rotated_accuracy"] = cell.rotated_accuracy ? nlohmann::json(*cell.rotated_accuracy) : nlohmann::json();
  return j;
}

CellResult cell_result_from_json(const nlohmann::json& j) {
  try {
    CellResult c;
    c.task = parse_task(j.at("task").get<std::string>());
    c.architecture = parse_architecture(j.at("architecture").get<std::string>());
    c.report = eval_report_from_json(j.at("report"));
    c.parameter_count = j.at("parameter_count").get<std::size_t>();
    if (j.contains("rotated_accuracy") && !j["rotated_accuracy"].is_null())
      c.rotated_accuracy = j["rotated_accuracy"].get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("cell result: ") + e.what());
  }
}

namespace {

// Data, actions and weights come from separate offsets of the cell seed, so
// all models of one task see the same data.
constexpr std::uint64_t kTrainSeed = 1, kTestSeed = 2, kActionSeed = 3, kModelSeed = 10;

Head head_of(Task task) {
  switch (task) {
    case Task::Invariant: return Head::InvariantScalar;
    case Task::Equivariant: return Head::EquivariantAlgebra;
    case Task::Platonic: return Head::Classifier;
  }
  return Head::InvariantScalar;
}

TrainConfig cell_config(Task task, Architecture arch, const TaskBudget& b, std::uint64_t seed,
                        std::size_t mlp_set_size) {
  const bool mlp = arch == Architecture::Mlp;
  TrainConfig c;
  c.task = task;
  c.model.architecture = arch;
  c.model.head = head_of(task);
  c.model.hidden = mlp ? b.mlp_hidden : b.ln_hidden;
  c.model.input_channels = task == Task::Platonic ? 1 : 2;
  c.model.set_size = mlp ? mlp_set_size : 1;
  c.learning_rate = mlp ? b.mlp_learning_rate : b.ln_learning_rate;
  c.batch_size = b.batch_size;
  c.epochs = b.epochs;
  c.seed = seed + kModelSeed;
  return c;
}

}  // namespace

CellRun run_cell(Task task, Architecture arch, const TaskBudget& b, std::uint64_t seed) {
  CellRun run;
  run.result.task = task;
  run.result.architecture = arch;
  auto train_and_load = [&](const TrainConfig& config, const Dataset& train) {
    auto trained = fit(config, train, nullptr, [&](const EpochRecord& r) { run.history.push_back(r); });
    run.checkpoint = std::move(trained.final_checkpoint);
    Model model = model_from_checkpoint(run.checkpoint);
    run.result.parameter_count = model.parameter_count();
    return model;
  };

  if (task == Task::Platonic) {
    PlatonicConfig pc;
    pc.n_per_class = b.n_train;
    pc.seed = seed + kTrainSeed;
    const Dataset train = gen_platonic_set(pc);
    pc.n_per_class = b.n_test;
    pc.seed = seed + kTestSeed;
    const Dataset test = gen_platonic_set(pc);
    // Same seed: the rotated set carries the same noise draws.
    pc.rotations = random_rotations(b.n_actions, seed + kActionSeed);
    const Dataset rotated = gen_platonic_set(pc);

    const Model model = train_and_load(cell_config(task, arch, b, seed, train.max_set_size()), train);
    run.result.report = evaluate(model, test);
    run.result.rotated_accuracy = accuracy(model, rotated);
    return run;
  }

  RegressionConfig rc;
  rc.task = task;
  rc.n_samples = b.n_train;
  rc.seed = seed + kTrainSeed;
  const Dataset train = gen_regression_set(rc);
  rc.n_samples = b.n_test;
  rc.seed = seed + kTestSeed;
  const Dataset test = gen_regression_set(rc);
  const auto actions = sample_actions(b.n_actions, seed + kActionSeed);

  const Model model = train_and_load(cell_config(task, arch, b, seed, 1), train);
  run.result.report = evaluate(model, test, actions);
  return run;
}

namespace {

using A = Architecture;

const std::vector<std::string> kRegressionRows1 = {"MSE Id/Id", "MSE Id/SL(3)", "Invariance Error"};
const std::vector<std::string> kRegressionRows2 = {"MSE Id/Id", "MSE Id/SL(3)", "Equivariance Error"};
const std::vector<std::string> kClassRows = {"Accuracy", "Accuracy (Rotated)"};
const std::vector<std::string> kAblationColumns = {"Inv MSE Id/Id",   "Inv MSE Id/SL(3)",   "Invariance Error",
                                                   "Equiv MSE Id/Id", "Equiv MSE Id/SL(3)", "Equivariance Error",
                                                   "Accuracy",        "Accuracy (Rotated)"};

struct Column {
  std::string label;
  std::vector<std::pair<Task, A>> cells;  // Table 4 rows use three cells
};

std::vector<Column> models_of(int table) {
  switch (table) {
    case 1:
      return {{"MLP", {{Task::Invariant, A::Mlp}}},
              {"LN-LR", {{Task::Invariant, A::LnLr}}},
              {"LN-LB", {{Task::Invariant, A::LnLb}}},
              {"LN-LR+LN-LB", {{Task::Invariant, A::LnLrLnLb}}}};
    case 2:
      return {{"MLP", {{Task::Equivariant, A::Mlp}}},
              {"2LN-LR", {{Task::Equivariant, A::TwoLnLr}}},
              {"2LN-LB", {{Task::Equivariant, A::TwoLnLb}}},
              {"2LN-LR+2LN-LB", {{Task::Equivariant, A::TwoLnLrTwoLnLb}}}};
    case 3:
      return {{"MLP", {{Task::Platonic, A::Mlp}}},
              {"LN-LR", {{Task::Platonic, A::LnLr}}},
              {"LN-LB", {{Task::Platonic, A::LnLb}}},
              {"LN-LR+LN-LB", {{Task::Platonic, A::LnLrLnLb}}}};
    case 4:
      return {{"LN-LB", {{Task::Invariant, A::LnLb}, {Task::Equivariant, A::TwoLnLb}, {Task::Platonic, A::LnLb}}},
              {"LN-LBN", {{Task::Invariant, A::LnLbn}, {Task::Equivariant, A::LnLbn}, {Task::Platonic, A::LnLbn}}}};
    default:
      throw ConfigError("unknown table " + std::to_string(table) + " (expected 1, 2, 3 or 4)");
  }
}

// Published values, keyed by (row, column) of our layout.
std::map<std::pair<std::string, std::string>, double> reference_values(int table) {
  std::map<std::pair<std::string, std::string>, double> m;
  auto put_column = [&](const std::vector<std::string>& rows, const std::string& col, std::vector<double> v) {
    for (std::size_t i = 0; i < rows.size(); ++i) m[{rows[i], col}] = v[i];
  };
  switch (table) {
    case 1:
      put_column(kRegressionRows1, "MLP", {0.143, 5.566, 1.359});
      put_column(kRegressionRows1, "LN-LR", {0.103, 0.103, 0.002});
      put_column(kRegressionRows1, "LN-LB", {0.558, 0.558, 4.9e-5});
      put_column(kRegressionRows1, "LN-LR+LN-LB", {0.115, 0.115, 9.0e-4});
      break;
    case 2:
      put_column(kRegressionRows2, "MLP", {0.009, 2.025, 0.445});
      put_column(kRegressionRows2, "2LN-LR", {0.213, 0.213, 1.0e-4});
      put_column(kRegressionRows2, "2LN-LB", {9.6e-10, 4.5e-8, 6.5e-5});
      put_column(kRegressionRows2, "2LN-LR+2LN-LB", {2.2e-6, 2.2e-6, 7.9e-5});
      break;
    case 3:
      put_column(kClassRows, "MLP", {0.967, 0.385});
      put_column(kClassRows, "LN-LR", {0.994, 0.994});
      put_column(kClassRows, "LN-LB", {0.986, 0.979});
      put_column(kClassRows, "LN-LR+LN-LB", {0.998, 0.997});
      break;
    case 4: {
      const std::vector<double> lb = {0.558, 0.558, 4.9e-5, 9.6e-10, 4.5e-8, 6.5e-5, 0.986, 0.979};
      const std::vector<double> lbn = {4.838, 4.838, 2.4e-5, 0.276, 0.276, 2.7e-3, 0.967, 0.959};
      for (std::size_t i = 0; i < kAblationColumns.size(); ++i) {
        m[{"LN-LB", kAblationColumns[i]}] = lb[i];
        m[{"LN-LBN", kAblationColumns[i]}] = lbn[i];
      }
      break;
    }
  }
  return m;
}

std::string cell_file_stem(Task task, A arch) {
  std::string tag(to_string(arch));
  std::replace(tag.begin(), tag.end(), '+', '_');
  return std::string(to_string(task)) + "_" + tag;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("cannot write " + path.string());
}

class CellStore {
 public:
  CellStore(const ReproduceOptions& options) : options_(options), settings_(budget_settings(options.budget)) {}

  const CellResult& get(Task task, A arch) {
    const auto key = std::make_pair(task, arch);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    return memo_.emplace(key, load_or_run(task, arch)).first->second;
  }

 private:
  nlohmann::json cache_key(Task task, A arch) const {
    return {{"task", to_string(task)},
            {"architecture", to_string(arch)},
            {"seed", options_.seed},
            {"budget", to_json(settings_.of(task))}};
  }

  CellResult load_or_run(Task task, A arch) {
    const std::string name = cell_file_stem(task, arch);
    const auto key = cache_key(task, arch);
    std::filesystem::path dir;
    if (!options_.work_dir.empty()) {
      dir = options_.work_dir / "cells";
      std::filesystem::create_directories(dir);
      const auto cached = dir / (name + ".json");
      if (std::filesystem::exists(cached)) {
        std::ifstream in(cached);
        const auto j = nlohmann::json::parse(in, nullptr, false);
        if (!j.is_discarded() && j.contains("key") && j["key"] == key) {
          if (options_.log) options_.log("cell " + name + ": cached");
          return cell_result_from_json(j.at("result"));
        }
      }
    }
    if (options_.log) options_.log("cell " + name + ": training");
    CellRun run = run_cell(task, arch, settings_.of(task), options_.seed);
    if (!dir.empty()) {
      save_checkpoint(run.checkpoint, dir / (name + ".ckpt"));
      if (options_.plot_data) write_text(dir / (name + ".history.csv"), history_csv(run.history));
      write_text(dir / (name + ".json"), nlohmann::json{{"key", key}, {"result", to_json(run.result)}}.dump(2) + "\n");
    }
    if (options_.log) options_.log("cell " + name + ": " + eval_csv_row(run.result.report));
    return run.result;
  }

  const ReproduceOptions& options_;
  BudgetSettings settings_;
  std::map<std::pair<Task, A>, CellResult> memo_;
};

// Values of one model label, keyed by row (Tables 1-3) or column (Table 4).
std::map<std::string, std::optional<double>> model_values(int table, const Column& col, CellStore& store) {
  std::map<std::string, std::optional<double>> v;
  auto regression = [&](const CellResult& c, const std::vector<std::string>& labels) {
    const auto& r = c.report;
    v[labels[0]] = r.mse_id;
    v[labels[1]] = r.mse_conjugated;
    v[labels[2]] = c.task == Task::Invariant ? r.invariance_error : r.equivariance_error;
  };
  auto classification = [&](const CellResult& c, const std::string& acc, const std::string& rot) {
    v[acc] = c.report.accuracy;
    v[rot] = c.rotated_accuracy;
  };
  const auto& [task, arch] = col.cells.front();
  switch (table) {
    case 1: regression(store.get(task, arch), kRegressionRows1); break;
    case 2: regression(store.get(task, arch), kRegressionRows2); break;
    case 3: classification(store.get(task, arch), kClassRows[0], kClassRows[1]); break;
    case 4:
      regression(store.get(col.cells[0].first, col.cells[0].second),
                 {kAblationColumns[0], kAblationColumns[1], kAblationColumns[2]});
      regression(store.get(col.cells[1].first, col.cells[1].second),
                 {kAblationColumns[3], kAblationColumns[4], kAblationColumns[5]});
      classification(store.get(col.cells[2].first, col.cells[2].second), kAblationColumns[6], kAblationColumns[7]);
      break;
  }
  return v;
}

using Values = std::map<std::string, std::map<std::string, std::optional<double>>>;  // model -> label -> value

struct Check {
  std::string criterion;
  std::optional<bool> pass;
};

std::optional<double> lookup(const Values& values, const std::string& model, const std::string& label) {
  const auto m = values.find(model);
  if (m == values.end()) return std::nullopt;
  const auto l = m->second.find(label);
  return l == m->second.end() ? std::nullopt : l->second;
}

// Threshold of one cell, as text plus its verdict; no verdict when a value it
// refers to is missing.
Check check_cell(int table, const std::string& model, const std::string& label, const Values& values) {
  const auto v = lookup(values, model, label);
  const bool mlp = model == "MLP";
  auto below = [&](double bound) { return Check{"< " + format_double(bound), v ? std::optional(*v < bound) : std::nullopt}; };
  auto above = [&](double bound) { return Check{"> " + format_double(bound), v ? std::optional(*v > bound) : std::nullopt}; };
  auto relative_to = [&](const std::string& text, const std::optional<double>& other, auto pred) {
    return Check{text, v && other ? std::optional<bool>(pred(*v, *other)) : std::nullopt};
  };
  auto within_1pct = [](double a, double b) { return std::abs(a - b) <= 0.01 * std::abs(b); };
  auto ten_x = [](double a, double b) { return a >= 10.0 * b; };

  switch (table) {
    case 1:
      if (label == "MSE Id/Id" && model == "LN-LR")
        return relative_to("< MLP", lookup(values, "MLP", label), std::less<double>());
      if (label == "MSE Id/SL(3)")
        return mlp ? relative_to(">= 10x Id/Id", lookup(values, model, "MSE Id/Id"), ten_x)
                   : relative_to("within 1% of Id/Id", lookup(values, model, "MSE Id/Id"), within_1pct);
      if (label == "Invariance Error") return mlp ? above(0.1) : below(1e-3);
      return {};
    case 2:
      if (model == "2LN-LB" && label != "Equivariance Error") return below(1e-5);
      if (label == "MSE Id/Id" && model == "2LN-LR")
        return relative_to("> 2LN-LB", lookup(values, "2LN-LB", label), std::greater<double>());
      if (label == "MSE Id/SL(3)" && mlp)
        return relative_to(">= 10x Id/Id", lookup(values, model, "MSE Id/Id"), ten_x);
      if (label == "Equivariance Error" && !mlp) return below(1e-4);
      return {};
    case 3:
      if (label == "Accuracy") return Check{">= " + format_double(mlp ? 0.9 : 0.95),
                                            v ? std::optional(*v >= (mlp ? 0.9 : 0.95)) : std::nullopt};
      if (mlp) return Check{"<= 0.6", v ? std::optional(*v <= 0.6) : std::nullopt};
      return relative_to("within 0.02 of Accuracy", lookup(values, model, "Accuracy"),
                         [](double a, double b) { return std::abs(a - b) <= 0.02; });
    case 4: {
      if (label == "Inv MSE Id/SL(3)")
        return relative_to("within 1% of Inv MSE Id/Id", lookup(values, model, "Inv MSE Id/Id"), within_1pct);
      if (label == "Invariance Error") return below(1e-3);
      if (label == "Equivariance Error") return below(1e-4);
      if (model == "LN-LB") {
        if (label == "Equiv MSE Id/Id" || label == "Equiv MSE Id/SL(3)") return below(1e-5);
        if (label == "Accuracy") return Check{">= 0.95", v ? std::optional(*v >= 0.95) : std::nullopt};
      } else {
        if (label == "Equiv MSE Id/Id")
          return relative_to(">= 10x LN-LB", lookup(values, "LN-LB", label), ten_x);
        if (label == "Accuracy") return relative_to("< LN-LB", lookup(values, "LN-LB", label), std::less<double>());
      }
      if (label == "Accuracy (Rotated)")
        return relative_to("within 0.02 of Accuracy", lookup(values, model, "Accuracy"),
                           [](double a, double b) { return std::abs(a - b) <= 0.02; });
      return {};
    }
  }
  return {};
}

std::string cell_text(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

std::vector<std::pair<Task, Architecture>> table_cells(int table) {
  std::vector<std::pair<Task, Architecture>> out;
  for (const auto& col : models_of(table))
    for (const auto& c : col.cells) out.push_back(c);
  return out;
}

std::vector<std::string> table_columns(int table) {
  if (table == 4) {
    models_of(4);
    return kAblationColumns;
  }
  std::vector<std::string> out;
  for (const auto& col : models_of(table)) out.push_back(col.label);
  return out;
}

std::string TableResult::grid_csv() const {
  std::ostringstream out;
  out << (table == 4 ? "model" : "metric");
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << rows[r];
    for (std::size_t c = 0; c < columns.size(); ++c) out << ',' << cell_text(cells[r * columns.size() + c].value);
    out << '\n';
  }
  return out.str();
}

std::string TableResult::comparison_csv() const {
  std::ostringstream out;
  out << "table,row,column,value,reference,criterion,pass\n";
  for (const auto& c : cells) {
    out << table << ',' << c.row << ',' << c.column << ',' << cell_text(c.value) << ',' << cell_text(c.reference) << ','
        << c.criterion << ',' << (c.pass ? (*c.pass ? "pass" : "fail") : "") << '\n';
  }
  return out.str();
}

bool TableResult::passed() const {
  return std::all_of(cells.begin(), cells.end(), [](const TableCell& c) { return !c.pass || *c.pass; });
}

TableResult reproduce_table(const ReproduceOptions& options) {
  auto models = models_of(options.table);
  if (!options.only.empty()) {
    for (const auto& name : options.only) {
      if (std::none_of(models.begin(), models.end(), [&](const Column& c) { return c.label == name; }))
        throw ConfigError("table " + std::to_string(options.table) + " has no model '" + name + "'");
    }
    std::erase_if(models, [&](const Column& c) {
      return std::find(options.only.begin(), options.only.end(), c.label) == options.only.end();
    });
  }

  CellStore store(options);
  Values values;
  for (const auto& col : models) values[col.label] = model_values(options.table, col, store);

  TableResult result;
  result.table = options.table;
  std::vector<std::string> labels;
  switch (options.table) {
    case 1: labels = kRegressionRows1; break;
    case 2: labels = kRegressionRows2; break;
    case 3: labels = kClassRows; break;
    default: labels = kAblationColumns; break;
  }
  std::vector<std::string> model_names;
  for (const auto& col : models) model_names.push_back(col.label);
  // Table 4 lists models as rows.
  result.rows = options.table == 4 ? model_names : labels;
  result.columns = options.table == 4 ? labels : model_names;

  const auto reference = reference_values(options.table);
  for (const auto& row : result.rows) {
    for (const auto& column : result.columns) {
      const auto& model = options.table == 4 ? row : column;
      const auto& label = options.table == 4 ? column : row;
      TableCell cell;
      cell.row = row;
      cell.column = column;
      cell.value = lookup(values, model, label);
      if (auto it = reference.find({row, column}); it != reference.end()) cell.reference = it->second;
      const Check check = check_cell(options.table, model, label, values);
      cell.criterion = check.criterion;
      cell.pass = check.pass;
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

}  // namespace lieneurons
