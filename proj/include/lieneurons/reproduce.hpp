#pragma once

// Experiment grids: trains and evaluates every cell of a results table and
// writes the grid plus a side-by-side with the published numbers.

#include "lieneurons/metrics.hpp"
#include "lieneurons/models.hpp"
#include "lieneurons/train.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lieneurons {

enum class Budget { Quick, Full };

std::string_view to_string(Budget budget);
Budget parse_budget(std::string_view tag);  // "quick" or "full"

struct TaskBudget {
  std::size_t n_train = 0;     // samples (classification: per class)
  std::size_t n_test = 0;      // samples (classification: per class)
  std::size_t n_actions = 0;   // conjugators (classification: camera rotations)
  std::size_t epochs = 0;
  std::size_t batch_size = 256;
  std::size_t ln_hidden = 0;
  std::size_t mlp_hidden = 0;
  double ln_learning_rate = 1e-3;
  double mlp_learning_rate = 1e-3;
};

struct BudgetSettings {
  TaskBudget invariant;
  TaskBudget equivariant;
  TaskBudget platonic;

  const TaskBudget& of(Task task) const;
};

BudgetSettings budget_settings(Budget budget);
nlohmann::json to_json(const TaskBudget& b);

struct CellResult {
  Task task = Task::Invariant;
  Architecture architecture = Architecture::LnLr;
  EvalReport report;
  std::optional<double> rotated_accuracy;  // classification only
  std::size_t parameter_count = 0;
};

nlohmann::json to_json(const CellResult& cell);
CellResult cell_result_from_json(const nlohmann::json& j);

struct CellRun {
  CellResult result;
  ModelCheckpoint checkpoint;
  std::vector<EpochRecord> history;
};

/// Generates the task's data, trains one model on it and evaluates the final
/// weights. Depends only on its arguments.
CellRun run_cell(Task task, Architecture arch, const TaskBudget& budget, std::uint64_t seed);

/// Tables 1-4 are the invariant, equivariant, classification and ablation grids.
struct TableCell {
  std::string row;
  std::string column;
  std::optional<double> value;
  std::optional<double> reference;  // published value, when there is one
  std::string criterion;      // empty when the cell has no threshold
  std::optional<bool> pass;
};

struct TableResult {
  int table = 0;
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  std::vector<TableCell> cells;  // row-major

  /// row label, then one value per column.
  std::string grid_csv() const;
  /// table,row,column,value,reference,criterion,pass per cell.
  std::string comparison_csv() const;
  bool passed() const;  // every thresholded cell passes
};

/// Cells each table needs, as (task, architecture).
std::vector<std::pair<Task, Architecture>> table_cells(int table);
/// Column labels of a table (models, or metrics for Table 4).
std::vector<std::string> table_columns(int table);

struct ReproduceOptions {
  int table = 1;
  Budget budget = Budget::Quick;
  std::uint64_t seed = 0;
  // Cell results, checkpoints and per-epoch curves go under work_dir/cells; a
  // cached cell with matching settings is reused. Empty: nothing is stored.
  std::filesystem::path work_dir;
  bool plot_data = false;
  // Restricts the grid to these models; empty keeps all.
  std::vector<std::string> only;
  std::function<void(const std::string&)> log;
};

/// Throws ConfigError for an unknown table or model.
TableResult reproduce_table(const ReproduceOptions& options);

}  // namespace lieneurons
