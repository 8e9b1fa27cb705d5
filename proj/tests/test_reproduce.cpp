#include "lieneurons/errors.hpp"
#include "lieneurons/reproduce.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace lieneurons;
namespace fs = std::filesystem;

namespace {

TaskBudget tiny(Task task) {
  TaskBudget b = budget_settings(Budget::Quick).of(task);
  b.n_train = task == Task::Platonic ? 4 : 64;
  b.n_test = task == Task::Platonic ? 2 : 32;
  b.n_actions = 2;
  b.epochs = 1;
  b.batch_size = 32;
  b.ln_hidden = 4;
  b.mlp_hidden = 8;
  return b;
}

}  // namespace

TEST(Budgets, TagsAndSettings) {
  EXPECT_EQ(parse_budget("quick"), Budget::Quick);
  EXPECT_EQ(parse_budget("full"), Budget::Full);
  EXPECT_EQ(to_string(Budget::Full), "full");
  EXPECT_THROW(parse_budget("medium"), ConfigError);
  const auto full = budget_settings(Budget::Full);
  EXPECT_EQ(full.invariant.n_train, 10000u);
  EXPECT_EQ(full.equivariant.n_actions, 500u);
  EXPECT_EQ(full.platonic.n_actions, 500u);
  const auto quick = budget_settings(Budget::Quick);
  EXPECT_LT(quick.invariant.n_train, full.invariant.n_train);
}

TEST(Tables, Layouts) {
  EXPECT_EQ(table_columns(2), (std::vector<std::string>{"MLP", "2LN-LR", "2LN-LB", "2LN-LR+2LN-LB"}));
  EXPECT_EQ(table_columns(1).size(), 4u);
  EXPECT_EQ(table_columns(3).size(), 4u);
  EXPECT_EQ(table_columns(4).size(), 8u);
  EXPECT_EQ(table_cells(2).size(), 4u);
  const auto t4 = table_cells(4);
  EXPECT_EQ(t4.size(), 6u);
  EXPECT_NE(std::find(t4.begin(), t4.end(), std::pair{Task::Equivariant, Architecture::LnLbn}), t4.end());
  EXPECT_THROW(table_cells(5), ConfigError);
}

TEST(Tables, CsvFormatting) {
  TableResult t;
  t.table = 2;
  t.rows = {"r"};
  t.columns = {"a", "b"};
  t.cells = {{"r", "a", 0.5, 0.25, "< 1", true}, {"r", "b", std::nullopt, std::nullopt, "", std::nullopt}};
  EXPECT_EQ(t.grid_csv(), "metric,a,b\nr,0.5,\n");
  EXPECT_EQ(t.comparison_csv(), "table,row,column,value,reference,criterion,pass\n2,r,a,0.5,0.25,< 1,pass\n2,r,b,,,,\n");
  EXPECT_TRUE(t.passed());
  t.cells[1].pass = false;
  EXPECT_FALSE(t.passed());
}

TEST(Cells, JsonRoundTrip) {
  CellResult c;
  c.task = Task::Platonic;
  c.architecture = Architecture::LnLrLnLb;
  c.report.task = "platonic";
  c.report.accuracy = 0.75;
  c.rotated_accuracy = 0.5;
  c.parameter_count = 123;
  const auto j = to_json(c);
  EXPECT_EQ(to_json(cell_result_from_json(j)), j);
}

TEST(Cells, TinyRunsAreDeterministic) {
  for (auto [task, arch] : std::vector<std::pair<Task, Architecture>>{
           {Task::Invariant, Architecture::LnLr}, {Task::Equivariant, Architecture::Mlp}, {Task::Platonic, Architecture::LnLb}}) {
    const auto a = run_cell(task, arch, tiny(task), 3), b = run_cell(task, arch, tiny(task), 3);
    EXPECT_EQ(to_json(a.result), to_json(b.result));
    EXPECT_EQ(serialize_checkpoint(a.checkpoint), serialize_checkpoint(b.checkpoint));
    EXPECT_EQ(a.history.size(), 1u);
    if (task == Task::Platonic) EXPECT_TRUE(a.result.rotated_accuracy.has_value());
  }
}

TEST(Reproduce, UnknownModelRejected) {
  ReproduceOptions o;
  o.table = 1;
  o.only = {"LN-NOPE"};
  EXPECT_THROW(reproduce_table(o), ConfigError);
  o.only.clear();
  o.table = 7;
  EXPECT_THROW(reproduce_table(o), ConfigError);
}
