// lieneurons: data generation, training, evaluation, property suites and
// table reproduction.
//
// Exit codes: 0 success, 1 property violation (or failed table threshold),
// 2 usage, config, file or format error, 3 non-finite training loss.

#include "lieneurons/datasets.hpp"
#include "lieneurons/errors.hpp"
#include "lieneurons/metrics.hpp"
#include "lieneurons/platonic.hpp"
#include "lieneurons/reproduce.hpp"
#include "lieneurons/train.hpp"
#include "lieneurons/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace lieneurons;
using nlohmann::json;

namespace {

constexpr int kOk = 0, kViolation = 1, kUsage = 2, kDiverged = 3;

struct GenDataArgs {
  std::string task;
  fs::path out;
  std::uint64_t seed = 0;
  std::size_t n = 0;       // 0: task default
  std::size_t n_test = 0;  // 0: same as n
  std::size_t n_actions = 0;
  double noise_scale = 0.01;
  std::size_t rotations = 0;
  bool json_encoding = false;
};

json file_entry(const Dataset& data, const fs::path& path, const std::string& role) {
  json e = {{"role", role},
            {"path", path.string()},
            {"records", data.size()},
            {"seed", data.seed},
            {"sha256", file_sha256(path)}};
  if (data.task == Task::Platonic) {
    json per_class = json::object();
    for (const auto& r : data.records) per_class[kSolidNames[r.label]] = r.set_size;
    e["set_size_per_class"] = per_class;
  }
  if (data.metadata.contains("n_actions")) e["n_actions"] = data.metadata["n_actions"];
  if (data.metadata.contains("rejected")) e["rejected"] = data.metadata["rejected"];
  return e;
}

int run_gen_data(const GenDataArgs& a) {
  const Task task = parse_task(a.task);
  const auto encoding = a.json_encoding ? DatasetEncoding::Json : DatasetEncoding::Binary;
  fs::create_directories(a.out);
  json manifest = {{"task", to_string(task)}, {"seed", a.seed}, {"files", json::array()}};
  auto emit = [&](const Dataset& data, const std::string& role) {
    const fs::path path = a.out / (role + ".lnd");
    write_dataset(data, path, encoding);
    manifest["files"].push_back(file_entry(data, path, role));
  };

  if (task == Task::Platonic) {
    PlatonicConfig pc;
    pc.n_per_class = a.n == 0 ? 1000 : a.n;
    pc.noise_scale = a.noise_scale;
    pc.seed = a.seed;
    emit(gen_platonic_set(pc), "train");
    pc.n_per_class = a.n_test == 0 ? pc.n_per_class : a.n_test;
    pc.seed = a.seed + 1;
    emit(gen_platonic_set(pc), "test");
    if (a.rotations > 0) {
      pc.rotations = random_rotations(a.rotations, a.seed + 2);
      emit(gen_platonic_set(pc), "test_rotated");
    }
    manifest["n_per_class"] = a.n == 0 ? 1000 : a.n;
    manifest["noise_scale"] = a.noise_scale;
    manifest["rotations"] = a.rotations;
  } else {
    RegressionConfig rc;
    rc.task = task;
    rc.n_samples = a.n == 0 ? 10000 : a.n;
    rc.seed = a.seed;
    emit(gen_regression_set(rc), "train");
    rc.n_samples = a.n_test == 0 ? rc.n_samples : a.n_test;
    rc.seed = a.seed + 1;
    const Dataset test = gen_regression_set(rc);
    emit(test, "test");
    if (a.n_actions > 0) emit(gen_conjugated_testset(test, a.n_actions, a.seed + 2), "test_conjugated");
    manifest["n_actions"] = a.n_actions;
  }
  std::ofstream(a.out / "manifest.json") << manifest.dump(2) << "\n";
  std::cout << manifest.dump(2) << "\n";
  return kOk;
}

struct TrainArgs {
  fs::path config;
  std::string task = "inv";
  std::optional<std::size_t> epochs, batch_size, hidden;
  std::optional<double> learning_rate;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> architecture, optimizer;
  std::optional<fs::path> train_data, eval_data, checkpoint, plot_data;
  std::optional<fs::path> save_config;
};

Head default_head(Task task) {
  return task == Task::Invariant ? Head::InvariantScalar
         : task == Task::Equivariant ? Head::EquivariantAlgebra
                                     : Head::Classifier;
}

int run_train(const TrainArgs& a) {
  TrainConfig c;
  if (!a.config.empty()) {
    c = load_train_config(a.config);
  } else {
    c.task = parse_task(a.task);
    c.model.head = default_head(c.task);
    if (c.task == Task::Platonic) {
      c.model.input_channels = 1;
      c.model.set_size = 60;
    }
  }
  if (a.epochs) c.epochs = *a.epochs;
  if (a.batch_size) c.batch_size = *a.batch_size;
  if (a.hidden) c.model.hidden = *a.hidden;
  if (a.learning_rate) c.learning_rate = *a.learning_rate;
  if (a.seed) c.seed = *a.seed;
  if (a.architecture) c.model.architecture = parse_architecture(*a.architecture);
  if (a.optimizer) {
    if (*a.optimizer != "adam" && *a.optimizer != "sgd") throw ConfigError("unknown optimizer " + *a.optimizer);
    c.optimizer = *a.optimizer == "adam" ? OptimizerKind::Adam : OptimizerKind::Sgd;
  }
  if (a.train_data) c.train_data = *a.train_data;
  if (a.eval_data) c.eval_data = *a.eval_data;
  if (a.checkpoint) c.checkpoint = *a.checkpoint;
  if (a.plot_data) c.history = *a.plot_data;
  c.validate();
  c.model.validate();
  if (a.save_config) save_train_config(c, *a.save_config);

  std::cout << "config " << to_json(c).dump() << "\n";
  const auto result = train_model(c, [](const EpochRecord& r) {
    std::cout << "epoch " << r.epoch << " train_loss " << format_double(r.train_loss);
    if (r.eval_loss) std::cout << " eval_loss " << format_double(*r.eval_loss);
    if (r.equivariance_check) std::cout << " equivariance_check " << format_double(*r.equivariance_check);
    std::cout << std::endl;
  });
  if (!c.eval_data.empty()) {
    // The same evaluation `eval` runs, so the two agree exactly.
    const Model model = model_from_checkpoint(result.final_checkpoint);
    const EvalReport report = evaluate(model, read_dataset(c.eval_data));
    std::cout << "final " << to_json(report).dump() << "\n";
  }
  if (!c.checkpoint.empty()) std::cout << "checkpoint " << c.checkpoint.string() << "\n";
  return kOk;
}

struct EvalArgs {
  fs::path checkpoint, dataset, report, csv;
  std::size_t n_actions = 0;
  std::uint64_t action_seed = 0;
  double action_scale = 0.5;
};

int run_eval(const EvalArgs& a) {
  for (const auto& p : {a.checkpoint, a.dataset})
    if (!fs::exists(p)) throw ConfigError("file not found: " + p.string());
  const Model model = model_from_checkpoint(load_checkpoint(a.checkpoint));
  const Dataset data = read_dataset(a.dataset);
  std::vector<GroupElement> actions;
  if (a.n_actions > 0) actions = sample_actions(a.n_actions, a.action_seed, a.action_scale);
  const EvalReport report = evaluate(model, data, actions);
  const std::string text = to_json(report).dump(2);
  if (!a.report.empty()) {
    std::ofstream out(a.report);
    if (!out) throw ConfigError("cannot write " + a.report.string());
    out << text << "\n";
  }
  if (!a.csv.empty()) {
    const bool fresh = !fs::exists(a.csv) || fs::file_size(a.csv) == 0;
    std::ofstream out(a.csv, std::ios::app);
    if (!out) throw ConfigError("cannot write " + a.csv.string());
    if (fresh) out << eval_csv_header() << "\n";
    out << eval_csv_row(report) << "\n";
  }
  std::cout << text << "\n" << eval_csv_header() << "\n" << eval_csv_row(report) << "\n";
  return kOk;
}

struct VerifyArgs {
  std::string suite = "all";
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
  bool inject_bias = false;
};

int run_verify(const VerifyArgs& a) {
  VerifyOptions o;
  o.trials = a.trials;
  o.seed = a.seed;
  o.inject_linear_bias = a.inject_bias;
  const std::vector<std::string> suites =
      a.suite == "all" ? std::vector<std::string>{"core", "layers", "grad"} : std::vector<std::string>{a.suite};
  bool ok = true;
  for (const auto& s : suites) {
    const SuiteReport report = run_suite(s, o);
    std::cout << report.text();
    ok = ok && report.passed();
  }
  return ok ? kOk : kViolation;
}

struct ReproduceArgs {
  int table = 1;
  std::string budget = "quick";
  fs::path out = "reproduce";
  std::uint64_t seed = 0;
  std::vector<std::string> models;
  bool plot_data = false;
  bool no_cache = false;
};

int run_reproduce(const ReproduceArgs& a) {
  ReproduceOptions o;
  o.table = a.table;
  o.budget = parse_budget(a.budget);
  o.seed = a.seed;
  o.only = a.models;
  o.plot_data = a.plot_data;
  o.work_dir = a.out;
  if (a.no_cache) fs::remove_all(a.out / "cells");
  o.log = [](const std::string& line) { std::cerr << line << std::endl; };
  fs::create_directories(a.out);
  const TableResult result = reproduce_table(o);
  const std::string stem = "table" + std::to_string(a.table);
  std::ofstream(a.out / (stem + ".csv")) << result.grid_csv();
  std::ofstream(a.out / (stem + "_vs_reference.csv")) << result.comparison_csv();
  std::cout << result.grid_csv() << "\n" << result.comparison_csv();
  std::cout << (result.passed() ? "all thresholds met" : "some thresholds missed") << "\n";
  return result.passed() ? kOk : kViolation;
}

}  // namespace

const CLI::Validator kAtLeastOne(
    [](std::string& v) -> std::string {
      try {
        return std::stod(v) >= 1.0 ? "" : "must be at least 1, got " + v;
      } catch (const std::exception&) {
        return "not a number: " + v;
      }
    },
    "INT>=1");

int main(int argc, char** argv) {
  CLI::App app{"Lie Neurons: adjoint-equivariant layers over semisimple Lie algebras"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate train/test datasets and print a manifest");
  gen_cmd->add_option("--task", gen.task, "inv | equiv | platonic")->required();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Base seed");
  gen_cmd->add_option("--n", gen.n, "Training samples (per class for platonic); default 10000 / 1000")
      ->check(kAtLeastOne);
  gen_cmd->add_option("--n-test", gen.n_test, "Test samples; default --n")->check(kAtLeastOne);
  gen_cmd->add_option("--n-actions", gen.n_actions, "Adjoint actions for a conjugated test set (0: none)");
  gen_cmd->add_option("--noise-scale", gen.noise_scale, "Platonic algebra noise sd")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--rotations", gen.rotations, "Camera rotations for a rotated platonic test set (0: none)");
  gen_cmd->add_flag("--json", gen.json_encoding, "JSON-lines records instead of binary");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file plus overrides");
  train_cmd->add_option("--config", tr.config, "Train config JSON");
  train_cmd->add_option("--task", tr.task, "Task when no config is given");
  train_cmd->add_option("--epochs", tr.epochs)->check(kAtLeastOne);
  train_cmd->add_option("--batch-size", tr.batch_size)->check(kAtLeastOne);
  train_cmd->add_option("--hidden", tr.hidden)->check(kAtLeastOne);
  train_cmd->add_option("--lr", tr.learning_rate)->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_option("--arch", tr.architecture, "MLP, LN-LR, LN-LB, LN-LR+LN-LB, 2LN-LR, 2LN-LB, ...");
  train_cmd->add_option("--optimizer", tr.optimizer, "adam | sgd");
  train_cmd->add_option("--train-data", tr.train_data);
  train_cmd->add_option("--eval-data", tr.eval_data);
  train_cmd->add_option("--checkpoint", tr.checkpoint);
  train_cmd->add_option("--plot-data", tr.plot_data, "Per-epoch CSV");
  train_cmd->add_option("--save-config", tr.save_config, "Write the effective config here");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--dataset", ev.dataset)->required();
  eval_cmd->add_option("--report", ev.report, "EvalReport JSON output");
  eval_cmd->add_option("--csv", ev.csv, "Append the CSV row here");
  eval_cmd->add_option("--n-actions", ev.n_actions, "Adjoint actions for conjugated metrics (0: none)");
  eval_cmd->add_option("--action-seed", ev.action_seed);
  eval_cmd->add_option("--action-scale", ev.action_scale)->check(CLI::PositiveNumber);

  VerifyArgs vf;
  auto* verify_cmd = app.add_subcommand("verify", "Run randomized property suites");
  verify_cmd->add_option("--suite", vf.suite, "core | layers | grad | all")
      ->check(CLI::IsMember({"core", "layers", "grad", "all"}));
  verify_cmd->add_option("--trials", vf.trials)->check(kAtLeastOne);
  verify_cmd->add_option("--seed", vf.seed);
  verify_cmd->add_flag("--inject-linear-bias", vf.inject_bias, "Negative control: must fail the layers suite");

  ReproduceArgs rp;
  auto* rep_cmd = app.add_subcommand("reproduce", "Train and evaluate every cell of a results table");
  rep_cmd->add_option("--table", rp.table)->required()->check(CLI::Range(1, 4));
  rep_cmd->add_option("--budget", rp.budget, "quick | full")->check(CLI::IsMember({"quick", "full"}));
  rep_cmd->add_option("--out", rp.out, "Output directory (cells are cached under out/cells)");
  rep_cmd->add_option("--seed", rp.seed);
  rep_cmd->add_option("--models", rp.models, "Restrict to these models")->delimiter(',');
  rep_cmd->add_flag("--plot-data", rp.plot_data, "Write per-epoch CSV per cell");
  rep_cmd->add_flag("--no-cache", rp.no_cache, "Retrain every cell");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*verify_cmd) return run_verify(vf);
    if (*rep_cmd) return run_reproduce(rp);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kViolation;
  }
  return kUsage;
}
