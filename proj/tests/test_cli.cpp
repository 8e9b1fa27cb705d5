#include <json.hpp>

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;  // stdout and stderr together
};

CliRun cli(const std::string& args) {
  const std::string cmd = std::string(LIENEURONS_CLI) + " " + args + " 2>&1";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json json_after(const std::string& text, const std::string& prefix) {
  const auto at = text.find(prefix);
  if (at == std::string::npos) return nullptr;
  const auto end = text.find('\n', at);
  return nlohmann::json::parse(text.substr(at + prefix.size(), end - at - prefix.size()));
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("ln_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string d(const std::string& leaf) const { return (dir_ / leaf).string(); }
  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenDataIsReproducible) {
  ASSERT_EQ(cli("gen-data --task equiv --n 50 --n-actions 3 --seed 4 --out " + d("a")).code, 0);
  ASSERT_EQ(cli("gen-data --task equiv --n 50 --n-actions 3 --seed 4 --out " + d("b")).code, 0);
  for (const char* f : {"train.lnd", "test.lnd", "test_conjugated.lnd"}) {
    const std::string a = slurp(dir_ / "a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir_ / "b" / f)) << f;
  }
  const auto m = nlohmann::json::parse(slurp(dir_ / "a" / "manifest.json"));
  EXPECT_EQ(m["files"][2]["records"], 150);
}

TEST_F(Cli, GenDataRejectsZeroSamples) {
  const CliRun r = cli("gen-data --task inv --n 0 --out " + d("z"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("--n"), std::string::npos);
}

TEST_F(Cli, PlatonicManifestSetSizes) {
  const CliRun r = cli("gen-data --task platonic --n 2 --n-test 1 --rotations 2 --out " + d("p"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto m = nlohmann::json::parse(slurp(dir_ / "p" / "manifest.json"));
  EXPECT_EQ(m["files"][0]["set_size_per_class"], (nlohmann::json{{"tetrahedron", 12}, {"octahedron", 24}, {"icosahedron", 60}}));
}

TEST_F(Cli, TrainMissingDatasetNamesPath) {
  const CliRun r = cli("train --task inv --epochs 1 --train-data " + d("nope.lnd"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("nope.lnd"), std::string::npos) << r.out;
}

TEST_F(Cli, TrainThenEvalAgree) {
  ASSERT_EQ(cli("gen-data --task inv --n 200 --n-test 100 --n-actions 2 --out " + d("data")).code, 0);
  const CliRun t = cli("train --task inv --epochs 2 --hidden 8 --train-data " + d("data/train.lnd") + " --eval-data " +
                    d("data/test.lnd") + " --checkpoint " + d("m.ckpt"));
  ASSERT_EQ(t.code, 0) << t.out;
  EXPECT_NE(t.out.find("epoch 2 train_loss"), std::string::npos);
  const auto final_report = json_after(t.out, "final ");
  const CliRun e = cli("eval --checkpoint " + d("m.ckpt") + " --dataset " + d("data/test.lnd") + " --report " + d("r.json"));
  ASSERT_EQ(e.code, 0) << e.out;
  const auto report = nlohmann::json::parse(slurp(dir_ / "r.json"));
  EXPECT_EQ(report["mse_id"], final_report["mse_id"]);
  for (const char* key : {"task", "n_samples", "n_actions", "mse_id", "mse_conjugated", "invariance_error",
                          "equivariance_error", "accuracy"})
    EXPECT_TRUE(report.contains(key)) << key;

  // The model is invariant, so conjugating the test inputs leaves the MSE alone.
  const CliRun c = cli("eval --checkpoint " + d("m.ckpt") + " --dataset " + d("data/test_conjugated.lnd") + " --report " +
                    d("c.json"));
  ASSERT_EQ(c.code, 0) << c.out;
  const auto conj = nlohmann::json::parse(slurp(dir_ / "c.json"));
  ASSERT_TRUE(conj["mse_conjugated"].is_number());
  EXPECT_NEAR(conj["mse_conjugated"].get<double>(), report["mse_id"].get<double>(),
              1e-6 * (1.0 + report["mse_id"].get<double>()));
}

TEST_F(Cli, OneEpochWithDefaultsIsQuick) {
  ASSERT_EQ(cli("gen-data --task inv --n 10000 --n-test 100 --out " + d("data")).code, 0);
  const auto t0 = std::chrono::steady_clock::now();
  const CliRun t = cli("train --task inv --epochs 1 --train-data " + d("data/train.lnd"));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ASSERT_EQ(t.code, 0) << t.out;
  EXPECT_LT(secs, 60.0);
}

TEST_F(Cli, EvalCorruptCheckpointIsFormatError) {
  ASSERT_EQ(cli("gen-data --task inv --n 50 --out " + d("data")).code, 0);
  ASSERT_EQ(cli("train --task inv --epochs 1 --hidden 4 --train-data " + d("data/train.lnd") + " --checkpoint " +
                d("m.ckpt"))
                .code,
            0);
  std::string bytes = slurp(dir_ / "m.ckpt");
  bytes[0] = 'Z';
  std::ofstream(dir_ / "m.ckpt", std::ios::binary) << bytes;
  const CliRun r = cli("eval --checkpoint " + d("m.ckpt") + " --dataset " + d("data/test.lnd"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("format error"), std::string::npos) << r.out;
}

TEST_F(Cli, VerifySuites) {
  EXPECT_EQ(cli("verify --suite core --trials 50").code, 0);
  const CliRun layers = cli("verify --suite layers --trials 50");
  EXPECT_EQ(layers.code, 0);
  EXPECT_NE(layers.out.find("16 checks, 0 failed"), std::string::npos) << layers.out;
  const CliRun bad = cli("verify --suite layers --trials 20 --inject-linear-bias");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos) << bad.out;
}

TEST_F(Cli, UnknownSubcommandIsUsageError) { EXPECT_EQ(cli("frobnicate").code, 2); }

TEST_F(Cli, ReproduceTable2Quick) {
  const CliRun r = cli("reproduce --table 2 --budget quick --out " + d("rep"));
  ASSERT_TRUE(r.code == 0 || r.code == 1) << r.out;
  std::istringstream grid(slurp(dir_ / "rep" / "table2.csv"));
  std::vector<std::string> lines;
  for (std::string line; std::getline(grid, line);)
    if (!line.empty()) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);  // header plus three metric rows
  for (const auto& line : lines) EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4) << line;
  EXPECT_EQ(lines[3].rfind("Equivariance Error,", 0), 0u);
  // LN columns of the equivariance row.
  std::istringstream row(lines[3]);
  std::vector<std::string> fields;
  for (std::string f; std::getline(row, f, ',');) fields.push_back(f);
  ASSERT_EQ(fields.size(), 5u);
  for (std::size_t i = 2; i < 5; ++i) EXPECT_LT(std::stod(fields[i]), 1e-4) << fields[i];
  EXPECT_TRUE(fs::exists(dir_ / "rep" / "table2_vs_reference.csv"));
}
