#pragma once

// Regression and classification datasets over sl(3), adjoint-augmented test
// variants, batching, and the LN-DATA-v1 file format.

#include "lieneurons/lie_algebra.hpp"
#include "lieneurons/tensor.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lieneurons {

enum class Task { Invariant, Equivariant, Platonic };
enum class TargetKind { Scalar, Algebra, Label };

std::string_view to_string(Task task);
Task parse_task(std::string_view tag);  // "inv"/"invariant", "equiv"/"equivariant", "platonic"
TargetKind target_kind_of(Task task);

inline constexpr const char* kSolidNames[3] = {"tetrahedron", "octahedron", "icosahedron"};

struct DatasetRecord {
  std::size_t set_size = 1;
  std::size_t channels = 1;
  // set_size * K * channels coefficients, laid out [n][k][c] like one sample of
  // a feature batch.
  std::vector<double> inputs;
  double scalar_target = 0.0;
  std::vector<double> algebra_target;
  int label = -1;
  // Group element the inputs were conjugated by, for augmented sets.
  std::optional<Matrix> conjugator;
  std::optional<std::size_t> source_index;

  Vector input(std::size_t n, std::size_t c, std::size_t K) const;
  void set_input(std::size_t n, std::size_t c, const Vector& coeffs);
};

struct Dataset {
  Task task = Task::Invariant;
  std::string algebra = "sl3";
  std::size_t dim = 8;
  std::size_t channels = 2;
  std::uint64_t seed = 0;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<DatasetRecord> records;

  TargetKind target_kind() const { return target_kind_of(task); }
  std::size_t size() const { return records.size(); }
  std::size_t max_set_size() const;
};

// ---- regression targets ---------------------------------------------------

/// sin(tr XY) + cos(tr YY) - tr(YY)^3 / 2 + det(XY) + exp(tr XX), X = x^, Y = y^.
double target_invariant(const Vector& x, const Vector& y);
/// vee([[X, Y], Y] + [Y, X]).
Vector target_equivariant(const Vector& x, const Vector& y);

struct RegressionConfig {
  Task task = Task::Invariant;
  std::size_t n_samples = 10000;
  std::uint64_t seed = 0;
  double scale = 1.0;
  // Samples with |tr XX| or |tr YY| above this bound are redrawn.
  double trace_bound = 4.0;
};

/// Inputs are [X, Y] as two channels of a single set element (K x 2 x 1).
Dataset gen_regression_set(const RegressionConfig& config);

/// n_actions conjugators drawn with sample_group(rng, scale).
std::vector<GroupElement> sample_actions(std::size_t n_actions, std::uint64_t seed, double scale = 0.5);

/// Every record conjugated by every action; targets stay untransformed and
/// the conjugator plus source index are stored. Size = |base| * |actions|.
Dataset conjugate_dataset(const Dataset& base, const std::vector<GroupElement>& actions);
Dataset gen_conjugated_testset(const Dataset& base, std::size_t n_actions, std::uint64_t seed, double scale = 0.5);

// ---- batching -------------------------------------------------------------

enum class Padding {
  Repeat,  // cycle the set elements; exact for max pooling
  Zero,
};

struct Batch {
  Tensor inputs;                // [B, N, K, C]
  Tensor targets;               // [B, 1] scalar or [B, K] algebra; undefined for labels
  std::vector<int> labels;      // classification only
};

/// Stacks the records at `indices`. Sets shorter than `set_size` (0 = the longest in the slice) are padded:
/// Repeat cycles the elements, Zero appends zeros.
Batch make_batch(const Dataset& data, std::span<const std::size_t> indices, Padding padding,
                 std::size_t set_size = 0);

// ---- files ----------------------------------------------------------------

inline constexpr std::string_view kDatasetMagic = "LN-DATA-v1";

enum class DatasetEncoding { Binary, Json };

/// One JSON header line, then per record either a little-endian 64-bit binary
/// block or (Json encoding) one JSON line.
std::string serialize_dataset(const Dataset& data, DatasetEncoding encoding = DatasetEncoding::Binary);
Dataset parse_dataset(std::string_view bytes);
void write_dataset(const Dataset& data, const std::filesystem::path& path,
                   DatasetEncoding encoding = DatasetEncoding::Binary);
Dataset read_dataset(const std::filesystem::path& path);

/// Hex SHA-256 of a byte string / file.
std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);

}  // namespace lieneurons
