#pragma once

// Composed architectures: invariant regressor, equivariant regressor, Platonic
// classifier, and the flattened MLP baseline.

#include "lieneurons/datasets.hpp"
#include "lieneurons/layers.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lieneurons {

enum class Architecture {
  LnLr,            // LN-LR
  LnLb,            // LN-LB
  LnLrLnLb,        // LN-LR+LN-LB
  TwoLnLr,         // 2LN-LR
  TwoLnLb,         // 2LN-LB
  TwoLnLrTwoLnLb,  // 2LN-LR+2LN-LB
  LnLbn,           // LN-LBN (bracket without residual)
  Mlp,
};

enum class Head { InvariantScalar, EquivariantAlgebra, Classifier };

std::string_view to_string(Architecture arch);
std::string_view to_string(Head head);
Architecture parse_architecture(std::string_view tag);
Head parse_head(std::string_view tag);

struct ModelSpec {
  Architecture architecture = Architecture::LnLr;
  Head head = Head::InvariantScalar;
  std::size_t hidden = 256;
  std::string algebra = "sl3";
  // Channels of the input feature (2 for the regression tasks, 1 for the
  // classifier).
  std::size_t input_channels = 2;
  // Set size the MLP flattens; LN models accept any N.
  std::size_t set_size = 1;
  // 0 gives the plain Killing ReLU.
  double leaky_alpha = 0.0;
  bool share_relu_direction = false;

  /// Throws ConfigError for combinations outside the experiment grid.
  void validate() const;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

struct NamedParameter {
  std::string name;
  Tensor value;
};

class Model {
 public:
  const ModelSpec& spec() const { return spec_; }
  const LieAlgebra& algebra() const { return *algebra_; }
  bool is_equivariant() const { return spec_.architecture != Architecture::Mlp; }
  Padding padding() const { return is_equivariant() ? Padding::Repeat : Padding::Zero; }
  /// N the model requires (0 = any).
  std::size_t fixed_set_size() const { return is_equivariant() ? 0 : spec_.set_size; }
  std::size_t output_dim() const;

  /// input [B, N, K, C] -> [B, 1] (invariant), [B, K] (equivariant) or [B, 3] (classifier).
  Tensor forward(const Tensor& input) const;

  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  const Tensor& parameter(std::string_view name) const;

  /// Replaces parameter values (same names, same shapes); ConfigError otherwise.
  void load_parameters(const std::vector<NamedParameter>& values);

  friend Model build_model(const ModelSpec& spec, Rng& rng);

 private:
  Model() = default;
  Tensor& add_parameter(std::string name, Shape shape, std::size_t fan_in, Rng& rng);
  Tensor ln_stack(const Tensor& input) const;
  Tensor mlp_forward(const Tensor& input) const;

  ModelSpec spec_;
  std::shared_ptr<const LieAlgebra> algebra_;
  std::vector<NamedParameter> params_;
};

/// Weights ~ uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Model build_model(const ModelSpec& spec, Rng& rng);
Model build_invariant_regressor(ModelSpec spec, Rng& rng);
Model build_equivariant_regressor(ModelSpec spec, Rng& rng);
Model build_classifier(ModelSpec spec, Rng& rng);
/// flatten -> linear(input_dim, 256) -> relu -> linear(256, 256) -> relu -> linear(256, out).
/// input_dim must equal K * C * N of the data it will see.
Model build_mlp_baseline(std::size_t input_dim, Head head, Rng& rng, std::size_t hidden = 256,
                         const std::string& algebra = "sl3");

// ---- checkpoints ----------------------------------------------------------

inline constexpr std::string_view kCheckpointMagic = "LN-CKPT-v1";

struct ModelCheckpoint {
  ModelSpec spec;
  std::vector<NamedParameter> parameters;
  std::uint64_t seed = 0;
  nlohmann::json metadata = nlohmann::json::object();
};

ModelCheckpoint make_checkpoint(const Model& model, std::uint64_t seed, nlohmann::json metadata = nlohmann::json::object());
Model model_from_checkpoint(const ModelCheckpoint& checkpoint);

/// Magic line, one JSON header line, then little-endian float64 weights.
std::string serialize_checkpoint(const ModelCheckpoint& checkpoint);
ModelCheckpoint parse_checkpoint(std::string_view bytes);
void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lieneurons
