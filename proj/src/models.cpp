#include "lieneurons/models.hpp"

#include "lieneurons/errors.hpp"

#include <cmath>

namespace lieneurons {
namespace {

enum class BlockKind { Relu, Bracket, BracketNoResidual };

std::vector<BlockKind> blocks_of(Architecture arch) {
  using B = BlockKind;
  switch (arch) {
    case Architecture::LnLr: return {B::Relu};
    case Architecture::LnLb: return {B::Bracket};
    case Architecture::LnLrLnLb: return {B::Relu, B::Bracket};
    case Architecture::TwoLnLr: return {B::Relu, B::Relu};
    case Architecture::TwoLnLb: return {B::Bracket, B::Bracket};
    case Architecture::TwoLnLrTwoLnLb: return {B::Relu, B::Relu, B::Bracket, B::Bracket};
    case Architecture::LnLbn: return {B::BracketNoResidual};
    case Architecture::Mlp: return {};
  }
  return {};
}

struct ArchName {
  Architecture arch;
  std::string_view tag;
};

constexpr ArchName kArchNames[] = {
    {Architecture::LnLr, "LN-LR"},       {Architecture::LnLb, "LN-LB"},
    {Architecture::LnLrLnLb, "LN-LR+LN-LB"}, {Architecture::TwoLnLr, "2LN-LR"},
    {Architecture::TwoLnLb, "2LN-LB"},   {Architecture::TwoLnLrTwoLnLb, "2LN-LR+2LN-LB"},
    {Architecture::LnLbn, "LN-LBN"},
    {Architecture::Mlp, "MLP"},
};

std::string block_prefix(std::size_t i) { return "block" + std::to_string(i) + "."; }

}  // namespace

std::string_view to_string(Architecture arch) {
  for (const auto& a : kArchNames)
    if (a.arch == arch) return a.tag;
  return "?";
}

std::string_view to_string(Head head) {
  switch (head) {
    case Head::InvariantScalar: return "invariant-scalar";
    case Head::EquivariantAlgebra: return "equivariant-algebra";
    case Head::Classifier: return "classifier-3way";
  }
  return "?";
}

Architecture parse_architecture(std::string_view tag) {
  for (const auto& a : kArchNames)
    if (a.tag == tag) return a.arch;
  throw ConfigError("unknown architecture '" + std::string(tag) + "'");
}

Head parse_head(std::string_view tag) {
  for (Head h : {Head::InvariantScalar, Head::EquivariantAlgebra, Head::Classifier})
    if (to_string(h) == tag) return h;
  throw ConfigError("unknown head '" + std::string(tag) + "'");
}

void ModelSpec::validate() const {
  if (hidden < 1 || input_channels < 1 || set_size < 1) {
    throw ConfigError("model spec: hidden, input_channels and set_size must be >= 1");
  }
  if (!(leaky_alpha >= 0.0 && leaky_alpha < 1.0)) throw ConfigError("model spec: leaky_alpha must lie in [0, 1)");
  using A = Architecture;
  bool ok = false;
  switch (head) {
    case Head::InvariantScalar:
    case Head::Classifier:
      ok = architecture == A::Mlp || architecture == A::LnLr || architecture == A::LnLb ||
           architecture == A::LnLrLnLb || architecture == A::LnLbn;
      break;
    case Head::EquivariantAlgebra:
      // A second bracket-only block would vanish identically: with two input
      // channels every first-block feature is a multiple of [x1, x2].
      ok = architecture == A::Mlp || architecture == A::TwoLnLr || architecture == A::TwoLnLb ||
           architecture == A::TwoLnLrTwoLnLb || architecture == A::LnLbn;
      break;
  }
  if (!ok) {
    throw ConfigError("model spec: architecture " + std::string(to_string(architecture)) +
                      " is not used with head " + std::string(to_string(head)));
  }
}

nlohmann::json to_json(const ModelSpec& spec) {
  return {{"architecture", to_string(spec.architecture)},
          {"head", to_string(spec.head)},
          {"hidden", spec.hidden},
          {"algebra", spec.algebra},
          {"input_channels", spec.input_channels},
          {"set_size", spec.set_size},
          {"leaky_alpha", spec.leaky_alpha},
          {"share_relu_direction", spec.share_relu_direction}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  try {
    ModelSpec spec;
    spec.architecture = parse_architecture(j.at("architecture").get<std::string>());
    spec.head = parse_head(j.at("head").get<std::string>());
    spec.hidden = j.value("hidden", spec.hidden);
    spec.algebra = j.value("algebra", spec.algebra);
    spec.input_channels = j.value("input_channels", spec.input_channels);
    spec.set_size = j.value("set_size", spec.set_size);
    spec.leaky_alpha = j.value("leaky_alpha", spec.leaky_alpha);
    spec.share_relu_direction = j.value("share_relu_direction", spec.share_relu_direction);
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
}

std::size_t Model::output_dim() const {
  switch (spec_.head) {
    case Head::InvariantScalar: return 1;
    case Head::EquivariantAlgebra: return static_cast<std::size_t>(algebra_->dim());
    case Head::Classifier: return 3;
  }
  return 0;
}

Tensor& Model::add_parameter(std::string name, Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = uniform(rng);
  params_.push_back({std::move(name), Tensor::parameter(std::move(shape), std::move(values))});
  return params_.back().value;
}

const Tensor& Model::parameter(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.value;
  throw ArgumentError("model has no parameter '" + std::string(name) + "'");
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void Model::load_parameters(const std::vector<NamedParameter>& values) {
  if (values.size() != params_.size()) throw ConfigError("parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].name != params_[i].name || values[i].value.shape() != params_[i].value.shape()) {
      throw ConfigError("parameter mismatch at '" + values[i].name + "' (expected '" + params_[i].name + "' " +
                        shape_string(params_[i].value.shape()) + ")");
    }
    auto dst = params_[i].value.mutable_data();
    auto src = values[i].value.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

Model build_model(const ModelSpec& spec, Rng& rng) {
  spec.validate();
  Model m;
  m.spec_ = spec;
  m.algebra_ = find_algebra(spec.algebra);
  const std::size_t K = static_cast<std::size_t>(m.algebra_->dim());
  const std::size_t H = spec.hidden;

  if (spec.architecture == Architecture::Mlp) {
    const std::size_t in = K * spec.input_channels * spec.set_size;
    const std::size_t out = m.output_dim();
    m.add_parameter("fc0.W", {in, H}, in, rng);
    m.add_parameter("fc0.b", {H}, in, rng);
    m.add_parameter("fc1.W", {H, H}, H, rng);
    m.add_parameter("fc1.b", {H}, H, rng);
    m.add_parameter("fc2.W", {H, out}, H, rng);
    m.add_parameter("fc2.b", {out}, H, rng);
    return m;
  }

  const auto blocks = blocks_of(spec.architecture);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::size_t in = i == 0 ? spec.input_channels : H;
    const auto prefix = block_prefix(i);
    m.add_parameter(prefix + "linear.W", {in, H}, in, rng);
    if (blocks[i] == BlockKind::Relu) {
      m.add_parameter(prefix + "relu.U", {H, spec.share_relu_direction ? 1 : H}, H, rng);
    } else {
      m.add_parameter(prefix + "bracket.U", {H, H}, H, rng);
      m.add_parameter(prefix + "bracket.V", {H, H}, H, rng);
    }
  }
  switch (spec.head) {
    case Head::InvariantScalar:
      m.add_parameter("head.W", {H, 1}, H, rng);
      m.add_parameter("head.b", {1}, H, rng);
      break;
    case Head::EquivariantAlgebra:
      m.add_parameter("head.W", {H, 1}, H, rng);
      break;
    case Head::Classifier:
      m.add_parameter("pool.W", {H, H}, H, rng);
      m.add_parameter("head.W", {H, 3}, H, rng);
      m.add_parameter("head.b", {3}, H, rng);
      break;
  }
  return m;
}

Tensor Model::ln_stack(const Tensor& input) const {
  AlgebraFeature x(input, *algebra_);
  const auto blocks = blocks_of(spec_.architecture);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto prefix = block_prefix(i);
    x = ln_linear(x, parameter(prefix + "linear.W"));
    switch (blocks[i]) {
      case BlockKind::Relu:
        x = spec_.leaky_alpha > 0.0
                ? ln_leaky_relu(x, parameter(prefix + "relu.U"), spec_.leaky_alpha, spec_.share_relu_direction)
                : ln_relu(x, parameter(prefix + "relu.U"), spec_.share_relu_direction);
        break;
      case BlockKind::Bracket:
      case BlockKind::BracketNoResidual:
        x = ln_bracket(x, parameter(prefix + "bracket.U"), parameter(prefix + "bracket.V"),
                       blocks[i] == BlockKind::Bracket);
        break;
    }
  }

  const std::size_t B = x.batch();
  switch (spec_.head) {
    case Head::InvariantScalar: {
      const Tensor inv = reduce_mean(ln_invariant(x), kSetAxis);
      const Tensor flat = reshape(inv, {B, spec_.hidden});
      return add(matmul(flat, parameter("head.W")), parameter("head.b"));
    }
    case Head::EquivariantAlgebra: {
      const AlgebraFeature y = ln_linear(x, parameter("head.W"));
      const Tensor pooled = reduce_mean(y.tensor(), kSetAxis);
      return reshape(pooled, {B, y.dim()});
    }
    case Head::Classifier: {
      const AlgebraFeature pooled = ln_max_pool(x, parameter("pool.W"));
      const Tensor flat = reshape(ln_invariant(pooled), {B, spec_.hidden});
      return add(matmul(flat, parameter("head.W")), parameter("head.b"));
    }
  }
  throw ConfigError("unknown head");
}

Tensor Model::mlp_forward(const Tensor& input) const {
  if (input.rank() != 4 || input.dim(kSetAxis) != spec_.set_size ||
      input.dim(kAlgebraAxis) != static_cast<std::size_t>(algebra_->dim()) ||
      input.dim(kChannelAxis) != spec_.input_channels) {
    throw ArgumentError("MLP expects input [B, " + std::to_string(spec_.set_size) + ", " +
                        std::to_string(algebra_->dim()) + ", " + std::to_string(spec_.input_channels) +
                        "], got " + shape_string(input.shape()));
  }
  const std::size_t B = input.dim(0);
  Tensor h = reshape(input, {B, input.numel() / B});
  h = relu(add(matmul(h, parameter("fc0.W")), parameter("fc0.b")));
  h = relu(add(matmul(h, parameter("fc1.W")), parameter("fc1.b")));
  return add(matmul(h, parameter("fc2.W")), parameter("fc2.b"));
}

Tensor Model::forward(const Tensor& input) const {
  return spec_.architecture == Architecture::Mlp ? mlp_forward(input) : ln_stack(input);
}

Model build_invariant_regressor(ModelSpec spec, Rng& rng) {
  spec.head = Head::InvariantScalar;
  return build_model(spec, rng);
}

Model build_equivariant_regressor(ModelSpec spec, Rng& rng) {
  spec.head = Head::EquivariantAlgebra;
  return build_model(spec, rng);
}

Model build_classifier(ModelSpec spec, Rng& rng) {
  spec.head = Head::Classifier;
  return build_model(spec, rng);
}

Model build_mlp_baseline(std::size_t input_dim, Head head, Rng& rng, std::size_t hidden, const std::string& algebra) {
  ModelSpec spec;
  spec.architecture = Architecture::Mlp;
  spec.head = head;
  spec.hidden = hidden;
  spec.algebra = algebra;
  const auto K = static_cast<std::size_t>(find_algebra(algebra)->dim());
  if (input_dim == 0 || input_dim % K != 0) {
    throw ConfigError("MLP input_dim must be a positive multiple of the algebra dimension");
  }
  // Regression inputs are K x 2 x 1; classification inputs are K x 1 x N.
  if (head == Head::Classifier) {
    spec.input_channels = 1;
    spec.set_size = input_dim / K;
  } else {
    spec.input_channels = input_dim / K;
    spec.set_size = 1;
  }
  return build_model(spec, rng);
}

}  // namespace lieneurons
