#include "lieneurons/datasets.hpp"

#include "lieneurons/errors.hpp"

#include <algorithm>
#include <cmath>

namespace lieneurons {

std::string_view to_string(Task task) {
  switch (task) {
    case Task::Invariant: return "invariant";
    case Task::Equivariant: return "equivariant";
    case Task::Platonic: return "platonic";
  }
  return "?";
}

Task parse_task(std::string_view tag) {
  if (tag == "inv" || tag == "invariant") return Task::Invariant;
  if (tag == "equiv" || tag == "equivariant") return Task::Equivariant;
  if (tag == "platonic") return Task::Platonic;
  throw ConfigError("unknown task '" + std::string(tag) + "' (expected inv, equiv or platonic)");
}

TargetKind target_kind_of(Task task) {
  switch (task) {
    case Task::Invariant: return TargetKind::Scalar;
    case Task::Equivariant: return TargetKind::Algebra;
    case Task::Platonic: return TargetKind::Label;
  }
  return TargetKind::Scalar;
}

Vector DatasetRecord::input(std::size_t n, std::size_t c, std::size_t K) const {
  if (n >= set_size || c >= channels || inputs.size() != set_size * K * channels) {
    throw ArgumentError("record input index out of range");
  }
  Vector v(static_cast<Eigen::Index>(K));
  for (std::size_t k = 0; k < K; ++k) v(static_cast<Eigen::Index>(k)) = inputs[(n * K + k) * channels + c];
  return v;
}

void DatasetRecord::set_input(std::size_t n, std::size_t c, const Vector& coeffs) {
  const auto K = static_cast<std::size_t>(coeffs.size());
  if (n >= set_size || c >= channels) throw ArgumentError("record input index out of range");
  if (inputs.size() != set_size * K * channels) inputs.assign(set_size * K * channels, 0.0);
  for (std::size_t k = 0; k < K; ++k) inputs[(n * K + k) * channels + c] = coeffs(static_cast<Eigen::Index>(k));
}

std::size_t Dataset::max_set_size() const {
  std::size_t n = 0;
  for (const auto& r : records) n = std::max(n, r.set_size);
  return n;
}

double target_invariant(const Vector& x, const Vector& y) {
  const auto& g = sl3();
  const Matrix X = g.hat(x);
  const Matrix Y = g.hat(y);
  const double xy = (X * Y).trace();
  const double yy = (Y * Y).trace();
  const double xx = (X * X).trace();
  return std::sin(xy) + std::cos(yy) - yy * yy * yy / 2.0 + (X * Y).determinant() + std::exp(xx);
}

Vector target_equivariant(const Vector& x, const Vector& y) {
  const auto& g = sl3();
  const Matrix X = g.hat(x);
  const Matrix Y = g.hat(y);
  return g.vee(bracket(bracket(X, Y), Y) + bracket(Y, X));
}

Dataset gen_regression_set(const RegressionConfig& config) {
  if (config.n_samples < 1) throw ArgumentError("gen_regression_set: n_samples must be >= 1");
  if (config.task == Task::Platonic) throw ArgumentError("gen_regression_set: not a regression task");
  if (!(config.scale > 0.0)) throw ArgumentError("gen_regression_set: scale must be > 0");
  const auto& g = sl3();
  Dataset data;
  data.task = config.task;
  data.algebra = g.name();
  data.dim = static_cast<std::size_t>(g.dim());
  data.channels = 2;
  data.seed = config.seed;
  data.metadata = {{"generator", "regression"},
                   {"n_samples", config.n_samples},
                   {"scale", config.scale},
                   {"trace_bound", config.trace_bound}};

  Rng rng(config.seed);
  data.records.reserve(config.n_samples);
  std::size_t rejected = 0;
  while (data.records.size() < config.n_samples) {
    const Vector x = sample_algebra(rng, config.scale, g);
    const Vector y = sample_algebra(rng, config.scale, g);
    const Matrix X = g.hat(x), Y = g.hat(y);
    if (std::abs((X * X).trace()) > config.trace_bound || std::abs((Y * Y).trace()) > config.trace_bound) {
      if (++rejected > 1000 * config.n_samples + 1000) {
        throw GenerationError("gen_regression_set: trace bound rejects nearly every sample");
      }
      continue;
    }
    DatasetRecord r;
    r.set_size = 1;
    r.channels = 2;
    r.set_input(0, 0, x);
    r.set_input(0, 1, y);
    if (config.task == Task::Invariant) {
      r.scalar_target = target_invariant(x, y);
      if (!std::isfinite(r.scalar_target)) continue;
    } else {
      const Vector h = target_equivariant(x, y);
      if (!h.allFinite()) continue;
      r.algebra_target.assign(h.data(), h.data() + h.size());
    }
    data.records.push_back(std::move(r));
  }
  data.metadata["rejected"] = rejected;
  return data;
}

std::vector<GroupElement> sample_actions(std::size_t n_actions, std::uint64_t seed, double scale) {
  if (n_actions < 1) throw ArgumentError("sample_actions: n_actions must be >= 1");
  Rng rng(seed);
  std::vector<GroupElement> out;
  out.reserve(n_actions);
  for (std::size_t i = 0; i < n_actions; ++i) out.push_back(sample_group(rng, scale, sl3()));
  return out;
}

Dataset conjugate_dataset(const Dataset& base, const std::vector<GroupElement>& actions) {
  if (actions.empty()) throw ArgumentError("conjugate_dataset: need at least one action");
  const auto alg = find_algebra(base.algebra);
  const std::size_t K = base.dim;
  Dataset out = base;
  out.records.clear();
  out.records.reserve(base.records.size() * actions.size());
  out.metadata["conjugated"] = true;
  out.metadata["n_actions"] = actions.size();
  // Record-major: all actions of record 0, then record 1, ...
  for (std::size_t i = 0; i < base.records.size(); ++i) {
    const auto& src = base.records[i];
    for (const auto& a : actions) {
      const Matrix& Ad = a.adjoint(*alg);
      DatasetRecord r = src;
      for (std::size_t n = 0; n < src.set_size; ++n)
        for (std::size_t c = 0; c < src.channels; ++c) r.set_input(n, c, Ad * src.input(n, c, K));
      r.conjugator = a.matrix();
      r.source_index = i;
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

Dataset gen_conjugated_testset(const Dataset& base, std::size_t n_actions, std::uint64_t seed, double scale) {
  auto out = conjugate_dataset(base, sample_actions(n_actions, seed, scale));
  out.metadata["action_seed"] = seed;
  out.metadata["action_scale"] = scale;
  return out;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices, Padding padding, std::size_t set_size) {
  if (indices.empty()) throw ArgumentError("make_batch: empty index list");
  const std::size_t K = data.dim;
  const std::size_t C = data.channels;
  std::size_t N = set_size;
  if (N == 0)
    for (auto i : indices) N = std::max(N, data.records.at(i).set_size);

  const std::size_t B = indices.size();
  std::vector<double> x(B * N * K * C, 0.0);
  const auto kind = data.target_kind();
  std::vector<double> t;
  Batch batch;
  if (kind == TargetKind::Scalar) t.reserve(B);
  if (kind == TargetKind::Algebra) t.reserve(B * K);

  for (std::size_t b = 0; b < B; ++b) {
    const auto& r = data.records.at(indices[b]);
    if (r.set_size > N) {
      throw ConfigError("make_batch: record has set size " + std::to_string(r.set_size) + " > " + std::to_string(N));
    }
    if (r.channels != C || r.inputs.size() != r.set_size * K * C) throw ConfigError("make_batch: record layout mismatch");
    const std::size_t per = K * C;
    double* dst = x.data() + b * N * per;
    for (std::size_t n = 0; n < N; ++n) {
      if (n >= r.set_size && padding == Padding::Zero) break;
      const std::size_t src_n = n % r.set_size;
      std::copy_n(r.inputs.data() + src_n * per, per, dst + n * per);
    }
    switch (kind) {
      case TargetKind::Scalar: t.push_back(r.scalar_target); break;
      case TargetKind::Algebra:
        if (r.algebra_target.size() != K) throw ConfigError("make_batch: algebra target has wrong length");
        t.insert(t.end(), r.algebra_target.begin(), r.algebra_target.end());
        break;
      case TargetKind::Label: batch.labels.push_back(r.label); break;
    }
  }
  batch.inputs = Tensor::from({B, N, K, C}, std::move(x));
  if (kind == TargetKind::Scalar) batch.targets = Tensor::from({B, 1}, std::move(t));
  if (kind == TargetKind::Algebra) batch.targets = Tensor::from({B, K}, std::move(t));
  return batch;
}

}  // namespace lieneurons
