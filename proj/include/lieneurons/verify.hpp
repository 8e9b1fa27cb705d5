#pragma once

// Randomized property suites: algebra identities ("core"), layer
// equivariance ("layers") and finite-difference gradients ("grad").

#include "lieneurons/datasets.hpp"
#include "lieneurons/models.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace lieneurons {

struct PropertyCheck {
  std::string name;
  std::string algebra;  // empty when not algebra-specific
  std::size_t trials = 0;
  double max_error = 0.0;
  double tolerance = 0.0;

  bool passed() const { return max_error < tolerance; }
};

struct SuiteReport {
  std::string suite;
  std::vector<PropertyCheck> checks;

  bool passed() const;
  double max_error() const;
  /// One line per check plus a summary line.
  std::string text() const;
};

struct VerifyOptions {
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
  // Negative control: adds a constant algebra vector after ln_linear, which
  // must make the layers suite fail.
  bool inject_linear_bias = false;
};

SuiteReport core_suite(const VerifyOptions& options = {});
SuiteReport layers_suite(const VerifyOptions& options = {});
SuiteReport grad_suite(const VerifyOptions& options = {});
/// "core", "layers" or "grad"; ConfigError otherwise.
SuiteReport run_suite(std::string_view name, const VerifyOptions& options = {});

struct ModelGradCheck {
  double max_error = 0.0;
  std::size_t compared = 0;
  std::size_t kinks = 0;  // entries left out: the stencil straddles a kink
};

/// Finite-difference check of the model's loss on `batch` with respect to the
/// input and every parameter (at most `max_entries` randomly chosen entries
/// each): max of |g - fd| / (|g| + |fd| + 1e-6 (1 + |L|)), the last term
/// absorbing difference round-off where a gradient vanishes. An entry failing
/// plain central differences is either a kink (excluded) or is compared again
/// against the Richardson estimate from steps eps and eps / 2.
ModelGradCheck model_grad_check(Model& model, const Batch& batch, double eps, std::size_t max_entries, Rng& rng);

/// Relative commutation error |a - b| / max(|a|, |b|) (0 when both vanish).
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace lieneurons
