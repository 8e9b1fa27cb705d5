#pragma once

// Adjoint-equivariant layers on Lie algebra features.
//
// A feature batch is a tensor of shape [B, N, K, C]: batch, set element,
// algebra coordinate, channel. Every learnable weight mixes channels only, so
// the adjoint action (left multiplication by Adm_a on the K axis) commutes with
// the linear parts; the nonlinear parts are built from the Killing form
// (adjoint-invariant) and the bracket (adjoint-equivariant).

#include "lieneurons/lie_algebra.hpp"
#include "lieneurons/tensor.hpp"

namespace lieneurons {

inline constexpr std::size_t kBatchAxis = 0;
inline constexpr std::size_t kSetAxis = 1;
inline constexpr std::size_t kAlgebraAxis = 2;
inline constexpr std::size_t kChannelAxis = 3;

class AlgebraFeature {
 public:
  /// Throws ArgumentError unless `tensor` is [B, N, K, C] with K == algebra.dim()
  /// and B, N, C >= 1.
  AlgebraFeature(Tensor tensor, const LieAlgebra& algebra);

  const Tensor& tensor() const { return tensor_; }
  const LieAlgebra& algebra() const { return *algebra_; }
  std::size_t batch() const { return tensor_.dim(kBatchAxis); }
  std::size_t set_size() const { return tensor_.dim(kSetAxis); }
  std::size_t dim() const { return tensor_.dim(kAlgebraAxis); }
  std::size_t channels() const { return tensor_.dim(kChannelAxis); }

  /// Applies a K x K coordinate matrix (typically Adm_a) to every (b, n, c) slice.
  AlgebraFeature transformed(const Matrix& adjoint) const;

 private:
  Tensor tensor_;
  const LieAlgebra* algebra_;
};

/// x' = x W per set element, W: [C, C'], no bias.
AlgebraFeature ln_linear(const AlgebraFeature& x, const Tensor& W);

/// Killing-form ReLU: with d = x U, each channel passes through unchanged when
/// B(x, d) <= 0 and becomes x + B(x, d) d otherwise. U is [C, C], or [C, 1]
/// when `share_direction` (one direction for all channels).
AlgebraFeature ln_relu(const AlgebraFeature& x, const Tensor& U, bool share_direction = false);

/// alpha x + (1 - alpha) ln_relu(x); alpha must lie in [0, 1].
AlgebraFeature ln_leaky_relu(const AlgebraFeature& x, const Tensor& U, double alpha,
                             bool share_direction = false);

/// [(x U)^, (x V)^]^v per channel, plus x when `residual`. U, V: [C, C].
AlgebraFeature ln_bracket(const AlgebraFeature& x, const Tensor& U, const Tensor& V, bool residual = true);

/// Per channel c, keeps the set element n maximizing B(x_n[c] W, x_n[c]);
/// ties go to the lowest n. W: [C, C]. Output set size 1.
AlgebraFeature ln_max_pool(const AlgebraFeature& x, const Tensor& W);

AlgebraFeature mean_pool(const AlgebraFeature& x);

/// B(x, x) per (b, n, c): shape [B, N, 1, C].
Tensor ln_invariant(const AlgebraFeature& x);

/// Structure constants of an algebra as sparse bilinear-map terms.
std::vector<BilinearTerm> bracket_terms(const LieAlgebra& algebra);

}  // namespace lieneurons
