#include "lieneurons/layers.hpp"

#include "lieneurons/errors.hpp"

namespace lieneurons {
namespace {

void check_weight(const Tensor& W, std::size_t rows, std::size_t cols, const char* layer, const char* name) {
  if (!W.defined() || W.rank() != 2 || W.dim(0) != rows || (cols != 0 && W.dim(1) != cols)) {
    throw ArgumentError(std::string(layer) + ": weight " + name + " must be [" + std::to_string(rows) + ", " +
                        (cols ? std::to_string(cols) : std::string("*")) + "], got " +
                        (W.defined() ? shape_string(W.shape()) : std::string("undefined")));
  }
}

}  // namespace

AlgebraFeature::AlgebraFeature(Tensor tensor, const LieAlgebra& algebra)
    : tensor_(std::move(tensor)), algebra_(&algebra) {
  if (!tensor_.defined() || tensor_.rank() != 4) {
    throw ArgumentError("algebra feature must be a [B, N, K, C] tensor");
  }
  if (tensor_.dim(kAlgebraAxis) != static_cast<std::size_t>(algebra.dim())) {
    throw ArgumentError("algebra feature: K = " + std::to_string(tensor_.dim(kAlgebraAxis)) + " but '" +
                        algebra.name() + "' has dimension " + std::to_string(algebra.dim()));
  }
  if (tensor_.numel() == 0) throw ArgumentError("algebra feature: empty batch, set or channel axis");
}

AlgebraFeature AlgebraFeature::transformed(const Matrix& adjoint) const {
  const auto K = static_cast<Eigen::Index>(dim());
  if (adjoint.rows() != K || adjoint.cols() != K) throw ArgumentError("transformed: adjoint must be K x K");
  std::vector<double> m(static_cast<std::size_t>(K * K));
  for (Eigen::Index r = 0; r < K; ++r)
    for (Eigen::Index c = 0; c < K; ++c) m[static_cast<std::size_t>(r * K + c)] = adjoint(r, c);
  const auto k = static_cast<std::size_t>(K);
  return {contract_axis(Tensor::from({k, k}, std::move(m)), tensor_, kAlgebraAxis), *algebra_};
}

AlgebraFeature ln_linear(const AlgebraFeature& x, const Tensor& W) {
  check_weight(W, x.channels(), 0, "ln_linear", "W");
  return {matmul(x.tensor(), W), x.algebra()};
}

AlgebraFeature ln_relu(const AlgebraFeature& x, const Tensor& U, bool share_direction) {
  check_weight(U, x.channels(), share_direction ? 1 : x.channels(), "ln_relu", "U");
  Tensor d = matmul(x.tensor(), U);
  if (share_direction && x.channels() != 1) d = broadcast_to(d, x.tensor().shape());
  // relu(B(x, d)) is 0 exactly on the pass-through branch B(x, d) <= 0.
  const Tensor gain = relu(bilinear(x.tensor(), x.algebra().killing_gram(), d, kAlgebraAxis));
  return {add(x.tensor(), mul(gain, d)), x.algebra()};
}

AlgebraFeature ln_leaky_relu(const AlgebraFeature& x, const Tensor& U, double alpha, bool share_direction) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("ln_leaky_relu: alpha must lie in [0, 1]");
  const AlgebraFeature r = ln_relu(x, U, share_direction);
  return {add(scale(x.tensor(), alpha), scale(r.tensor(), 1.0 - alpha)), x.algebra()};
}

std::vector<BilinearTerm> bracket_terms(const LieAlgebra& algebra) {
  std::vector<BilinearTerm> terms;
  for (const auto& t : algebra.structure_terms()) terms.push_back({t.i, t.j, t.k, t.c});
  return terms;
}

AlgebraFeature ln_bracket(const AlgebraFeature& x, const Tensor& U, const Tensor& V, bool residual) {
  check_weight(U, x.channels(), x.channels(), "ln_bracket", "U");
  check_weight(V, x.channels(), x.channels(), "ln_bracket", "V");
  const Tensor u = matmul(x.tensor(), U);
  const Tensor v = matmul(x.tensor(), V);
  const auto terms = bracket_terms(x.algebra());
  Tensor br = bilinear_map(u, v, terms, x.dim(), kAlgebraAxis);
  return {residual ? add(x.tensor(), br) : br, x.algebra()};
}

AlgebraFeature ln_max_pool(const AlgebraFeature& x, const Tensor& W) {
  check_weight(W, x.channels(), x.channels(), "ln_max_pool", "W");
  const Tensor directions = matmul(x.tensor(), W);
  const Tensor score = bilinear(directions, x.algebra().killing_gram(), x.tensor(), kAlgebraAxis);
  const IndexTensor best = argmax(score, kSetAxis);
  return {gather(x.tensor(), kSetAxis, best), x.algebra()};
}

AlgebraFeature mean_pool(const AlgebraFeature& x) { return {reduce_mean(x.tensor(), kSetAxis), x.algebra()}; }

Tensor ln_invariant(const AlgebraFeature& x) {
  return bilinear(x.tensor(), x.algebra().killing_gram(), x.tensor(), kAlgebraAxis);
}

}  // namespace lieneurons
