#include "lieneurons/verify.hpp"

#include "lieneurons/errors.hpp"
#include "lieneurons/layers.hpp"
#include "lieneurons/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>

namespace lieneurons {
namespace {

constexpr double kEps = 1e-5;

class Tracker {
 public:
  Tracker(SuiteReport& report, std::string name, std::string algebra, double tolerance)
      : report_(report), check_{std::move(name), std::move(algebra), 0, 0.0, tolerance} {}
  ~Tracker() { report_.checks.push_back(check_); }
  void record(double error) {
    ++check_.trials;
    // NaN counts as a failure.
    if (!(error <= check_.max_error)) check_.max_error = std::isnan(error) ? INFINITY : error;
  }

 private:
  SuiteReport& report_;
  PropertyCheck check_;
};

std::vector<double> random_values(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

Tensor random_tensor(Shape shape, Rng& rng) {
  auto n = shape_numel(shape);
  return Tensor::from(std::move(shape), random_values(n, rng));
}

// A group element exp(xi^) with |xi| uniform in (0.05, 0.5].
GroupElement random_conjugator(Rng& rng, const LieAlgebra& alg) {
  Vector xi = sample_algebra(rng, 1.0, alg);
  std::uniform_real_distribution<double> radius(0.05, 0.5);
  xi *= radius(rng) / std::max(xi.norm(), 1e-12);
  return exp_map(alg.hat(xi));
}

double rel(const Matrix& a, const Matrix& b) {
  const double denom = std::max(a.norm(), b.norm());
  return denom == 0.0 ? 0.0 : (a - b).norm() / denom;
}

std::vector<const LieAlgebra*> registered() { return {&sl3(), &so3()}; }

// ---- core -----------------------------------------------------------------

void core_checks(SuiteReport& report, const LieAlgebra& g, std::size_t trials, Rng& rng) {
  const int K = g.dim();
  {
    Tracker t(report, "hat_vee_roundtrip", g.name(), 1e-12);
    for (std::size_t i = 0; i < trials; ++i) {
      const Vector x = sample_algebra(rng, 1.0, g);
      t.record((g.vee(g.hat(x)) - x).cwiseAbs().maxCoeff());
    }
  }
  {
    Tracker closure(report, "bracket_closure", g.name(), 1e-10);
    Tracker jacobi(report, "jacobi_identity", g.name(), 1e-12);
    Tracker ad(report, "ad_matrix_matches_bracket", g.name(), 1e-10);
    for (std::size_t i = 0; i < trials; ++i) {
      const Vector x = sample_algebra(rng, 1.0, g), y = sample_algebra(rng, 1.0, g), z = sample_algebra(rng, 1.0, g);
      const Matrix X = g.hat(x), Y = g.hat(y), Z = g.hat(z);
      closure.record(g.projection_residual(bracket(X, Y)));
      jacobi.record((bracket(X, bracket(Y, Z)) + bracket(Y, bracket(Z, X)) + bracket(Z, bracket(X, Y))).cwiseAbs().maxCoeff());
      ad.record((g.ad_matrix(x) * y - g.vee(bracket(X, Y))).cwiseAbs().maxCoeff());
    }
  }
  {
    // Gram entries against a fresh brute-force trace of ad_i ad_j.
    Tracker t(report, "killing_gram_equals_trace_ad_ad", g.name(), 1e-10);
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) {
        const Matrix ai = g.ad_matrix(Vector::Unit(K, i));
        const Matrix aj = g.ad_matrix(Vector::Unit(K, j));
        t.record(std::abs((ai * aj).trace() - g.killing_gram()(i, j)));
      }
  }
  if (g.name() == "sl3") {
    Tracker t(report, "killing_equals_6_tr_xy", g.name(), 1e-10);
    for (std::size_t i = 0; i < trials; ++i) {
      const Vector x = sample_algebra(rng, 1.0, g), y = sample_algebra(rng, 1.0, g);
      const double oracle = 6.0 * (g.hat(x) * g.hat(y)).trace();
      t.record(std::abs(g.killing_form(x, y) - oracle) / (1.0 + std::abs(oracle)));
    }
  }
  if (g.name() == "so3") {
    {
      Tracker t(report, "killing_gram_is_minus_2_identity", g.name(), 1e-10);
      t.record((g.killing_gram() + 2.0 * Matrix::Identity(K, K)).cwiseAbs().maxCoeff());
    }
    Tracker t(report, "adjoint_of_rotation_is_rotation", g.name(), 1e-10);
    for (std::size_t i = 0; i < trials; ++i) {
      const GroupElement R = sample_group(rng, 1.0, g);
      t.record((adjoint_matrix(R, g) - R.matrix()).cwiseAbs().maxCoeff());
    }
  }
  {
    Tracker t(report, "semisimple", g.name(), 0.5);
    t.record(check_semisimple(g).semisimple ? 0.0 : 1.0);
  }
  {
    Tracker hom(report, "adjoint_homomorphism", g.name(), 1e-9);
    Tracker inv(report, "adjoint_of_inverse", g.name(), 1e-9);
    Tracker kill(report, "killing_invariance", g.name(), 1e-8);
    Tracker br(report, "bracket_equivariance", g.name(), 1e-9);
    for (std::size_t i = 0; i < trials; ++i) {
      const GroupElement a = sample_group(rng, 0.5, g), b = sample_group(rng, 0.5, g);
      const Matrix Aa = adjoint_matrix(a, g);
      hom.record(rel(adjoint_matrix(a * b, g), Aa * adjoint_matrix(b, g)));
      inv.record(rel(adjoint_matrix(a.inverted(), g), Aa.inverse()));
      const Vector x = sample_algebra(rng, 1.0, g), y = sample_algebra(rng, 1.0, g);
      const double bxy = g.killing_form(x, y);
      kill.record(std::abs(g.killing_form(Aa * x, Aa * y) - bxy) / (1.0 + std::abs(bxy)));
      br.record(rel(Aa * g.vee(bracket(g.hat(x), g.hat(y))), g.vee(bracket(g.hat(Aa * x), g.hat(Aa * y)))));
    }
  }
  {
    Tracker round(report, "log_exp_roundtrip", g.name(), 1e-8);
    Tracker det(report, "exp_unit_determinant", g.name(), 1e-9);
    for (std::size_t i = 0; i < trials; ++i) {
      Vector xi = sample_algebra(rng, 1.0, g);
      xi *= std::uniform_real_distribution<double>(0.0, 0.5)(rng) / std::max(xi.norm(), 1e-12);
      const Matrix X = g.hat(xi);
      const GroupElement a = exp_map(X);
      round.record((log_map(a) - X).cwiseAbs().maxCoeff());
      det.record(std::abs(a.matrix().determinant() - 1.0));
    }
  }
}

// ---- layers ---------------------------------------------------------------

struct LayerCase {
  std::string name;
  // Returns the layer output for a [1, N, K, C] input; weights are drawn once
  // per trial by `draw`.
  std::function<Tensor(const AlgebraFeature&, const std::vector<Tensor>&)> apply;
  std::function<std::vector<Tensor>(std::size_t C, Rng&)> draw;
  // Distance of (x, weights) from the set where the layer is not
  // differentiable; empty for smooth layers.
  std::function<double(const AlgebraFeature&, const std::vector<Tensor>&)> margin = {};
};

double gate_margin(const AlgebraFeature& x, const Tensor& U, bool shared) {
  NoGradGuard no_grad;
  Tensor d = matmul(x.tensor(), U);
  if (shared && x.channels() != 1) d = broadcast_to(d, x.tensor().shape());
  double m = std::numeric_limits<double>::infinity();
  const Tensor gate = bilinear(x.tensor(), x.algebra().killing_gram(), d, kAlgebraAxis);
  for (double v : gate.data()) m = std::min(m, std::abs(v));
  return m;
}

// Gap between the two best scores of every pooled slot.
double pool_margin(const AlgebraFeature& x, const Tensor& W) {
  NoGradGuard no_grad;
  const Tensor score = bilinear(matmul(x.tensor(), W), x.algebra().killing_gram(), x.tensor(), kAlgebraAxis);
  const auto v = score.data();
  const std::size_t B = score.dim(0), N = score.dim(1), R = score.numel() / (B * N);
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t r = 0; r < R; ++r) {
      std::vector<double> col(N);
      for (std::size_t n = 0; n < N; ++n) col[n] = v[(b * N + n) * R + r];
      std::sort(col.begin(), col.end(), std::greater<>());
      if (N > 1) m = std::min(m, col[0] - col[1]);
    }
  return m;
}

std::vector<LayerCase> layer_cases(bool inject_bias) {
  auto square_weights = [](std::size_t count) {
    return [count](std::size_t C, Rng& rng) {
      std::vector<Tensor> w;
      for (std::size_t i = 0; i < count; ++i) w.push_back(random_tensor({C, C}, rng));
      return w;
    };
  };
  auto relu_margin = [](const AlgebraFeature& x, const std::vector<Tensor>& w) { return gate_margin(x, w[0], false); };
  return {
      {"ln_linear",
       [inject_bias](const AlgebraFeature& x, const std::vector<Tensor>& w) {
         Tensor y = ln_linear(x, w[0]).tensor();
         if (inject_bias) y = add(y, Tensor::full({x.dim(), 1}, 0.25));
         return y;
       },
       square_weights(1)},
      {"ln_relu", [](const AlgebraFeature& x, const std::vector<Tensor>& w) { return ln_relu(x, w[0]).tensor(); },
       square_weights(1), relu_margin},
      {"ln_leaky_relu",
       [](const AlgebraFeature& x, const std::vector<Tensor>& w) { return ln_leaky_relu(x, w[0], 0.2).tensor(); },
       square_weights(1), relu_margin},
      {"ln_bracket_residual",
       [](const AlgebraFeature& x, const std::vector<Tensor>& w) { return ln_bracket(x, w[0], w[1], true).tensor(); },
       square_weights(2)},
      {"ln_bracket_plain",
       [](const AlgebraFeature& x, const std::vector<Tensor>& w) { return ln_bracket(x, w[0], w[1], false).tensor(); },
       square_weights(2)},
      {"ln_max_pool", [](const AlgebraFeature& x, const std::vector<Tensor>& w) { return ln_max_pool(x, w[0]).tensor(); },
       square_weights(1), [](const AlgebraFeature& x, const std::vector<Tensor>& w) { return pool_margin(x, w[0]); }},
      {"mean_pool", [](const AlgebraFeature& x, const std::vector<Tensor>&) { return mean_pool(x).tensor(); },
       square_weights(0)},
  };
}

void layer_checks(SuiteReport& report, const LieAlgebra& g, const VerifyOptions& options, Rng& rng) {
  constexpr std::size_t N = 3, C = 4;
  const auto K = static_cast<std::size_t>(g.dim());
  NoGradGuard no_grad;
  for (const auto& layer : layer_cases(options.inject_linear_bias)) {
    Tracker t(report, layer.name + "_equivariance", g.name(), 1e-8);
    for (std::size_t trial = 0; trial < options.trials; ++trial) {
      const AlgebraFeature x(random_tensor({1, N, K, C}, rng), g);
      const auto weights = layer.draw(C, rng);
      const Matrix Ad = adjoint_matrix(random_conjugator(rng, g), g);
      const Tensor moved_out = layer.apply(x.transformed(Ad), weights);
      const AlgebraFeature out(layer.apply(x, weights), g);
      t.record(relative_error(moved_out.data(), out.transformed(Ad).tensor().data()));
    }
  }
  Tracker t(report, "ln_invariant_invariance", g.name(), 1e-8);
  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    const AlgebraFeature x(random_tensor({1, N, K, C}, rng), g);
    const Matrix Ad = adjoint_matrix(random_conjugator(rng, g), g);
    const Tensor ia = ln_invariant(x), ib = ln_invariant(x.transformed(Ad));
    const auto a = ia.data(), b = ib.data();
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / (1.0 + std::abs(a[i])));
    t.record(worst);
  }
}

// ---- grad -----------------------------------------------------------------

// Scalar probe: sum(op(x) * r) with fixed random r of the output's shape.
std::function<Tensor(const Tensor&)> weighted(std::function<Tensor(const Tensor&)> op, Rng& rng, const Shape& in) {
  NoGradGuard no_grad;
  const Tensor sample = op(Tensor::zeros(in));
  const Tensor r = random_tensor(sample.shape(), rng);
  return [op = std::move(op), r](const Tensor& x) { return reduce_sum(mul(op(x), r)); };
}

void op_checks(SuiteReport& report, std::size_t trials, Rng& rng) {
  const Matrix G = sl3().killing_gram();
  const auto terms = bracket_terms(sl3());
  using Op = std::function<Tensor(const Tensor&)>;
  struct Case {
    const char* name;
    std::function<Op(Rng&)> make;
    Shape shape;
  };
  const std::vector<Case> cases = {
      {"add", [](Rng& r) { Tensor b = random_tensor({3, 1}, r); return Op([b](const Tensor& x) { return add(x, b); }); }, {3, 4}},
      {"sub", [](Rng& r) { Tensor b = random_tensor({4}, r); return Op([b](const Tensor& x) { return sub(b, x); }); }, {3, 4}},
      {"mul", [](Rng& r) { Tensor b = random_tensor({3, 4}, r); return Op([b](const Tensor& x) { return mul(x, b); }); }, {3, 4}},
      {"mul_self", [](Rng&) { return Op([](const Tensor& x) { return mul(x, x); }); }, {5}},
      {"scale", [](Rng&) { return Op([](const Tensor& x) { return scale(x, -1.7); }); }, {2, 3}},
      {"square", [](Rng&) { return Op([](const Tensor& x) { return square(x); }); }, {2, 3}},
      {"relu", [](Rng&) { return Op([](const Tensor& x) { return relu(x); }); }, {4, 3}},
      {"matmul", [](Rng& r) { Tensor w = random_tensor({3, 5}, r); return Op([w](const Tensor& x) { return matmul(x, w); }); }, {2, 4, 3}},
      {"matmul_weight", [](Rng& r) { Tensor a = random_tensor({2, 4, 3}, r); return Op([a](const Tensor& w) { return matmul(a, w); }); }, {3, 5}},
      {"contract_axis", [](Rng& r) { Tensor m = random_tensor({5, 8}, r); return Op([m](const Tensor& x) { return contract_axis(m, x, 1); }); }, {2, 8, 3}},
      {"bilinear", [G](Rng& r) { Tensor y = random_tensor({2, 8, 3}, r); return Op([y, G](const Tensor& x) { return bilinear(x, G, y, 1); }); }, {2, 8, 3}},
      {"bilinear_self", [G](Rng&) { return Op([G](const Tensor& x) { return bilinear(x, G, x, 1); }); }, {2, 8, 3}},
      {"bilinear_map", [terms](Rng& r) { Tensor v = random_tensor({2, 8, 3}, r); return Op([v, terms](const Tensor& u) { return bilinear_map(u, v, terms, 8, 1); }); }, {2, 8, 3}},
      {"bilinear_map_self", [terms](Rng& r) { Tensor m = random_tensor({3, 3}, r); return Op([m, terms](const Tensor& u) { return bilinear_map(u, matmul(u, m), terms, 8, 1); }); }, {2, 8, 3}},
      {"where", [](Rng& r) {
         std::vector<std::uint8_t> mask(12);
         for (auto& m : mask) m = static_cast<std::uint8_t>(r() & 1u);
         Tensor b = random_tensor({3, 4}, r);
         return Op([mask, b](const Tensor& x) { return where(mask, square(x), mul(x, b)); }); }, {3, 4}},
      {"broadcast_to", [](Rng&) { return Op([](const Tensor& x) { return broadcast_to(x, {2, 3, 4}); }); }, {3, 1}},
      {"reshape", [](Rng&) { return Op([](const Tensor& x) { return reshape(x, {6, 2}); }); }, {3, 4}},
      {"concat", [](Rng& r) { Tensor b = random_tensor({2, 2}, r); return Op([b](const Tensor& x) { return concat({x, b, x}, 1); }); }, {2, 3}},
      {"reduce_sum_axis", [](Rng&) { return Op([](const Tensor& x) { return reduce_sum(x, 1, false); }); }, {2, 3, 4}},
      {"reduce_mean_axis", [](Rng&) { return Op([](const Tensor& x) { return reduce_mean(x, 2); }); }, {2, 3, 4}},
      {"reduce_mean_all", [](Rng&) { return Op([](const Tensor& x) { return reduce_mean(square(x)); }); }, {2, 3}},
      {"gather", [](Rng&) {
         return Op([](const Tensor& x) { return gather(x, 1, argmax(x, 1)); }); }, {2, 5, 3}},
      {"softmax_cross_entropy", [](Rng& r) {
         std::vector<int> labels(4);
         for (auto& l : labels) l = static_cast<int>(r() % 3);
         return Op([labels](const Tensor& x) { return softmax_cross_entropy(x, labels); }); }, {4, 3}},
  };
  for (const auto& c : cases) {
    Tracker t(report, std::string("op_") + c.name, "", 1e-5);
    for (std::size_t trial = 0; trial < trials; ++trial) {
      const Op f = weighted(c.make(rng), rng, c.shape);
      const Tensor x = random_tensor(c.shape, rng);
      t.record(grad_check(f, x, kEps));
    }
  }
}

void layer_grad_checks(SuiteReport& report, const LieAlgebra& g, std::size_t trials, Rng& rng) {
  constexpr std::size_t N = 3, C = 3;
  const auto K = static_cast<std::size_t>(g.dim());
  const Shape in{2, N, K, C};
  // Differences across a gate switch or a pooling tie are meaningless, so draw
  // points that an eps step cannot carry over one.
  constexpr double kMinMargin = 1e-2;
  for (const auto& layer : layer_cases(false)) {
    Tracker t(report, "grad_" + layer.name, g.name(), 1e-5);
    auto smooth = [&](const std::vector<Tensor>& weights) {
      Tensor x = random_tensor(in, rng);
      while (layer.margin && layer.margin(AlgebraFeature(x, g), weights) < kMinMargin) x = random_tensor(in, rng);
      return x;
    };
    for (std::size_t trial = 0; trial < trials; ++trial) {
      const auto weights = layer.draw(C, rng);
      auto op = [&g, &layer, weights](const Tensor& x) { return layer.apply(AlgebraFeature(x, g), weights); };
      t.record(grad_check(weighted(op, rng, in), smooth(weights), kEps));
      // Gradient with respect to each weight. The pooling weight only picks
      // indices and carries no gradient.
      const std::size_t n_weights = layer.name == "ln_max_pool" ? 0 : weights.size();
      for (std::size_t w = 0; w < n_weights; ++w) {
        const Tensor x = smooth(weights);
        auto wop = [&g, &layer, weights, w, x](const Tensor& wt) {
          auto ws = weights;
          ws[w] = wt;
          return layer.apply(AlgebraFeature(x, g), ws);
        };
        t.record(grad_check(weighted(wop, rng, weights[w].shape()), weights[w], kEps));
      }
    }
  }
  {
    Tracker t(report, "grad_ln_relu_shared", g.name(), 1e-5);
    for (std::size_t trial = 0; trial < trials; ++trial) {
      const Tensor U = random_tensor({C, 1}, rng);
      auto op = [&g, U](const Tensor& x) { return ln_relu(AlgebraFeature(x, g), U, true).tensor(); };
      Tensor x = random_tensor(in, rng);
      while (gate_margin(AlgebraFeature(x, g), U, true) < kMinMargin) x = random_tensor(in, rng);
      t.record(grad_check(weighted(op, rng, in), x, kEps));
    }
  }
  Tracker t(report, "grad_ln_invariant", g.name(), 1e-5);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    auto op = [&g](const Tensor& x) { return ln_invariant(AlgebraFeature(x, g)); };
    t.record(grad_check(weighted(op, rng, in), random_tensor(in, rng), kEps));
  }
}

Batch random_batch(const ModelSpec& spec, Rng& rng) {
  const auto K = static_cast<std::size_t>(find_algebra(spec.algebra)->dim());
  constexpr std::size_t B = 3;
  const std::size_t N = spec.architecture == Architecture::Mlp ? spec.set_size : (spec.head == Head::Classifier ? 4 : 1);
  Batch batch;
  batch.inputs = random_tensor({B, N, K, spec.input_channels}, rng);
  switch (spec.head) {
    case Head::InvariantScalar: batch.targets = random_tensor({B, 1}, rng); break;
    case Head::EquivariantAlgebra: batch.targets = random_tensor({B, K}, rng); break;
    case Head::Classifier:
      for (std::size_t b = 0; b < B; ++b) batch.labels.push_back(static_cast<int>(rng() % 3));
      break;
  }
  return batch;
}

Tensor loss_on(const Model& model, const Batch& batch, const Tensor& input) {
  const Tensor out = model.forward(input);
  return batch.labels.empty() ? loss_mse(out, batch.targets) : loss_cross_entropy(out, batch.labels);
}

// Outputs are polynomials of degree up to eight in the input, so unit-scale
// inputs can give a saturated softmax or a loss of 1e6, leaving gradients
// below what differences resolve. Shrink the input until |output| <= 2.
void calibrate_input(const Model& model, Batch& batch) {
  for (int step = 0; step < 40; ++step) {
    double peak = 0.0;
    {
      NoGradGuard no_grad;
      const Tensor out = model.forward(batch.inputs);
      for (double v : out.data()) peak = std::max(peak, std::abs(v));
    }
    if (peak <= 2.0) return;
    batch.inputs = scale(batch.inputs, 0.8);
  }
}

void model_grad_checks(SuiteReport& report, std::size_t trials, Rng& rng) {
  struct Family {
    Head head;
    std::vector<Architecture> archs;
    std::size_t channels;
  };
  using A = Architecture;
  const std::vector<Family> families = {
      {Head::InvariantScalar, {A::Mlp, A::LnLr, A::LnLb, A::LnLrLnLb, A::LnLbn}, 2},
      {Head::EquivariantAlgebra, {A::Mlp, A::TwoLnLr, A::TwoLnLb, A::TwoLnLrTwoLnLb, A::LnLbn}, 2},
      {Head::Classifier, {A::Mlp, A::LnLr, A::LnLb, A::LnLrLnLb, A::LnLbn}, 2},
  };
  for (const auto& fam : families)
    for (auto arch : fam.archs) {
      ModelSpec spec;
      spec.architecture = arch;
      spec.head = fam.head;
      spec.hidden = 5;
      spec.input_channels = fam.channels;
      spec.set_size = arch == A::Mlp && fam.head == Head::Classifier ? 4 : 1;
      Tracker t(report, "grad_model_" + std::string(to_string(arch)) + "_" + std::string(to_string(fam.head)), "sl3",
                1e-4);
      for (std::size_t trial = 0; trial < trials; ++trial) {
        Model model = build_model(spec, rng);
        // A batch sitting on a kink shared by many weights says nothing; redraw.
        ModelGradCheck check;
        for (int attempt = 0; attempt < 4; ++attempt) {
          Batch batch = random_batch(spec, rng);
          calibrate_input(model, batch);
          check = model_grad_check(model, batch, kEps, 64, rng);
          if (check.kinks * 20 <= check.compared) break;
        }
        t.record(check.kinks * 20 <= check.compared ? check.max_error : 1.0);
      }
    }
}

}  // namespace

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("relative_error: length mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

ModelGradCheck model_grad_check(Model& model, const Batch& batch, double eps, std::size_t max_entries, Rng& rng) {
  if (!(eps >= 1e-7 && eps <= 1e-4)) throw ArgumentError("model_grad_check: eps must lie in [1e-7, 1e-4]");
  Tensor input = Tensor::parameter(batch.inputs.shape(),
                                   std::vector<double>(batch.inputs.data().begin(), batch.inputs.data().end()));
  for (auto& p : model.parameters()) p.value.zero_grad();
  const Tensor loss = loss_on(model, batch, input);
  loss.backward();
  const double centre = loss.item();
  // Central differences carry round-off of many ulps of |L| over eps; entries whose
  // gradient vanishes structurally would otherwise compare noise with noise.
  const double floor = 1e-6 * (1.0 + std::abs(centre));

  std::vector<Tensor*> targets{&input};
  for (auto& p : model.parameters()) targets.push_back(&p.value);
  auto value = [&] {
    NoGradGuard no_grad;
    return loss_on(model, batch, input).item();
  };
  double worst = 0.0;
  std::size_t compared = 0, kinks = 0;
  for (Tensor* t : targets) {
    const std::vector<double> analytic(t->grad().begin(), t->grad().end());
    auto w = t->mutable_data();
    std::vector<std::size_t> entries(w.size());
    std::iota(entries.begin(), entries.end(), 0);
    if (t != &input && entries.size() > max_entries) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(max_entries);
    }
    for (auto i : entries) {
      const double orig = w[i];
      w[i] = orig + eps;
      const double up = value();
      w[i] = orig - eps;
      const double down = value();
      w[i] = orig;
      ++compared;
      const double fd = (up - down) / (2.0 * eps);
      const double g = analytic.empty() ? 0.0 : analytic[i];
      auto rel = [&](double estimate) { return std::abs(g - estimate) / (std::abs(g) + std::abs(estimate) + floor); };
      double err = rel(fd);
      if (err > 1e-4) {
        auto at = [&](double h) {
          w[i] = orig + h;
          const double a = value();
          w[i] = orig - h;
          const double b = value();
          w[i] = orig;
          return std::pair{a, b};
        };
        const auto [up2, down2] = at(eps / 2);
        const auto [up4, down4] = at(eps / 4);
        // A ReLU gate or pooling winner switching inside the stencil. For a
        // smooth loss the truncation error shrinks fourfold per halving and the
        // second difference hardly depends on the step; across a kink at
        // distance delta neither holds. Each test is blind at a single delta
        // and the two blind spots differ.
        const double fd2 = (up2 - down2) / eps, fd4 = 2.0 * (up4 - down4) / eps;
        const double fd_noise = 1e-10 * (1.0 + std::abs(centre));
        const bool ratio_off = std::abs((fd - fd2) - 4.0 * (fd2 - fd4)) > 0.5 * std::abs(fd - fd2) + fd_noise;
        auto second = [&](double a, double b, double h) { return (a - 2.0 * centre + b) / (h * h); };
        const double d1 = second(up, down, eps), d2 = second(up2, down2, eps / 2), d4 = second(up4, down4, eps / 4);
        const double noise = 1e-13 * (1.0 + std::abs(centre)) / (eps * eps);
        auto differ = [&](double a, double b) { return std::abs(a - b) > 0.1 * (std::abs(a) + std::abs(b)) + noise; };
        if (ratio_off || differ(d1, d2) || differ(d1, d4)) {
          ++kinks;
          continue;
        }
        // Smooth but strongly curved relative to a small gradient: the O(eps^2)
        // truncation term dominates, Richardson extrapolation removes it.
        err = std::min(err, rel((4.0 * fd2 - fd) / 3.0));
      }
      worst = std::max(worst, err);
    }
  }
  return {worst, compared, kinks};
}

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const PropertyCheck& c) { return c.passed(); });
}

double SuiteReport::max_error() const {
  double worst = 0.0;
  for (const auto& c : checks) worst = std::max(worst, c.max_error);
  return worst;
}

std::string SuiteReport::text() const {
  std::string out;
  char line[256];
  std::size_t failed = 0;
  for (const auto& c : checks) {
    const std::string label = c.algebra.empty() ? c.name : c.name + " [" + c.algebra + "]";
    std::snprintf(line, sizeof line, "%-4s %-58s trials=%-5zu max_error=%.3e tol=%.0e\n", c.passed() ? "ok" : "FAIL",
                  label.c_str(), c.trials, c.max_error, c.tolerance);
    out += line;
    failed += !c.passed();
  }
  std::snprintf(line, sizeof line, "suite %s: %zu checks, %zu failed, max error %.3e\n", suite.c_str(), checks.size(),
                failed, max_error());
  out += line;
  return out;
}

SuiteReport core_suite(const VerifyOptions& options) {
  SuiteReport report{"core", {}};
  Rng rng(options.seed);
  for (const auto* g : registered()) core_checks(report, *g, options.trials, rng);
  return report;
}

SuiteReport layers_suite(const VerifyOptions& options) {
  SuiteReport report{"layers", {}};
  Rng rng(options.seed);
  for (const auto* g : registered()) layer_checks(report, *g, options, rng);
  return report;
}

SuiteReport grad_suite(const VerifyOptions& options) {
  SuiteReport report{"grad", {}};
  Rng rng(options.seed);
  const std::size_t trials = std::clamp<std::size_t>(options.trials, 1, 10);
  op_checks(report, trials, rng);
  for (const auto* g : registered()) layer_grad_checks(report, *g, trials, rng);
  model_grad_checks(report, std::min<std::size_t>(trials, 3), rng);
  return report;
}

SuiteReport run_suite(std::string_view name, const VerifyOptions& options) {
  if (name == "core") return core_suite(options);
  if (name == "layers") return layers_suite(options);
  if (name == "grad") return grad_suite(options);
  throw ConfigError("unknown suite '" + std::string(name) + "' (expected core, layers or grad)");
}

}  // namespace lieneurons
