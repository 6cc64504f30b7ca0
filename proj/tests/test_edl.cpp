#include <cmath>

#include <doctest.h>

#include "selfqa/edl.hpp"
#include "selfqa/specialfn.hpp"
#include "selfqa/trainer.hpp"

using namespace selfqa;

namespace {

DirichletParams dirichlet_from(std::vector<double> alpha) {
  std::size_t K = alpha.size();
  Value a = Value::constant(Tensor::vector(std::move(alpha)));
  return DirichletParams{a, sum(a), K};
}

/// Closed-form KL[Dir(alpha) || Dir(1)] computed independently of the
/// library implementation.
double kl_reference(const std::vector<double>& alpha) {
  double S = 0;
  for (double a : alpha) S += a;
  double v = log_multinomial_beta(std::vector<double>(alpha.size(), 1.0)) -
             log_multinomial_beta(alpha);
  for (std::size_t k = 0; k < alpha.size(); ++k)
    v += (alpha[k] - 1.0) * (digamma(alpha[k]) - digamma(S));
  return v;
}

}  // namespace

TEST_CASE("bayes risk closed forms") {
  CHECK(std::abs(bayes_risk_loss(dirichlet_from({1, 1, 1}), 0).scalar() - 1.5) <
        1e-12);
  CHECK(std::abs(bayes_risk_loss(dirichlet_from({2, 1, 1}), 0).scalar() -
                 5.0 / 6.0) < 1e-12);
  // psi(S) - psi(alpha_t) directly
  DirichletParams p = dirichlet_from({3.5, 1.25, 2.0, 1.0});
  CHECK(bayes_risk_loss(p, 2).scalar() ==
        doctest::Approx(digamma(7.75) - digamma(2.0)).epsilon(1e-12));
}

TEST_CASE("kl regularizer matches the independent closed form") {
  for (auto alpha : {std::vector<double>{1, 1, 1},
                     std::vector<double>{2, 1, 1},
                     std::vector<double>{5.5, 1.2, 3.3, 7.0},
                     std::vector<double>{1.01, 1.0}}) {
    double got = edl_kl_regularizer(dirichlet_from(alpha)).scalar();
    CHECK(got == doctest::Approx(kl_reference(alpha)).epsilon(1e-10));
  }
  // KL to itself is zero at the uniform prior
  CHECK(std::abs(edl_kl_regularizer(dirichlet_from({1, 1, 1, 1})).scalar()) <
        1e-12);
}

TEST_CASE("vanilla relu evidence truncates at zero") {
  Value z = Value::constant(Tensor::vector({2.0, -3.0, 0.5}));
  DirichletParams p = vanilla_relu_evidence(z);
  CHECK(p.alpha.tensor()[0] == doctest::Approx(3.0));
  CHECK(p.alpha.tensor()[1] == doctest::Approx(1.0));  // negative -> no evidence
  CHECK(p.alpha.tensor()[2] == doctest::Approx(1.5));
  CHECK(p.strength.scalar() == doctest::Approx(5.5));
}

TEST_CASE("decoupled evidence: direction on simplex, magnitude positive") {
  RngStream rng(3);
  EdlHead head(4, rng, 0.1);
  Value z = Value::constant(Tensor::vector({1.0, -2.0, 0.3, 4.0}));
  DecoupledEvidence ev = decouple_evidence(z, head);
  double s = 0;
  for (double d : ev.direction.tensor().data) {
    CHECK(d > 0.0);
    s += d;
  }
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ev.magnitude.scalar() > 0.0);

  DirichletParams p = to_dirichlet(ev);
  CHECK(p.K == 4);
  double alpha_sum = 0;
  for (double a : p.alpha.tensor().data) {
    CHECK(a >= 1.0);
    alpha_sum += a;
  }
  CHECK(p.strength.scalar() == doctest::Approx(alpha_sum).epsilon(1e-12));
}

TEST_CASE("magnitude is clamped, not overflowed, at extreme logits") {
  RngStream rng(7);
  EdlHead head(3, rng, 1.0);
  Value z = Value::constant(Tensor::vector({1e3, -1e3, 1e3}));
  DecoupledEvidence ev = decouple_evidence(z, head);
  CHECK(std::isfinite(ev.magnitude.scalar()));
  CHECK(ev.magnitude.scalar() <= kMagnitudeCap);
}

TEST_CASE("uncertainty lies in (0,1] and detaches from the graph") {
  std::vector<DirichletParams> per_pos;
  per_pos.push_back(dirichlet_from({1, 1, 1}));      // u = 1 exactly
  per_pos.push_back(dirichlet_from({10, 5, 3}));     // u = 3/18
  UncertaintyReport r = uncertainty(per_pos);
  CHECK(r.per_position[0] == doctest::Approx(1.0));
  CHECK(r.per_position[1] == doctest::Approx(3.0 / 18.0));
  CHECK(r.aggregate == doctest::Approx(0.5 * (1.0 + 3.0 / 18.0)));
  for (double u : r.per_position) {
    CHECK(u > 0.0);
    CHECK(u <= 1.0);
  }
}

TEST_CASE("edl_answer_pass is finite and grades per evidence mode") {
  RngStream rng(11);
  EdlHead head(6, rng, 0.05);
  Tensor logits = Tensor::zeros({3, 6});
  RngStream lr(21);
  for (double& v : logits.data) v = 2.0 * lr.normal();
  Value z = Value::constant(logits);
  std::vector<int> targets = {1, 4, 0};

  for (const char* mode : {"decoupled", "relu", "softmax"}) {
    EdlPass pass = edl_answer_pass(z, head, targets, mode);
    CHECK(std::isfinite(pass.l_vqa_edl.scalar()));
    CHECK(std::isfinite(pass.l_reg_edl.scalar()));
    CHECK(pass.l_reg_edl.scalar() >= -1e-12);
    CHECK(pass.u.aggregate > 0.0);
    CHECK(pass.u.aggregate <= 1.0);
  }
  // only relu mode truncates logits
  CHECK(edl_answer_pass(z, head, targets, "relu").zeroed_frac > 0.0);
  CHECK(edl_answer_pass(z, head, targets, "decoupled").zeroed_frac == 0.0);
}
