#include "selfqa/edl.hpp"

#include <cmath>
#include <stdexcept>

#include "selfqa/rng.hpp"
#include "selfqa/specialfn.hpp"

namespace selfqa {

EdlHead::EdlHead(std::size_t K, RngStream& rng, double init_scale)
    : weights("edl_head.w", Tensor::zeros({K, 1})),
      bias("edl_head.b", Tensor::zeros({1})) {
  for (double& v : weights.value.data) v = rng.normal() * init_scale;
}

EdlHead::EdlHead(std::size_t K)
    : weights("edl_head.w", Tensor::zeros({K, 1})),
      bias("edl_head.b", Tensor::zeros({1})) {}

DirichletParams vanilla_relu_evidence(const Value& z) {
  if (!z.tensor().all_finite())
    throw std::invalid_argument("vanilla_relu_evidence: non-finite logits");
  Value alpha = add_const(relu(z), 1.0);
  return DirichletParams{alpha, sum(alpha), z.size()};
}

DecoupledEvidence decouple_evidence(const Value& z, EdlHead& head) {
  if (!z.tensor().all_finite())
    throw std::invalid_argument("decouple_evidence: non-finite logits");
  std::size_t K = z.size();
  if (head.weights.value.shape[0] != K)
    throw std::invalid_argument("decouple_evidence: head width mismatch");
  Value direction = softmax_rows(z);
  Value zrow = reshape(z, {1, K});
  Value raw = add(matmul(zrow, Value::leaf(head.weights)), Value::leaf(head.bias));
  Value magnitude = vexp(clamp_max(raw, std::log(kMagnitudeCap)));
  return DecoupledEvidence{direction, magnitude};
}

DirichletParams to_dirichlet(const DecoupledEvidence& ev) {
  Value alpha = add_const(mul(ev.magnitude, ev.direction), 1.0);
  std::size_t K = ev.direction.size();
  Value strength = add_const(ev.magnitude, double(K));
  return DirichletParams{alpha, strength, K};
}

Value bayes_risk_loss(const DirichletParams& params, int target) {
  if (target < 0 || std::size_t(target) >= params.K)
    throw std::out_of_range("bayes_risk_loss: target out of range");
  return sub(digamma_v(params.strength),
             digamma_v(pick(params.alpha, std::size_t(target))));
}

Value edl_kl_regularizer(const DirichletParams& params) {
  // log(Gamma(S) / (Gamma(K) prod Gamma(a_k)))
  //   + sum_k (a_k - 1)(psi(a_k) - psi(S))
  double lg_k = lgamma_pos(double(params.K));
  Value log_ratio = sub(lgamma_v(params.strength),
                        add_const(sum(lgamma_v(params.alpha)), lg_k));
  Value centered = sub(digamma_v(params.alpha), digamma_v(params.strength));
  Value weighted = sum(mul(add_const(params.alpha, -1.0), centered));
  return add(log_ratio, weighted);
}

Value sequence_bayes_risk(const std::vector<DirichletParams>& per_position,
                          const std::vector<int>& answer_tokens) {
  if (per_position.size() != answer_tokens.size() || per_position.empty())
    throw std::invalid_argument("sequence_bayes_risk: length mismatch");
  Value total = bayes_risk_loss(per_position[0], answer_tokens[0]);
  for (std::size_t i = 1; i < per_position.size(); ++i)
    total = add(total, bayes_risk_loss(per_position[i], answer_tokens[i]));
  return total;
}

UncertaintyReport uncertainty(const std::vector<DirichletParams>& per_position) {
  if (per_position.empty())
    throw std::invalid_argument("uncertainty: empty position list");
  UncertaintyReport report;
  double acc = 0.0;
  for (const auto& p : per_position) {
    double u = double(p.K) / p.strength.scalar();
    report.per_position.push_back(u);
    acc += u;
  }
  report.aggregate = acc / double(per_position.size());
  return report;
}

}  // namespace selfqa
