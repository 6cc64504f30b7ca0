#pragma once

#include <vector>

#include "selfqa/autodiff.hpp"
#include "selfqa/rng.hpp"

namespace selfqa {

/// Dirichlet concentration over K classes. Every alpha_i >= 1 (evidence is
/// non-negative) and strength == sum(alpha).
struct DirichletParams {
  Value alpha;     // K-vector
  Value strength;  // scalar, sum of alpha
  std::size_t K = 0;
};

/// Evidence split into a simplex direction and a positive scalar magnitude.
struct DecoupledEvidence {
  Value direction;  // K-vector on the simplex
  Value magnitude;  // positive scalar
};

/// Single linear map from the K logits to one scalar controlling the
/// evidence magnitude.
struct EdlHead {
  Parameter weights;  // shape {K, 1}
  Parameter bias;     // shape {1}

  EdlHead() = default;
  EdlHead(std::size_t K, RngStream& rng, double init_scale = 0.01);
  explicit EdlHead(std::size_t K);  // zero-initialized
};

struct UncertaintyReport {
  std::vector<double> per_position;  // each in (0, 1]
  double aggregate = 1.0;            // mean of per_position
};

/// Magnitude values above this are clamped instead of overflowing.
constexpr double kMagnitudeCap = 1e12;

/// alpha_i = max(z_i, 0) + 1 (the truncating baseline transform).
DirichletParams vanilla_relu_evidence(const Value& z);

/// direction = softmax(z); magnitude = sigmoid(w.z+b) / (1 - sigmoid(...)),
/// computed as exp(w.z+b) and clamped at kMagnitudeCap.
DecoupledEvidence decouple_evidence(const Value& z, EdlHead& head);

/// alpha_i = magnitude * direction_i + 1; strength = magnitude + K.
DirichletParams to_dirichlet(const DecoupledEvidence& ev);

/// Expected NLL under the Dirichlet: psi(strength) - psi(alpha_target).
Value bayes_risk_loss(const DirichletParams& params, int target);

/// KL[ Dir(alpha) || Dir(1,...,1) ] in closed form.
Value edl_kl_regularizer(const DirichletParams& params);

/// Sum of per-position Bayes risks over the answer positions.
Value sequence_bayes_risk(const std::vector<DirichletParams>& per_position,
                          const std::vector<int>& answer_tokens);

/// u_i = K / strength_i, aggregated by mean. Plain numbers: the uncertainty
/// weight is always gradient-detached.
UncertaintyReport uncertainty(const std::vector<DirichletParams>& per_position);

}  // namespace selfqa
