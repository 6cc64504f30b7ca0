#pragma once

#include "selfqa/autodiff.hpp"
#include "selfqa/rng.hpp"

namespace selfqa {

struct GumbelConfig {
  double temperature = 1.0;  // tau > 0
  bool hard = true;          // straight-through one-hot output
};

/// n independent Gumbel(0,1) draws.
Tensor sample_gumbel(RngStream& rng, std::size_t n);

/// Relaxed categorical sample y = softmax((z + g) / tau). When cfg.hard is
/// set, the forward value is one-hot(argmax y) and the backward path is that
/// of y (straight-through).
Value gumbel_softmax(const Value& z, const GumbelConfig& cfg, RngStream& rng);

}  // namespace selfqa
