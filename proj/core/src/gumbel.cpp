#include "selfqa/gumbel.hpp"

#include <stdexcept>

namespace selfqa {

Tensor sample_gumbel(RngStream& rng, std::size_t n) {
  if (n < 1) throw std::invalid_argument("sample_gumbel: n must be >= 1");
  Tensor g = Tensor::zeros({n});
  for (std::size_t i = 0; i < n; ++i) g[i] = rng.gumbel();
  return g;
}

Value gumbel_softmax(const Value& z, const GumbelConfig& cfg, RngStream& rng) {
  if (!(cfg.temperature > 0.0))
    throw std::invalid_argument("gumbel_softmax: temperature must be > 0");
  if (!z.tensor().all_finite())
    throw std::invalid_argument("gumbel_softmax: non-finite logits");
  Tensor noise = sample_gumbel(rng, z.size());
  noise.shape = z.tensor().shape;
  Value soft = softmax_rows(scale(add(z, Value::constant(std::move(noise))),
                                  1.0 / cfg.temperature));
  return cfg.hard ? straight_through_onehot(soft) : soft;
}

}  // namespace selfqa
