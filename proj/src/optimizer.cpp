#include "repforge/optimizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace repforge {

AdamState AdamState::init(const std::vector<const Tensor*>& params,
                          AdamConfig config) {
  AdamState s;
  s.config = config;
  s.first_moment.reserve(params.size());
  s.second_moment.reserve(params.size());
  for (const Tensor* p : params) {
    s.first_moment.emplace_back(p->shape());
    s.second_moment.emplace_back(p->shape());
  }
  return s;
}

void adam_step(const std::vector<Tensor*>& params,
               const std::vector<Tensor>& grads, AdamState& state) {
  if (params.size() != grads.size() ||
      params.size() != state.first_moment.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient/state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i])) {
      throw std::invalid_argument(
          "adam_step: grad " + shape_str(grads[i].shape()) +
          " does not match param " + shape_str(params[i]->shape()) +
          " at index " + std::to_string(i));
    }
    if (!grads[i].all_finite()) {
      throw std::runtime_error("adam_step: non-finite gradient at parameter " +
                               std::to_string(i));
    }
  }

  const AdamConfig& c = state.config;
  const std::uint64_t t = state.step_count + 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));

  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i]->data();
    const double* g = grads[i].data();
    double* m = state.first_moment[i].data();
    double* v = state.second_moment[i].data();
    const std::size_t n = params[i]->size();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
  state.step_count = t;
}

}  // namespace repforge
