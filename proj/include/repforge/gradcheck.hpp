#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "repforge/layers.hpp"
#include "repforge/model.hpp"

namespace repforge {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

using ConvBackwardFn =
    std::function<ConvGrads(const Tensor&, const Tensor&, const ConvCache&)>;

struct GradCheckOptions {
  double fd_step = 1e-3;    // central differences
  double layer_tol = 1e-4;
  double model_tol = 1e-3;
  // Test seam: swapping in a broken backward must make the suite fail.
  ConvBackwardFn conv_backward;  // defaults to conv2d_backward
};

// Central finite differences against every analytic backward pass, one result
// per layer kind plus a shrunken end-to-end model.
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed,
                                                const GradCheckOptions& opts = {});

// The shrunken end-to-end configuration used by the suite (9x16 input, 2-3
// feature maps, 8-wide FC layers, 4 classes).
ModelConfig tiny_model_config(std::uint64_t seed);

}  // namespace repforge
