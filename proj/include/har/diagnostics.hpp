#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "har/gradcheck.hpp"
#include "har/model.hpp"

namespace har {

struct LayerCheck {
  std::string layer;
  GradCheckReport report;
};

/// Small network used for finite-difference checks: 11x9 frames, 3 classes,
/// F=2, T=3.
ModelConfig diagnostic_config();

/// Finite-difference checks of each layer and of the composed supervised
/// loss with glimpse locations frozen at the policy means. Layers are probed
/// on every coordinate; the composed loss on `loss_coordinates` random ones.
std::vector<LayerCheck> layer_gradient_checks(std::uint64_t seed, std::size_t loss_coordinates = 200);

}  // namespace har
