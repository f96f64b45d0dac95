#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "voxelprior/model.hpp"

namespace voxelprior {

struct GradcheckEntry {
  std::string name;
  std::size_t count = 0;  // coordinates compared
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  // Coordinates whose probes crossed a kink even at the smallest step.
  std::size_t kinks = 0;

  double max_rel_error() const;
  bool passed(double tolerance = 1e-4) const { return max_rel_error() < tolerance; }
};

// Every layer's backward against central differences on random inputs.
GradcheckReport check_layer_gradients(std::uint64_t seed, double h = 1e-4);

// End-to-end BCE gradient of a freshly initialised model, one entry per
// parameter tensor. Biases are drawn randomly too so no rectifier input
// sits exactly on its kink. Where a +-h probe would cross a rectifier or
// max-pool switch, the step shrinks (down to h * 1e-6) until it does not.
GradcheckReport check_model_gradients(const ArchConfig& config, Variant variant,
                                      std::uint64_t seed, double h = 1e-4);

}  // namespace voxelprior
