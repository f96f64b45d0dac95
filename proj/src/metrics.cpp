#include "voxelprior/metrics.hpp"

#include <stdexcept>
#include <string>

namespace voxelprior {

double iou(const VoxelGrid& pred, const VoxelGrid& target, double threshold) {
  if (pred.dim() != target.dim())
    throw std::invalid_argument("iou: extents differ (" + std::to_string(pred.dim()) + " vs " +
                                std::to_string(target.dim()) + ")");
  if (!target.is_binary()) throw std::invalid_argument("iou: target grid must be binary");
  std::size_t inter = 0, uni = 0;
  const auto p = pred.values();
  const auto t = target.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool a = p[i] >= threshold;
    const bool b = t[i] == 1.0;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace voxelprior
