#include "cvloc/problem.hpp"

#include <string>

#include "cvloc/errors.hpp"

namespace cvloc {

void AlignmentProblem::validate() const {
  satellite.validate();
  ground.validate();
  if (satellite.level_count() != ground.level_count()) {
    throw ContractError("problem: satellite and ground pyramids have different level counts");
  }
  for (int l = 0; l < level_count(); ++l) {
    if (satellite.levels[l].features.channels != ground.levels[l].features.channels) {
      throw ContractError("problem: channel count differs between views at level " + std::to_string(l));
    }
  }
  georef.validate();
  intrinsics.validate();
  context.cam_to_gps.validate(1e-6);
  points.validate();
  gt_pose.validate();
}

}  // namespace cvloc
