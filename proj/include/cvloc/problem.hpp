#pragma once

#include "cvloc/features.hpp"
#include "cvloc/geometry.hpp"

namespace cvloc {

/// One localization instance. Georeference and intrinsics describe level 0
/// (the finest level); coarser levels are derived with `at_level`.
struct AlignmentProblem {
  FeaturePyramid satellite;
  FeaturePyramid ground;
  SatelliteGeoref georef;
  CameraIntrinsics intrinsics;
  PoseContext context;
  PointSet points;
  Pose3 gt_pose;

  int level_count() const { return satellite.level_count(); }
  void validate() const;
};

}  // namespace cvloc
