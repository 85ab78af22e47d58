#pragma once

// CVLS container: little-endian binary holding a scene (two pyramids,
// georeference, intrinsics, pose context, ground-truth pose and points) or a
// single pyramid.
//
//   "CVLS" | u16 version (=1) | u32 metadata length | UTF-8 JSON metadata |
//   per view, per level: features f32 (h, w, c) then attention f32 (h, w) |
//   points f32 N x 3
//
// Views are written in the order listed by the metadata "views" array
// ("satellite", "ground" for scenes).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cvloc/problem.hpp"

namespace cvloc {

inline constexpr std::uint16_t kCvlsVersion = 1;

std::vector<std::uint8_t> encode_scene(const AlignmentProblem& problem);
AlignmentProblem decode_scene(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> encode_pyramid(const FeaturePyramid& pyramid);
FeaturePyramid decode_pyramid(const std::vector<std::uint8_t>& bytes);

void save_scene(const std::filesystem::path& path, const AlignmentProblem& problem);
AlignmentProblem load_scene(const std::filesystem::path& path);

void save_pyramid(const std::filesystem::path& path, const FeaturePyramid& pyramid);
FeaturePyramid load_pyramid(const std::filesystem::path& path);

}  // namespace cvloc
