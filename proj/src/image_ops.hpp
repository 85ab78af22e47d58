#pragma once

// Small raster helpers shared by the handcrafted extractor and the scene
// generator. Buffers are row-major with `c` interleaved channels.

#include <vector>

namespace cvloc::detail {

/// Separable Gaussian blur with clamped borders; kernel radius ceil(3 sigma).
void gaussian_blur(std::vector<float>& data, int w, int h, int c, double sigma);

/// 2x2 box downsample to (w / 2) x (h / 2).
std::vector<float> downsample2(const std::vector<float>& data, int w, int h, int c);

}  // namespace cvloc::detail
