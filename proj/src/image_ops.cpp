#include "image_ops.hpp"

#include <algorithm>
#include <cmath>

namespace cvloc::detail {

void gaussian_blur(std::vector<float>& data, int w, int h, int c, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    sum += kernel[k + radius];
  }
  for (auto& k : kernel) k /= sum;

  std::vector<float> tmp(data.size());
  std::vector<double> acc(c);
  // Horizontal.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int k = -radius; k <= radius; ++k) {
        const int xx = std::clamp(x + k, 0, w - 1);
        const float* src = &data[(std::size_t(y) * w + xx) * c];
        for (int ch = 0; ch < c; ++ch) acc[ch] += kernel[k + radius] * src[ch];
      }
      float* dst = &tmp[(std::size_t(y) * w + x) * c];
      for (int ch = 0; ch < c; ++ch) dst[ch] = static_cast<float>(acc[ch]);
    }
  }
  // Vertical.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int k = -radius; k <= radius; ++k) {
        const int yy = std::clamp(y + k, 0, h - 1);
        const float* src = &tmp[(std::size_t(yy) * w + x) * c];
        for (int ch = 0; ch < c; ++ch) acc[ch] += kernel[k + radius] * src[ch];
      }
      float* dst = &data[(std::size_t(y) * w + x) * c];
      for (int ch = 0; ch < c; ++ch) dst[ch] = static_cast<float>(acc[ch]);
    }
  }
}

std::vector<float> downsample2(const std::vector<float>& data, int w, int h, int c) {
  const int w2 = w / 2;
  const int h2 = h / 2;
  std::vector<float> out(std::size_t(w2) * h2 * c);
  for (int y = 0; y < h2; ++y) {
    for (int x = 0; x < w2; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        const double s = data[(std::size_t(2 * y) * w + 2 * x) * c + ch] +
                         data[(std::size_t(2 * y) * w + 2 * x + 1) * c + ch] +
                         data[(std::size_t(2 * y + 1) * w + 2 * x) * c + ch] +
                         data[(std::size_t(2 * y + 1) * w + 2 * x + 1) * c + ch];
        out[(std::size_t(y) * w2 + x) * c + ch] = static_cast<float>(0.25 * s);
      }
    }
  }
  return out;
}

}  // namespace cvloc::detail
