#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "cvloc/geometry.hpp"

namespace cvloc {

/// Dense h x w x c feature map, row-major with channels innermost.
struct FeatureMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;
  bool normalized = false;

  FeatureMap() = default;
  FeatureMap(int h, int w, int c) : height(h), width(w), channels(c), data(std::size_t(h) * w * c, 0.0f) {}

  float* pixel(int x, int y) { return data.data() + (std::size_t(y) * width + x) * channels; }
  const float* pixel(int x, int y) const { return data.data() + (std::size_t(y) * width + x) * channels; }

  /// Checks sizes, finiteness and, if flagged, unit pixel norms.
  void validate() const;
};

struct AttentionMap {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  AttentionMap() = default;
  AttentionMap(int h, int w, float fill = 1.0f) : height(h), width(w), data(std::size_t(h) * w, fill) {}

  float at(int x, int y) const { return data[std::size_t(y) * width + x]; }
  void validate() const;
};

struct PyramidLevel {
  FeatureMap features;
  AttentionMap attention;
};

/// Levels are stored finest first: levels[0] is full resolution and each
/// following level halves it.
struct FeaturePyramid {
  std::vector<PyramidLevel> levels;

  int level_count() const { return static_cast<int>(levels.size()); }
  void validate() const;
};

using Residuals = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SparseAlignment {
  Residuals residuals;                // N x c
  std::vector<double> weights;        // N, zero where invalid
  std::vector<std::uint8_t> valid;    // N
};

FeatureMap normalize_features(const FeatureMap& map);

struct Lookup {
  Eigen::VectorXd value;
  Eigen::Matrix<double, Eigen::Dynamic, 2> grad;
  bool in_bounds = false;
};

/// Bilinear sample of `map` at pixel (u, v) with its analytic (d/du, d/dv).
Lookup bilinear_lookup(const FeatureMap& map, const Vec2& uv);

/// Low-level bilinear sample; `value` holds c entries and `grad_u`/`grad_v`
/// (optional) c entries each. Returns false and leaves outputs untouched when
/// uv lies outside [0, w-1] x [0, h-1].
bool bilinear_sample(const FeatureMap& map, double u, double v, double* value, double* grad_u = nullptr,
                     double* grad_v = nullptr);

/// Bilinear sample of an attention map; nullopt when out of bounds.
std::optional<double> bilinear_sample(const AttentionMap& map, double u, double v);

/// r_i = F_sat[uv_sat_i] - F_grd[uv_grd_i]. Rows that are not valid in both
/// views are zero and masked out. Weights are left empty.
SparseAlignment compute_residuals(const FeatureMap& sat, const FeatureMap& grd, std::span<const Vec2> uv_sat,
                                  std::span<const Vec2> uv_grd, std::span<const std::uint8_t> visible);

/// w_i = A_sat[uv_sat_i] * A_grd[uv_grd_i]; zero for masked points.
std::vector<double> compute_weights(const AttentionMap& sat, const AttentionMap& grd, std::span<const Vec2> uv_sat,
                                    std::span<const Vec2> uv_grd, std::span<const std::uint8_t> valid);

/// Grayscale or RGB image, row-major, channels innermost.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> data;
};

struct HandcraftedOptions {
  int levels = 3;
  int channels = 8;
  double blur_sigma = 1.0;
  /// Optional attention mask at full resolution, values in [0, 1].
  std::optional<Image> attention_mask;
};

/// Deterministic stand-in for a learned feature extractor. Channels per level:
/// smoothed intensity, d/dx, d/dy, d2/dx2, d2/dy2, d2/dxdy, difference of
/// Gaussians, gradient magnitude; truncated or zero padded to `channels`,
/// then L2-normalized per pixel.
FeaturePyramid handcrafted_pyramid(const Image& image, const HandcraftedOptions& opts = {});

}  // namespace cvloc
