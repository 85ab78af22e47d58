#include "cvloc/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cvloc/errors.hpp"
#include "image_ops.hpp"

namespace cvloc {

namespace {

constexpr double kZeroNorm = 1e-12;
constexpr double kUnitTolerance = 1e-6;

}  // namespace

void FeatureMap::validate() const {
  if (height < 1 || width < 1 || channels < 1) throw ContractError("feature map: non-positive dimension");
  if (data.size() != std::size_t(height) * width * channels) throw ContractError("feature map: data size mismatch");
  for (float v : data) {
    if (!std::isfinite(v)) throw ContractError("feature map: non-finite value");
  }
  if (!normalized) return;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const float* p = pixel(x, y);
      double n2 = 0.0;
      for (int c = 0; c < channels; ++c) n2 += double(p[c]) * p[c];
      if (n2 != 0.0 && std::abs(std::sqrt(n2) - 1.0) > kUnitTolerance) {
        throw ContractError("feature map: pixel (" + std::to_string(x) + ", " + std::to_string(y) +
                            ") is flagged normalized but has norm " + std::to_string(std::sqrt(n2)));
      }
    }
  }
}

void AttentionMap::validate() const {
  if (height < 1 || width < 1) throw ContractError("attention map: non-positive dimension");
  if (data.size() != std::size_t(height) * width) throw ContractError("attention map: data size mismatch");
  for (float v : data) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ContractError("attention out of [0,1]");
  }
}

void FeaturePyramid::validate() const {
  if (levels.empty()) throw ContractError("pyramid: no levels");
  for (const auto& lvl : levels) {
    lvl.features.validate();
    lvl.attention.validate();
    if (lvl.features.height != lvl.attention.height || lvl.features.width != lvl.attention.width) {
      throw ContractError("pyramid: attention and feature dimensions differ");
    }
  }
}

FeatureMap normalize_features(const FeatureMap& map) {
  FeatureMap out = map;
  const std::size_t pixels = std::size_t(map.height) * map.width;
  const int c = map.channels;
  for (std::size_t i = 0; i < pixels; ++i) {
    float* p = out.data.data() + i * c;
    double n2 = 0.0;
    for (int k = 0; k < c; ++k) n2 += double(p[k]) * p[k];
    const double n = std::sqrt(n2);
    if (n < kZeroNorm) {
      std::fill(p, p + c, 0.0f);
      continue;
    }
    for (int k = 0; k < c; ++k) p[k] = static_cast<float>(p[k] / n);
  }
  out.normalized = true;
  return out;
}

bool bilinear_sample(const FeatureMap& map, double u, double v, double* value, double* grad_u, double* grad_v) {
  if (!(u >= 0.0 && u <= map.width - 1 && v >= 0.0 && v <= map.height - 1)) return false;
  const int x0 = map.width > 1 ? std::min(static_cast<int>(u), map.width - 2) : 0;
  const int y0 = map.height > 1 ? std::min(static_cast<int>(v), map.height - 2) : 0;
  const int x1 = map.width > 1 ? x0 + 1 : x0;
  const int y1 = map.height > 1 ? y0 + 1 : y0;
  const double ax = u - x0;
  const double ay = v - y0;
  const float* p00 = map.pixel(x0, y0);
  const float* p10 = map.pixel(x1, y0);
  const float* p01 = map.pixel(x0, y1);
  const float* p11 = map.pixel(x1, y1);
  const double gx_scale = x1 != x0 ? 1.0 : 0.0;
  const double gy_scale = y1 != y0 ? 1.0 : 0.0;
  for (int c = 0; c < map.channels; ++c) {
    const double v00 = p00[c], v10 = p10[c], v01 = p01[c], v11 = p11[c];
    const double top = v00 + ax * (v10 - v00);
    const double bottom = v01 + ax * (v11 - v01);
    value[c] = top + ay * (bottom - top);
    if (grad_u) grad_u[c] = gx_scale * ((1.0 - ay) * (v10 - v00) + ay * (v11 - v01));
    if (grad_v) grad_v[c] = gy_scale * (bottom - top);
  }
  return true;
}

std::optional<double> bilinear_sample(const AttentionMap& map, double u, double v) {
  if (!(u >= 0.0 && u <= map.width - 1 && v >= 0.0 && v <= map.height - 1)) return std::nullopt;
  const int x0 = map.width > 1 ? std::min(static_cast<int>(u), map.width - 2) : 0;
  const int y0 = map.height > 1 ? std::min(static_cast<int>(v), map.height - 2) : 0;
  const int x1 = map.width > 1 ? x0 + 1 : x0;
  const int y1 = map.height > 1 ? y0 + 1 : y0;
  const double ax = u - x0;
  const double ay = v - y0;
  const double v00 = map.at(x0, y0), v10 = map.at(x1, y0), v01 = map.at(x0, y1), v11 = map.at(x1, y1);
  const double top = v00 + ax * (v10 - v00);
  const double bottom = v01 + ax * (v11 - v01);
  return std::clamp(top + ay * (bottom - top), 0.0, 1.0);
}

Lookup bilinear_lookup(const FeatureMap& map, const Vec2& uv) {
  Lookup out;
  out.value = Eigen::VectorXd::Zero(map.channels);
  out.grad = Eigen::Matrix<double, Eigen::Dynamic, 2>::Zero(map.channels, 2);
  Eigen::VectorXd gu(map.channels), gv(map.channels);
  out.in_bounds = bilinear_sample(map, uv.x(), uv.y(), out.value.data(), gu.data(), gv.data());
  if (out.in_bounds) {
    out.grad.col(0) = gu;
    out.grad.col(1) = gv;
  }
  return out;
}

SparseAlignment compute_residuals(const FeatureMap& sat, const FeatureMap& grd, std::span<const Vec2> uv_sat,
                                  std::span<const Vec2> uv_grd, std::span<const std::uint8_t> visible) {
  if (sat.channels != grd.channels) {
    throw ContractError("compute_residuals: channel mismatch (" + std::to_string(sat.channels) + " vs " +
                        std::to_string(grd.channels) + ")");
  }
  const std::size_t n = uv_sat.size();
  if (uv_grd.size() != n || visible.size() != n) throw ContractError("compute_residuals: length mismatch");
  const int c = sat.channels;
  SparseAlignment out;
  out.residuals = Residuals::Zero(static_cast<Eigen::Index>(n), c);
  out.valid.assign(n, 0);
  std::vector<double> fs(c), fg(c);
  for (std::size_t i = 0; i < n; ++i) {
    if (!visible[i]) continue;
    if (!bilinear_sample(sat, uv_sat[i].x(), uv_sat[i].y(), fs.data())) continue;
    if (!bilinear_sample(grd, uv_grd[i].x(), uv_grd[i].y(), fg.data())) continue;
    for (int k = 0; k < c; ++k) out.residuals(static_cast<Eigen::Index>(i), k) = fs[k] - fg[k];
    out.valid[i] = 1;
  }
  return out;
}

std::vector<double> compute_weights(const AttentionMap& sat, const AttentionMap& grd, std::span<const Vec2> uv_sat,
                                    std::span<const Vec2> uv_grd, std::span<const std::uint8_t> valid) {
  const std::size_t n = uv_sat.size();
  if (uv_grd.size() != n || valid.size() != n) throw ContractError("compute_weights: length mismatch");
  std::vector<double> w(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    const auto a = bilinear_sample(sat, uv_sat[i].x(), uv_sat[i].y());
    const auto b = bilinear_sample(grd, uv_grd[i].x(), uv_grd[i].y());
    if (a && b) w[i] = *a * *b;
  }
  return w;
}

namespace {

std::vector<float> to_gray(const Image& image) {
  std::vector<float> gray(std::size_t(image.width) * image.height);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    double s = 0.0;
    for (int c = 0; c < image.channels; ++c) s += image.data[i * image.channels + c];
    gray[i] = static_cast<float>(s / image.channels);
  }
  return gray;
}

// Central differences with clamped borders.
float dx_at(const std::vector<float>& img, int w, int x, int y) {
  const int xl = std::max(x - 1, 0);
  const int xr = std::min(x + 1, w - 1);
  if (xr == xl) return 0.0f;
  return (img[std::size_t(y) * w + xr] - img[std::size_t(y) * w + xl]) / float(xr - xl);
}

float dy_at(const std::vector<float>& img, int w, int h, int x, int y) {
  const int yt = std::max(y - 1, 0);
  const int yb = std::min(y + 1, h - 1);
  if (yb == yt) return 0.0f;
  return (img[std::size_t(yb) * w + x] - img[std::size_t(yt) * w + x]) / float(yb - yt);
}

FeatureMap level_features(const std::vector<float>& gray, int w, int h, int channels, double sigma) {
  std::vector<float> smooth = gray;
  detail::gaussian_blur(smooth, w, h, 1, sigma);
  std::vector<float> coarse = gray;
  detail::gaussian_blur(coarse, w, h, 1, 2.0 * sigma);

  std::vector<float> gx(smooth.size()), gy(smooth.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      gx[std::size_t(y) * w + x] = dx_at(smooth, w, x, y);
      gy[std::size_t(y) * w + x] = dy_at(smooth, w, h, x, y);
    }
  }

  FeatureMap map(h, w, channels);
  constexpr int kBase = 8;
  float feat[kBase];
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = std::size_t(y) * w + x;
      feat[0] = smooth[i];
      feat[1] = gx[i];
      feat[2] = gy[i];
      feat[3] = dx_at(gx, w, x, y);
      feat[4] = dy_at(gy, w, h, x, y);
      feat[5] = dy_at(gx, w, h, x, y);
      feat[6] = smooth[i] - coarse[i];
      feat[7] = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
      float* dst = map.pixel(x, y);
      for (int c = 0; c < std::min(channels, kBase); ++c) dst[c] = feat[c];
    }
  }
  return normalize_features(map);
}

}  // namespace

FeaturePyramid handcrafted_pyramid(const Image& image, const HandcraftedOptions& opts) {
  if (opts.levels < 1) throw ContractError("handcrafted_pyramid: levels must be >= 1");
  if (opts.channels < 1) throw ContractError("handcrafted_pyramid: channels must be >= 1");
  if (image.width < 1 || image.height < 1 || image.data.empty()) throw ContractError("handcrafted_pyramid: empty image");
  if (image.data.size() != std::size_t(image.width) * image.height * image.channels) {
    throw ContractError("handcrafted_pyramid: image data size mismatch");
  }
  std::vector<float> gray = to_gray(image);
  std::vector<float> mask;
  if (opts.attention_mask) {
    const Image& m = *opts.attention_mask;
    if (m.width != image.width || m.height != image.height) {
      throw ContractError("handcrafted_pyramid: attention mask size differs from image");
    }
    mask = to_gray(m);
    for (float& a : mask) a = std::clamp(a, 0.0f, 1.0f);
  }

  FeaturePyramid pyr;
  int w = image.width;
  int h = image.height;
  for (int l = 0; l < opts.levels; ++l) {
    if (l > 0) {
      if (w / 2 < 1 || h / 2 < 1) throw ContractError("handcrafted_pyramid: too many levels for image size");
      gray = detail::downsample2(gray, w, h, 1);
      if (!mask.empty()) mask = detail::downsample2(mask, w, h, 1);
      w /= 2;
      h /= 2;
    }
    PyramidLevel lvl;
    lvl.features = level_features(gray, w, h, opts.channels, opts.blur_sigma);
    lvl.attention = AttentionMap(h, w, 1.0f);
    if (!mask.empty()) lvl.attention.data = mask;
    pyr.levels.push_back(std::move(lvl));
  }
  return pyr;
}

}  // namespace cvloc
