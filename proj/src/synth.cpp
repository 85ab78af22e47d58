#include "cvloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cvloc/errors.hpp"
#include "image_ops.hpp"

namespace cvloc {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL));
}

enum Stream : std::uint64_t { kSatFeatures = 1, kSatAttention = 100, kGroundAttention = 200, kPoints = 300 };

std::vector<float> smooth_noise(int w, int h, int c, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> data(std::size_t(w) * h * c);
  for (auto& v : data) v = normal(rng);
  detail::gaussian_blur(data, w, h, c, sigma);
  return data;
}

AttentionMap make_attention(int w, int h, AttentionMode mode, double sigma, std::uint64_t seed) {
  AttentionMap a(h, w, 1.0f);
  if (mode == AttentionMode::kUniform) return a;
  std::vector<float> z = smooth_noise(w, h, 1, sigma, seed);
  double var = 0.0;
  for (float v : z) var += double(v) * v;
  const double sd = std::sqrt(var / z.size()) + 1e-12;
  for (std::size_t i = 0; i < z.size(); ++i) {
    a.data[i] = static_cast<float>(1.0 / (1.0 + std::exp(-2.0 * z[i] / sd)));
  }
  return a;
}

// Push-pull fill of the texels whose mask is zero.
void push_pull_fill(std::vector<float>& data, const std::vector<std::uint8_t>& mask, int w, int h, int c) {
  bool any_missing = false;
  for (auto m : mask) any_missing = any_missing || !m;
  if (!any_missing) return;
  const int w2 = (w + 1) / 2;
  const int h2 = (h + 1) / 2;
  std::vector<float> coarse(std::size_t(w2) * h2 * c, 0.0f);
  std::vector<std::uint8_t> cmask(std::size_t(w2) * h2, 0);
  std::vector<double> acc(c);
  for (int y = 0; y < h2; ++y) {
    for (int x = 0; x < w2; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      int n = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int xx = 2 * x + dx, yy = 2 * y + dy;
          if (xx >= w || yy >= h || !mask[std::size_t(yy) * w + xx]) continue;
          const float* p = &data[(std::size_t(yy) * w + xx) * c];
          for (int k = 0; k < c; ++k) acc[k] += p[k];
          ++n;
        }
      }
      if (n == 0) continue;
      cmask[std::size_t(y) * w2 + x] = 1;
      for (int k = 0; k < c; ++k) coarse[(std::size_t(y) * w2 + x) * c + k] = static_cast<float>(acc[k] / n);
    }
  }
  if (w2 == w && h2 == h) {
    // 1x1 with nothing set; leave zeros.
    return;
  }
  push_pull_fill(coarse, cmask, w2, h2, c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask[std::size_t(y) * w + x]) continue;
      const double cu = std::clamp((x + 0.5) / 2.0 - 0.5, 0.0, double(w2 - 1));
      const double cv = std::clamp((y + 0.5) / 2.0 - 0.5, 0.0, double(h2 - 1));
      const int x0 = static_cast<int>(cu), y0 = static_cast<int>(cv);
      const int x1 = std::min(x0 + 1, w2 - 1), y1 = std::min(y0 + 1, h2 - 1);
      const double ax = cu - x0, ay = cv - y0;
      float* dst = &data[(std::size_t(y) * w + x) * c];
      for (int k = 0; k < c; ++k) {
        auto at = [&](int xx, int yy) { return double(coarse[(std::size_t(yy) * w2 + xx) * c + k]); };
        const double top = at(x0, y0) + ax * (at(x1, y0) - at(x0, y0));
        const double bot = at(x0, y1) + ax * (at(x1, y1) - at(x0, y1));
        dst[k] = static_cast<float>(top + ay * (bot - top));
      }
    }
  }
}

// Points are stored as float32 in CVLS files, so they are generated on the
// float grid. The volatile store keeps the optimizer from folding the
// double -> float -> double round trip away.
Vec3 round_to_float(const Vec3& v) {
  Vec3 out;
  for (int k = 0; k < 3; ++k) {
    volatile float f = static_cast<float>(v[k]);
    out[k] = f;
  }
  return out;
}

struct PlacedPoint {
  Vec3 cam;
  Vec2 sat_uv0;  // level-0 satellite pixel under the gt pose
};

}  // namespace

AttentionMode parse_attention_mode(const std::string& name) {
  if (name == "uniform") return AttentionMode::kUniform;
  if (name == "random_smooth") return AttentionMode::kRandomSmooth;
  throw ConfigError("unknown attention mode '" + name + "'");
}

std::string to_string(AttentionMode mode) {
  return mode == AttentionMode::kUniform ? "uniform" : "random_smooth";
}

void SynthConfig::validate() const {
  if (sat_size < 64) throw ContractError("SynthConfig: sat_size must be >= 64");
  if (!(gamma > 0.0)) throw ContractError("SynthConfig: gamma must be > 0");
  if (levels < 1) throw ContractError("SynthConfig: levels must be >= 1");
  if (channels < 1) throw ContractError("SynthConfig: channels must be >= 1");
  if (point_count < 10) throw ContractError("SynthConfig: point_count must be >= 10");
  if (!(depth_min > 0.0 && depth_min < depth_max)) throw ContractError("SynthConfig: depth range must be positive and ordered");
  if (!(feature_smoothness >= 0.0)) throw ContractError("SynthConfig: feature_smoothness must be >= 0");
  if ((sat_size >> (levels - 1)) < 4 || (ground_width >> (levels - 1)) < 4 || (ground_height >> (levels - 1)) < 4) {
    throw ContractError("SynthConfig: too many levels for the image sizes");
  }
  if (!(focal_px > 0.0)) throw ContractError("SynthConfig: focal_px must be > 0");
  Pose3 gt = gt_pose;
  gt.yaw = wrap_angle(gt.yaw);
  gt.validate();
}

AlignmentProblem generate_scene(const SynthConfig& cfg) {
  cfg.validate();
  const int L = cfg.levels;
  const int c = cfg.channels;

  AlignmentProblem p;
  p.georef = SatelliteGeoref::from_gamma(cfg.sat_size / 2.0, cfg.gamma);
  p.intrinsics = {cfg.focal_px, cfg.focal_px, cfg.ground_width / 2.0, cfg.ground_height / 2.0, cfg.ground_width,
                  cfg.ground_height};
  p.context.height = cfg.camera_height;
  p.gt_pose = cfg.gt_pose;
  p.gt_pose.yaw = wrap_angle(p.gt_pose.yaw);

  // Satellite pyramid: independent smooth normalized fields per level.
  for (int l = 0; l < L; ++l) {
    const int s = cfg.sat_size >> l;
    PyramidLevel lvl;
    lvl.features = FeatureMap(s, s, c);
    lvl.features.data = smooth_noise(s, s, c, cfg.feature_smoothness, stream_seed(cfg.seed, kSatFeatures + l));
    lvl.features = normalize_features(lvl.features);
    lvl.attention = make_attention(s, s, cfg.attention_mode, cfg.feature_smoothness,
                                   stream_seed(cfg.seed, kSatAttention + l));
    p.satellite.levels.push_back(std::move(lvl));
  }

  // Points: the gt satellite projection sits on a texel that is integral at
  // every level, and the ground 2x2 cell around the ground projection is
  // owned by a single point at every level.
  const RigidTransform T = pose_to_transform(p.gt_pose, p.context);
  const RigidTransform Tinv = T.inverse();
  const double lattice = std::ldexp(1.0, L - 1);
  const double c0 = p.georef.center_px;
  const double gamma = p.georef.gamma;
  const auto& K = p.intrinsics;

  std::vector<std::vector<std::uint8_t>> owned(L);
  for (int l = 0; l < L; ++l) owned[l].assign(std::size_t(cfg.ground_width >> l) * (cfg.ground_height >> l), 0);

  std::mt19937_64 rng(stream_seed(cfg.seed, kPoints));
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<PlacedPoint> placed;
  placed.reserve(cfg.point_count);
  const long max_attempts = 200L * cfg.point_count;
  std::vector<std::pair<int, int>> cells(L);

  for (long attempt = 0; attempt < max_attempts && static_cast<int>(placed.size()) < cfg.point_count; ++attempt) {
    const double u = ud(rng) * (K.width - 1);
    const double v = ud(rng) * (K.height - 1);
    const double z = cfg.depth_min + ud(rng) * (cfg.depth_max - cfg.depth_min);
    const Vec3 cam((u - K.cx) / K.fx * z, (v - K.cy) / K.fy * z, z);
    const Vec3 xs = T.apply(cam);
    const double us = std::round((xs.x() / gamma + c0) / lattice) * lattice;
    const double vs = std::round((xs.y() / gamma + c0) / lattice) * lattice;
    if (us < lattice || vs < lattice || us > cfg.sat_size - 2 * lattice || vs > cfg.sat_size - 2 * lattice) continue;
    const Vec3 snapped((us - c0) * gamma, (vs - c0) * gamma, xs.z());
    Vec3 pt = Tinv.apply(snapped);
    pt = round_to_float(pt);
    if (pt.z() < cfg.depth_min * 0.5) continue;

    const double gu = K.fx * pt.x() / pt.z() + K.cx;
    const double gv = K.fy * pt.y() / pt.z() + K.cy;
    bool ok = true;
    for (int l = 0; l < L && ok; ++l) {
      const int wl = cfg.ground_width >> l, hl = cfg.ground_height >> l;
      const double ul = std::ldexp(gu, -l), vl = std::ldexp(gv, -l);
      if (!(ul >= 0.0 && ul <= wl - 1 && vl >= 0.0 && vl <= hl - 1)) {
        ok = false;
        break;
      }
      const int x0 = std::min(static_cast<int>(ul), wl - 2);
      const int y0 = std::min(static_cast<int>(vl), hl - 2);
      cells[l] = {x0, y0};
      for (int dy = 0; dy < 2 && ok; ++dy) {
        for (int dx = 0; dx < 2 && ok; ++dx) ok = !owned[l][std::size_t(y0 + dy) * wl + x0 + dx];
      }
    }
    if (!ok) continue;
    for (int l = 0; l < L; ++l) {
      const int wl = cfg.ground_width >> l;
      const auto [x0, y0] = cells[l];
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) owned[l][std::size_t(y0 + dy) * wl + x0 + dx] = 1;
      }
    }
    const Vec3 xs_exact = T.apply(pt);
    placed.push_back({pt, Vec2(xs_exact.x() / gamma + c0, xs_exact.y() / gamma + c0)});
  }
  if (placed.size() < 10) throw GenerationError("generate_scene: fewer than 10 points could be placed");

  for (const auto& pp : placed) p.points.points.push_back(pp.cam);

  // Ground pyramid: splat the gt satellite feature over each point's cell,
  // then fill the rest smoothly.
  const GroundProjection proj = project_ground(p.points.points, K);
  for (int l = 0; l < L; ++l) {
    const int wl = cfg.ground_width >> l, hl = cfg.ground_height >> l;
    const FeatureMap& sat = p.satellite.levels[l].features;
    FeatureMap g(hl, wl, c);
    std::vector<std::uint8_t> mask(std::size_t(wl) * hl, 0);
    std::vector<double> value(c);
    for (std::size_t i = 0; i < placed.size(); ++i) {
      const Vec2 suv = placed[i].sat_uv0 * std::ldexp(1.0, -l);
      if (!bilinear_sample(sat, suv.x(), suv.y(), value.data())) {
        throw GenerationError("generate_scene: internal error, satellite lookup out of bounds");
      }
      const double ul = std::ldexp(proj.uv[i].x(), -l), vl = std::ldexp(proj.uv[i].y(), -l);
      const int x0 = std::min(static_cast<int>(ul), wl - 2);
      const int y0 = std::min(static_cast<int>(vl), hl - 2);
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          float* dst = g.pixel(x0 + dx, y0 + dy);
          for (int k = 0; k < c; ++k) dst[k] = static_cast<float>(value[k]);
          mask[std::size_t(y0 + dy) * wl + x0 + dx] = 1;
        }
      }
    }
    push_pull_fill(g.data, mask, wl, hl, c);
    for (std::size_t t = 0; t < mask.size(); ++t) {
      if (mask[t]) continue;
      float* px = g.data.data() + t * c;
      double n2 = 0.0;
      for (int k = 0; k < c; ++k) n2 += double(px[k]) * px[k];
      const double n = std::sqrt(n2);
      if (n < 1e-12) {
        std::fill(px, px + c, 0.0f);
      } else {
        for (int k = 0; k < c; ++k) px[k] = static_cast<float>(px[k] / n);
      }
    }
    g.normalized = true;
    PyramidLevel lvl;
    lvl.features = std::move(g);
    lvl.attention = make_attention(wl, hl, cfg.attention_mode, cfg.feature_smoothness,
                                   stream_seed(cfg.seed, kGroundAttention + l));
    p.ground.levels.push_back(std::move(lvl));
  }
  return p;
}

void PerturbBounds::validate() const {
  if (!(max_shift >= 0.0) || !(max_yaw >= 0.0)) throw ContractError("PerturbBounds: bounds must be >= 0");
}

Pose3 sample_initial_pose(const Pose3& gt, const PerturbBounds& bounds, std::uint64_t seed) {
  bounds.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  const double lat = ud(rng) * bounds.max_shift;
  const double lon = ud(rng) * bounds.max_shift;
  const double yaw = ud(rng) * bounds.max_yaw;
  if (bounds.max_shift == 0.0 && bounds.max_yaw == 0.0) return gt;
  return gt.retract(Vec3(lat, lon, deg2rad(yaw)));
}

std::uint64_t trial_seed(std::uint64_t seed, int trial) { return stream_seed(seed, 1000003ULL + trial); }

std::vector<SweepRow> perturbation_sweep(const AlignmentProblem& problem, const std::vector<PerturbBounds>& grid,
                                         int trials_per_bound, std::uint64_t seed, const LMConfig& lm,
                                         const RobustCost& cost, int workers) {
  if (trials_per_bound < 1) throw ContractError("perturbation_sweep: trials_per_bound must be >= 1");
  std::vector<SweepRow> rows;
  for (const auto& b : grid) {
    std::vector<Pose3> inits;
    for (int t = 0; t < trials_per_bound; ++t) inits.push_back(sample_initial_pose(problem.gt_pose, b, trial_seed(seed, t)));
    const auto results = run_trials(problem, inits, lm, cost, workers);
    rows.push_back({b, summarize(std::span<const TrialResult>(results))});
  }
  return rows;
}

}  // namespace cvloc
