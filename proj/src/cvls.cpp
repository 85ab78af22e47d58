#include "cvloc/cvls.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "cvloc/errors.hpp"

namespace cvloc {

static_assert(std::endian::native == std::endian::little, "CVLS I/O assumes a little-endian host");

namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'C', 'V', 'L', 'S'};

// Degrees written to file such that converting back yields the exact radian
// value whenever a nearby double allows it.
double to_file_degrees(double rad) {
  double d = rad2deg(rad);
  double probe = d;
  for (int i = 0; i < 3; ++i) {
    if (deg2rad(probe) == rad) return probe;
    probe = std::nextafter(probe, INFINITY);
  }
  probe = std::nextafter(d, -INFINITY);
  for (int i = 0; i < 2; ++i) {
    if (deg2rad(probe) == rad) return probe;
    probe = std::nextafter(probe, -INFINITY);
  }
  return d;
}

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  template <class T>
  void scalar(T v) { raw(&v, sizeof(T)); }
  void floats(const std::vector<float>& v) { raw(v.data(), v.size() * sizeof(float)); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  void raw(void* dst, std::size_t n, const std::string& field) {
    if (n > bytes_.size() - pos_) throw FormatError("CVLS: truncated while reading " + field);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T scalar(const std::string& field) {
    T v;
    raw(&v, sizeof(T), field);
    return v;
  }
  std::vector<float> floats(std::size_t count, const std::string& field) {
    if (count > (bytes_.size() - pos_) / sizeof(float)) throw FormatError("CVLS: truncated while reading " + field);
    std::vector<float> v(count);
    raw(v.data(), count * sizeof(float), field);
    for (float x : v) {
      if (!std::isfinite(x)) throw FormatError("CVLS: non-finite value in " + field);
    }
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

json level_table(const FeaturePyramid& pyr) {
  json t = json::array();
  for (const auto& lvl : pyr.levels) {
    t.push_back({{"h", lvl.features.height},
                 {"w", lvl.features.width},
                 {"c", lvl.features.channels},
                 {"normalized", lvl.features.normalized}});
  }
  return t;
}

void write_pyramid_payload(Writer& w, const FeaturePyramid& pyr) {
  for (const auto& lvl : pyr.levels) {
    w.floats(lvl.features.data);
    w.floats(lvl.attention.data);
  }
}

std::vector<std::uint8_t> frame(const json& meta, const std::vector<std::uint8_t>& payload) {
  const std::string text = meta.dump();
  Writer w;
  w.raw(kMagic, 4);
  w.scalar<std::uint16_t>(kCvlsVersion);
  w.scalar<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.raw(text.data(), text.size());
  w.raw(payload.data(), payload.size());
  return w.take();
}

template <class T>
T get_field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw FormatError("CVLS: missing metadata field " + where + "." + key);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError("CVLS: metadata field " + where + "." + key + " has the wrong type");
  }
}

json read_header(Reader& r) {
  char magic[4];
  r.raw(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("CVLS: bad magic (expected \"CVLS\")");
  const auto version = r.scalar<std::uint16_t>("version");
  if (version != kCvlsVersion) throw FormatError("CVLS: unsupported version " + std::to_string(version));
  const auto len = r.scalar<std::uint32_t>("metadata length");
  if (len > r.remaining()) throw FormatError("CVLS: truncated while reading metadata");
  std::string text(len, '\0');
  r.raw(text.data(), len, "metadata");
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("CVLS: metadata is not valid JSON: ") + e.what());
  }
}

FeaturePyramid read_pyramid_payload(Reader& r, const json& table, const std::string& view) {
  if (!table.is_array() || table.empty()) throw FormatError("CVLS: level table for view " + view + " is empty");
  FeaturePyramid pyr;
  for (std::size_t l = 0; l < table.size(); ++l) {
    const std::string where = "levels." + view + "[" + std::to_string(l) + "]";
    const int h = get_field<int>(table[l], "h", where);
    const int w = get_field<int>(table[l], "w", where);
    const int c = get_field<int>(table[l], "c", where);
    if (h < 1 || w < 1 || c < 1) throw FormatError("CVLS: non-positive dimension in " + where);
    PyramidLevel lvl;
    lvl.features.height = h;
    lvl.features.width = w;
    lvl.features.channels = c;
    lvl.features.normalized = table[l].value("normalized", false);
    lvl.features.data = r.floats(std::size_t(h) * w * c, view + " features level " + std::to_string(l));
    lvl.attention.height = h;
    lvl.attention.width = w;
    lvl.attention.data = r.floats(std::size_t(h) * w, view + " attention level " + std::to_string(l));
    for (float a : lvl.attention.data) {
      if (!(a >= 0.0f && a <= 1.0f)) {
        throw FormatError("CVLS: " + view + " level " + std::to_string(l) + ": attention out of [0,1]");
      }
    }
    pyr.levels.push_back(std::move(lvl));
  }
  return pyr;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::vector<std::uint8_t> encode_scene(const AlignmentProblem& p) {
  json meta;
  meta["kind"] = "scene";
  meta["views"] = {"satellite", "ground"};
  meta["level_order"] = "fine_to_coarse";
  meta["yaw_convention"] = "yaw 0 heads north (-y satellite), positive turns east";
  meta["georef"] = {{"center_px", p.georef.center_px},
                    {"gamma", p.georef.gamma},
                    {"latitude_deg", p.georef.latitude_deg},
                    {"zoom", p.georef.zoom},
                    {"scale", p.georef.scale}};
  meta["intrinsics"] = {{"fx", p.intrinsics.fx}, {"fy", p.intrinsics.fy},         {"cx", p.intrinsics.cx},
                        {"cy", p.intrinsics.cy}, {"width", p.intrinsics.width}, {"height", p.intrinsics.height}};
  json m = json::array();
  const auto& T = p.context.cam_to_gps;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m.push_back(T.rotation(r, c));
    m.push_back(T.translation(r));
  }
  meta["pose_context"] = {{"roll_deg", to_file_degrees(p.context.roll)},
                          {"pitch_deg", to_file_degrees(p.context.pitch)},
                          {"height_m", p.context.height},
                          {"cam_to_gps", m}};
  meta["gt_pose"] = {{"lateral_m", p.gt_pose.lateral},
                     {"longitudinal_m", p.gt_pose.longitudinal},
                     {"yaw_deg", to_file_degrees(p.gt_pose.yaw)}};
  meta["levels"] = {{"satellite", level_table(p.satellite)}, {"ground", level_table(p.ground)}};
  meta["point_count"] = p.points.size();

  Writer w;
  write_pyramid_payload(w, p.satellite);
  write_pyramid_payload(w, p.ground);
  for (const auto& pt : p.points.points) {
    for (int k = 0; k < 3; ++k) w.scalar<float>(static_cast<float>(pt[k]));
  }
  return frame(meta, w.take());
}

AlignmentProblem decode_scene(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const json meta = read_header(r);
  if (meta.value("kind", std::string("scene")) != "scene") throw FormatError("CVLS: container is not a scene");

  AlignmentProblem p;
  const json g = meta.contains("georef") ? meta["georef"] : json();
  p.georef.center_px = get_field<double>(g, "center_px", "georef");
  p.georef.gamma = get_field<double>(g, "gamma", "georef");
  p.georef.latitude_deg = get_field<double>(g, "latitude_deg", "georef");
  p.georef.zoom = get_field<int>(g, "zoom", "georef");
  p.georef.scale = get_field<int>(g, "scale", "georef");
  if (!(p.georef.gamma > 0.0)) throw FormatError("CVLS: georef.gamma must be positive");
  if (!(std::abs(p.georef.latitude_deg) < 90.0)) throw FormatError("CVLS: georef.latitude_deg out of range");

  const json k = meta.contains("intrinsics") ? meta["intrinsics"] : json();
  p.intrinsics.fx = get_field<double>(k, "fx", "intrinsics");
  p.intrinsics.fy = get_field<double>(k, "fy", "intrinsics");
  p.intrinsics.cx = get_field<double>(k, "cx", "intrinsics");
  p.intrinsics.cy = get_field<double>(k, "cy", "intrinsics");
  p.intrinsics.width = get_field<int>(k, "width", "intrinsics");
  p.intrinsics.height = get_field<int>(k, "height", "intrinsics");
  try {
    p.intrinsics.validate();
  } catch (const ContractError& e) {
    throw FormatError(std::string("CVLS: ") + e.what());
  }

  const json c = meta.contains("pose_context") ? meta["pose_context"] : json();
  p.context.roll = deg2rad(get_field<double>(c, "roll_deg", "pose_context"));
  p.context.pitch = deg2rad(get_field<double>(c, "pitch_deg", "pose_context"));
  p.context.height = get_field<double>(c, "height_m", "pose_context");
  const auto m = get_field<std::vector<double>>(c, "cam_to_gps", "pose_context");
  if (m.size() != 12) throw FormatError("CVLS: pose_context.cam_to_gps must hold 12 values");
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) p.context.cam_to_gps.rotation(row, col) = m[row * 4 + col];
    p.context.cam_to_gps.translation(row) = m[row * 4 + 3];
  }

  const json gp = meta.contains("gt_pose") ? meta["gt_pose"] : json();
  p.gt_pose.lateral = get_field<double>(gp, "lateral_m", "gt_pose");
  p.gt_pose.longitudinal = get_field<double>(gp, "longitudinal_m", "gt_pose");
  p.gt_pose.yaw = deg2rad(get_field<double>(gp, "yaw_deg", "gt_pose"));

  const json lv = meta.contains("levels") ? meta["levels"] : json();
  const auto sat_table = get_field<json>(lv, "satellite", "levels");
  const auto grd_table = get_field<json>(lv, "ground", "levels");
  const auto n = get_field<std::int64_t>(meta, "point_count", "");
  if (n < 1) throw FormatError("CVLS: point_count must be >= 1");

  p.satellite = read_pyramid_payload(r, sat_table, "satellite");
  p.ground = read_pyramid_payload(r, grd_table, "ground");
  const auto pts = r.floats(std::size_t(n) * 3, "points");
  p.points.points.reserve(std::size_t(n));
  for (std::int64_t i = 0; i < n; ++i) p.points.points.emplace_back(pts[3 * i], pts[3 * i + 1], pts[3 * i + 2]);
  if (r.remaining() != 0) throw FormatError("CVLS: " + std::to_string(r.remaining()) + " trailing bytes after points");

  try {
    p.validate();
  } catch (const ContractError& e) {
    throw FormatError(std::string("CVLS: ") + e.what());
  }
  return p;
}

std::vector<std::uint8_t> encode_pyramid(const FeaturePyramid& pyramid) {
  json meta;
  meta["kind"] = "pyramid";
  meta["views"] = {"pyramid"};
  meta["level_order"] = "fine_to_coarse";
  meta["levels"] = {{"pyramid", level_table(pyramid)}};
  meta["point_count"] = 0;
  Writer w;
  write_pyramid_payload(w, pyramid);
  return frame(meta, w.take());
}

FeaturePyramid decode_pyramid(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const json meta = read_header(r);
  if (meta.value("kind", std::string()) != "pyramid") throw FormatError("CVLS: container is not a pyramid");
  const json lv = meta.contains("levels") ? meta["levels"] : json();
  FeaturePyramid pyr = read_pyramid_payload(r, get_field<json>(lv, "pyramid", "levels"), "pyramid");
  if (r.remaining() != 0) throw FormatError("CVLS: " + std::to_string(r.remaining()) + " trailing bytes");
  return pyr;
}

void save_scene(const std::filesystem::path& path, const AlignmentProblem& problem) {
  write_file(path, encode_scene(problem));
}

AlignmentProblem load_scene(const std::filesystem::path& path) { return decode_scene(read_file(path)); }

void save_pyramid(const std::filesystem::path& path, const FeaturePyramid& pyramid) {
  write_file(path, encode_pyramid(pyramid));
}

FeaturePyramid load_pyramid(const std::filesystem::path& path) { return decode_pyramid(read_file(path)); }

}  // namespace cvloc
