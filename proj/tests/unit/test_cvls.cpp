#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <limits>
#include <string>

#include "cvloc/cvls.hpp"
#include "cvloc/errors.hpp"
#include "cvloc/synth.hpp"
#include "support.hpp"

using namespace cvloc;

namespace {

std::uint32_t meta_length(const std::vector<std::uint8_t>& b) {
  std::uint32_t n;
  std::memcpy(&n, b.data() + 6, 4);
  return n;
}

void put_float(std::vector<std::uint8_t>& b, std::size_t offset, float v) { std::memcpy(b.data() + offset, &v, 4); }

std::string error_of(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_scene(bytes);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

const AlignmentProblem& scene() {
  static const AlignmentProblem p = [] {
    auto cfg = cvloc::testing::small_config(6);
    cfg.attention_mode = AttentionMode::kRandomSmooth;
    cfg.gt_pose = Pose3::from_degrees(1.25, -0.5, 33.3);
    return generate_scene(cfg);
  }();
  return p;
}

}  // namespace

TEST_SUITE("cvls") {

TEST_CASE("scene round trip is bit exact") {
  const auto bytes = encode_scene(scene());
  REQUIRE(std::string(bytes.begin(), bytes.begin() + 4) == "CVLS");
  const AlignmentProblem back = decode_scene(bytes);
  CHECK(encode_scene(back) == bytes);
  CHECK(back.gt_pose.yaw == scene().gt_pose.yaw);
  CHECK(back.gt_pose.lateral == scene().gt_pose.lateral);
  CHECK(back.georef.gamma == scene().georef.gamma);
  CHECK(back.points.points == scene().points.points);
  for (int l = 0; l < scene().level_count(); ++l) {
    CHECK(back.satellite.levels[l].features.data == scene().satellite.levels[l].features.data);
    CHECK(back.satellite.levels[l].attention.data == scene().satellite.levels[l].attention.data);
    CHECK(back.ground.levels[l].features.data == scene().ground.levels[l].features.data);
    CHECK(back.ground.levels[l].features.normalized == scene().ground.levels[l].features.normalized);
  }
}

TEST_CASE("file round trip and I/O errors") {
  const auto dir = std::filesystem::temp_directory_path() / "cvloc_cvls_test";
  std::filesystem::create_directories(dir);
  save_scene(dir / "s.cvls", scene());
  CHECK(encode_scene(load_scene(dir / "s.cvls")) == encode_scene(scene()));
  save_pyramid(dir / "p.cvls", scene().satellite);
  const FeaturePyramid pyr = load_pyramid(dir / "p.cvls");
  CHECK(encode_pyramid(pyr) == encode_pyramid(scene().satellite));
  CHECK_THROWS_AS(load_scene(dir / "missing.cvls"), IoError);
  CHECK_THROWS_AS(load_pyramid(dir / "s.cvls"), FormatError);  // a scene is not a pyramid
  CHECK_THROWS_AS(save_scene(dir / "no" / "such" / "dir.cvls", scene()), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("truncation is a format error at every cut") {
  const auto bytes = encode_scene(scene());
  for (std::size_t cut : {std::size_t(0), std::size_t(3), std::size_t(5), std::size_t(9), std::size_t(40),
                          bytes.size() / 3, bytes.size() / 2, bytes.size() - 12, bytes.size() - 1}) {
    std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + cut);
    CHECK_THROWS_AS(decode_scene(t), FormatError);
  }
  const std::string msg = error_of(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 4));
  CHECK(msg.find("truncated while reading points") != std::string::npos);
  auto longer = bytes;
  longer.push_back(0);
  CHECK(error_of(longer).find("trailing") != std::string::npos);
}

TEST_CASE("header validation") {
  auto bytes = encode_scene(scene());
  auto bad = bytes;
  bad[0] = 'X';
  CHECK(error_of(bad).find("magic") != std::string::npos);
  bad = bytes;
  bad[4] = 2;
  CHECK(error_of(bad).find("version") != std::string::npos);
  bad = bytes;
  bad[10] = '#';
  CHECK(error_of(bad).find("JSON") != std::string::npos);
}

TEST_CASE("attention value 1.5 is rejected") {
  auto bytes = encode_scene(scene());
  const auto& l0 = scene().satellite.levels[0].features;
  const std::size_t attention0 = 10 + meta_length(bytes) + std::size_t(l0.height) * l0.width * l0.channels * 4;
  put_float(bytes, attention0 + 4 * 17, 1.5f);
  CHECK(error_of(bytes).find("attention out of [0,1]") != std::string::npos);
}

TEST_CASE("non-finite payload names the field") {
  auto bytes = encode_scene(scene());
  put_float(bytes, 10 + meta_length(bytes) + 4 * 5, std::numeric_limits<float>::quiet_NaN());
  CHECK(error_of(bytes).find("non-finite value in satellite features level 0") != std::string::npos);
  auto tail = encode_scene(scene());
  put_float(tail, tail.size() - 4, std::numeric_limits<float>::infinity());
  CHECK(error_of(tail).find("points") != std::string::npos);
}

TEST_CASE("missing metadata fields are named") {
  const auto bytes = encode_scene(scene());
  const std::uint32_t n = meta_length(bytes);
  std::string meta(bytes.begin() + 10, bytes.begin() + 10 + n);
  const auto pos = meta.find("\"gamma\"");
  REQUIRE(pos != std::string::npos);
  meta.replace(pos, 7, "\"gammX\"");
  std::vector<std::uint8_t> out(bytes.begin(), bytes.begin() + 10);
  out.insert(out.end(), meta.begin(), meta.end());
  out.insert(out.end(), bytes.begin() + 10 + n, bytes.end());
  CHECK(error_of(out).find("georef.gamma") != std::string::npos);
}

}  // TEST_SUITE
