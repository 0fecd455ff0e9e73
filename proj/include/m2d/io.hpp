#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "m2d/geometry.hpp"
#include "m2d/grid.hpp"

namespace m2d {

namespace detail {

inline void put_f32_le(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out.push_back(static_cast<char>(bits & 0xff));
  out.push_back(static_cast<char>((bits >> 8) & 0xff));
  out.push_back(static_cast<char>((bits >> 16) & 0xff));
  out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

inline float get_f32_le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path);
}

}  // namespace detail

/// Binary PPM (P6, maxval 255). Values are clamped from [0,1].
inline void write_ppm(const std::string& path, const Grid2D& img) {
  if (img.channels != 3) throw std::invalid_argument("write_ppm: need 3 channels");
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.size());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(y, x, c), 0.0, 1.0);
        out.push_back(static_cast<char>(std::lround(v * 255.0)));
      }
  detail::write_file(path, out);
}

inline Grid2D read_ppm(const std::string& path) {
  const std::string s = detail::read_file(path);
  int w = 0, h = 0, maxval = 0, pos = 0;
  if (s.rfind("P6", 0) != 0) throw std::runtime_error("read_ppm: not a P6 file: " + path);
  pos = 2;
  auto next_int = [&](int& v) {
    while (pos < static_cast<int>(s.size()) && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    int start = pos;
    while (pos < static_cast<int>(s.size()) && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    v = std::stoi(s.substr(start, pos - start));
  };
  next_int(w);
  next_int(h);
  next_int(maxval);
  ++pos;  // single whitespace after maxval
  if (maxval != 255) throw std::runtime_error("read_ppm: unsupported maxval");
  if (static_cast<std::size_t>(pos) + 3u * w * h > s.size())
    throw std::runtime_error("read_ppm: truncated file");
  Grid2D img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = static_cast<unsigned char>(s[pos++]) / 255.0;
  return img;
}

/// Binary PGM (P5, maxval 255) of a single-channel grid in [0,1].
inline void write_pgm(const std::string& path, const Grid2D& img) {
  if (img.channels != 1) throw std::invalid_argument("write_pgm: need 1 channel");
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double v = std::clamp(img.at(y, x, 0), 0.0, 1.0);
      out.push_back(static_cast<char>(std::lround(v * 255.0)));
    }
  detail::write_file(path, out);
}

/// PFM depth map: "Pf", width height, scale -1.0 (little-endian),
/// float32 rows stored bottom-up.
inline void write_pfm(const std::string& path, const DepthMap& d) {
  std::string out = "Pf\n" + std::to_string(d.width) + " " + std::to_string(d.height) + "\n-1.0\n";
  out.reserve(out.size() + d.size() * 4);
  for (int y = d.height - 1; y >= 0; --y)
    for (int x = 0; x < d.width; ++x)
      detail::put_f32_le(out, static_cast<float>(d.at(y, x)));
  detail::write_file(path, out);
}

inline DepthMap read_pfm(const std::string& path) {
  const std::string s = detail::read_file(path);
  if (s.rfind("Pf", 0) != 0) throw std::runtime_error("read_pfm: not a Pf file: " + path);
  std::size_t pos = 2;
  auto next_token = [&]() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    std::size_t start = pos;
    while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return s.substr(start, pos - start);
  };
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const double scale = std::stod(next_token());
  ++pos;  // single whitespace after the scale line
  if (scale >= 0) throw std::runtime_error("read_pfm: big-endian files unsupported");
  if (pos + 4u * w * h > s.size()) throw std::runtime_error("read_pfm: truncated file");
  DepthMap d(h, w);
  const unsigned char* bytes = reinterpret_cast<const unsigned char*>(s.data()) + pos;
  for (int y = h - 1; y >= 0; --y)
    for (int x = 0; x < w; ++x) {
      d.at(y, x) = detail::get_f32_le(bytes);
      bytes += 4;
    }
  return d;
}

/// External feature file: lets callers inject real encoder outputs.
/// Layout: magic "M2DF", u32 height, u32 width, u32 channels,
/// f32 scale, then height*width*channels little-endian f32 row-major
/// (channels innermost).
struct FeatureFile {
  Grid2D features;
  double scale = 1.0;  // feature resolution relative to the input image
};

inline void write_feature_file(const std::string& path, const Grid2D& f, double scale) {
  std::string out = "M2DF";
  detail::put_u32_le(out, static_cast<std::uint32_t>(f.height));
  detail::put_u32_le(out, static_cast<std::uint32_t>(f.width));
  detail::put_u32_le(out, static_cast<std::uint32_t>(f.channels));
  detail::put_f32_le(out, static_cast<float>(scale));
  for (double v : f.data) detail::put_f32_le(out, static_cast<float>(v));
  detail::write_file(path, out);
}

inline FeatureFile read_feature_file(const std::string& path) {
  const std::string s = detail::read_file(path);
  if (s.size() < 20 || s.rfind("M2DF", 0) != 0)
    throw std::runtime_error("read_feature_file: bad magic in " + path);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(s.data()) + 4;
  const int h = static_cast<int>(detail::get_u32_le(p));
  const int w = static_cast<int>(detail::get_u32_le(p + 4));
  const int c = static_cast<int>(detail::get_u32_le(p + 8));
  const double scale = detail::get_f32_le(p + 12);
  if (s.size() < 20u + 4u * h * w * c)
    throw std::runtime_error("read_feature_file: truncated file " + path);
  FeatureFile f{Grid2D(h, w, c), scale};
  p += 16;
  for (std::size_t i = 0; i < f.features.data.size(); ++i, p += 4)
    f.features.data[i] = detail::get_f32_le(p);
  return f;
}

/// Rig calibration JSON:
/// {
///   "cameras": [ { "fx", "fy", "cx", "cy", "width", "height",
///                  "extrinsic": [12 row-major 3x4 values, camera->ego] } ],
///   "adjacency": [ [left, right], ... ]
/// }
inline nlohmann::json rig_to_json(const CameraRig& rig) {
  nlohmann::json j;
  j["cameras"] = nlohmann::json::array();
  for (const auto& cam : rig.cameras) {
    nlohmann::json c;
    c["fx"] = cam.intrinsics.fx;
    c["fy"] = cam.intrinsics.fy;
    c["cx"] = cam.intrinsics.cx;
    c["cy"] = cam.intrinsics.cy;
    c["width"] = cam.width;
    c["height"] = cam.height;
    auto ext = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) {
      for (int col = 0; col < 3; ++col) ext.push_back(cam.extrinsic.rotation(r, col));
      ext.push_back(r == 0 ? cam.extrinsic.translation.x
                           : r == 1 ? cam.extrinsic.translation.y : cam.extrinsic.translation.z);
    }
    c["extrinsic"] = ext;
    j["cameras"].push_back(c);
  }
  j["adjacency"] = nlohmann::json::array();
  for (const auto& [l, r] : rig.adjacency) j["adjacency"].push_back({l, r});
  return j;
}

inline CameraRig rig_from_json(const nlohmann::json& j) {
  CameraRig rig;
  for (const auto& c : j.at("cameras")) {
    CameraModel cam;
    cam.intrinsics = {c.at("fx").get<double>(), c.at("fy").get<double>(),
                      c.at("cx").get<double>(), c.at("cy").get<double>()};
    cam.width = c.at("width").get<int>();
    cam.height = c.at("height").get<int>();
    const auto& ext = c.at("extrinsic");
    if (ext.size() != 12) throw std::runtime_error("rig_from_json: extrinsic must have 12 values");
    for (int r = 0; r < 3; ++r) {
      for (int col = 0; col < 3; ++col) cam.extrinsic.rotation(r, col) = ext[r * 4 + col];
      const double t = ext[r * 4 + 3];
      (r == 0 ? cam.extrinsic.translation.x
              : r == 1 ? cam.extrinsic.translation.y : cam.extrinsic.translation.z) = t;
    }
    rig.cameras.push_back(cam);
  }
  for (const auto& a : j.at("adjacency"))
    rig.adjacency.emplace_back(a.at(0).get<int>(), a.at(1).get<int>());
  rig.validate();
  return rig;
}

inline void write_rig(const std::string& path, const CameraRig& rig) {
  detail::write_file(path, rig_to_json(rig).dump(2) + "\n");
}

inline CameraRig read_rig(const std::string& path) {
  return rig_from_json(nlohmann::json::parse(detail::read_file(path)));
}

inline nlohmann::json pose_to_json(const RigidPose& p) {
  auto m = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m.push_back(p.rotation(r, c));
    m.push_back(r == 0 ? p.translation.x : r == 1 ? p.translation.y : p.translation.z);
  }
  return m;
}

inline RigidPose pose_from_json(const nlohmann::json& m) {
  if (m.size() != 12) throw std::runtime_error("pose_from_json: need 12 row-major 3x4 values");
  RigidPose p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = m[r * 4 + c];
    const double t = m[r * 4 + 3];
    (r == 0 ? p.translation.x : r == 1 ? p.translation.y : p.translation.z) = t;
  }
  return p;
}

}  // namespace m2d
