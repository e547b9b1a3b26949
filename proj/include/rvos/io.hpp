#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rvos/config.hpp"
#include "rvos/metrics.hpp"
#include "rvos/model.hpp"
#include "rvos/patch_segmentation.hpp"
#include "rvos/scene.hpp"

namespace rvos {

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError(std::string(what) + ": truncated input");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

inline std::uint64_t get_u64(std::istream& in, const char* what) {
  const std::uint64_t lo = get_u32(in, what);
  return lo | static_cast<std::uint64_t>(get_u32(in, what)) << 32;
}

inline void expect_magic(std::istream& in, const char* magic, const char* what) {
  char got[4];
  if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0) {
    throw FormatError(std::string(what) + ": bad magic (expected " + magic + ")");
  }
}

inline std::string get_bytes(std::istream& in, std::uint32_t n, const char* what) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw FormatError(std::string(what) + ": truncated input");
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// SGT1 tensors: "SGT1", u32 rank, u32 dims, float32 payload, all little-endian.

inline void write_sgt1(std::ostream& out, const Tensor& t) {
  out.write("SGT1", 4);
  detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

inline Tensor read_sgt1(std::istream& in) {
  detail::expect_magic(in, "SGT1", "SGT1");
  const std::uint32_t rank = detail::get_u32(in, "SGT1");
  if (rank > 8) throw FormatError("SGT1: implausible rank " + std::to_string(rank));
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(detail::get_u32(in, "SGT1"));
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<double>(std::bit_cast<float>(detail::get_u32(in, "SGT1")));
  return Tensor(std::move(shape), std::move(values));
}

inline void save_sgt1(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  write_sgt1(out, t);
}

inline Tensor load_sgt1(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path);
  return read_sgt1(in);
}

// ---------------------------------------------------------------------------
// Checkpoints: "SGCK", u32 config length, config text, u32 parameter count, then per
// parameter u32 name length, name, u32 rank, u32 dims, float64 payload.

inline void write_checkpoint(std::ostream& out, const RunConfig& cfg, const Model& model) {
  out.write("SGCK", 4);
  const std::string text = to_text(cfg);
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(model.store.size()));
  for (const auto& [name, t] : model.store.items()) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
}

struct Checkpoint {
  RunConfig config;
  std::unique_ptr<Model> model;
};

inline Checkpoint read_checkpoint(std::istream& in) {
  detail::expect_magic(in, "SGCK", "checkpoint");
  const std::string text = detail::get_bytes(in, detail::get_u32(in, "checkpoint"), "checkpoint");
  Checkpoint ck{parse_config(text), nullptr};
  ck.model = std::make_unique<Model>(ck.config.model);
  const std::uint32_t count = detail::get_u32(in, "checkpoint");
  if (count != ck.model->store.size()) {
    throw FormatError("checkpoint: holds " + std::to_string(count) + " parameters, model has " +
                      std::to_string(ck.model->store.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = detail::get_bytes(in, detail::get_u32(in, "checkpoint"), "checkpoint");
    if (!ck.model->store.contains(name)) throw FormatError("checkpoint: unknown parameter '" + name + "'");
    const std::uint32_t rank = detail::get_u32(in, "checkpoint");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(detail::get_u32(in, "checkpoint"));
    if (shape != ck.model->store.get(name).shape()) {
      throw FormatError("checkpoint: parameter '" + name + "' has shape " + shape_str(shape));
    }
    auto& values = ck.model->store.values(name);
    for (auto& v : values) {
      v = std::bit_cast<double>(detail::get_u64(in, "checkpoint"));
      if (!std::isfinite(v)) throw FormatError("checkpoint: non-finite value in '" + name + "'");
    }
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const RunConfig& cfg, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  write_checkpoint(out, cfg, model);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path);
  return read_checkpoint(in);
}

// ---------------------------------------------------------------------------
// Images

/// Binary PGM (P5), 8-bit, 0/255.
inline void write_pgm(const std::string& path, const BinaryMask& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out << "P5\n" << m.width << " " << m.height << "\n255\n";
  for (auto p : m.pixels) out.put(static_cast<char>(p ? 255 : 0));
}

/// Reads a P5 PGM; pixels >= 128 are foreground.
inline BinaryMask read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path);
  auto token = [&]() {
    std::string t;
    while (in >> std::ws && in.peek() == '#') std::getline(in, t);
    if (!(in >> t)) throw FormatError(path + ": truncated PGM header");
    return t;
  };
  if (token() != "P5") throw FormatError(path + ": not a binary PGM");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw FormatError(path + ": malformed PGM header");
  }
  if (maxval != 255) throw FormatError(path + ": only 8-bit PGM is supported");
  in.get();
  std::vector<char> raw(w * h);
  if (!in.read(raw.data(), static_cast<std::streamsize>(raw.size()))) throw FormatError(path + ": truncated PGM data");
  BinaryMask m(h, w);
  for (std::size_t i = 0; i < raw.size(); ++i) m.pixels[i] = static_cast<unsigned char>(raw[i]) >= 128 ? 1 : 0;
  return m;
}

/// Binary PPM (P6) of an RGB frame [3,H,W] in [0,1].
inline void write_ppm(const std::string& path, const Tensor& frame) {
  detail::require_rank(frame, 3, "write_ppm");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  const std::size_t h = frame.dim(1), w = frame.dim(2);
  out << "P6\n" << w << " " << h << "\n255\n";
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(frame[c * h * w + i], 0.0, 1.0);
      out.put(static_cast<char>(static_cast<int>(std::lround(v * 255.0))));
    }
}

// ---------------------------------------------------------------------------
// Scenes

inline nlohmann::json scene_to_json(const SceneSpec& s) {
  nlohmann::json j;
  j["seed"] = s.seed;
  j["knobs"] = {{"height", s.knobs.height},     {"width", s.knobs.width},       {"frames", s.knobs.frames},
                {"objects", s.knobs.objects},   {"expressions", s.knobs.expressions},
                {"min_size", s.knobs.min_size}, {"max_size", s.knobs.max_size}, {"max_speed", s.knobs.max_speed},
                {"noise", s.knobs.noise},       {"gap", s.knobs.gap}};
  static constexpr const char* shapes[] = {"circle", "square", "triangle"};
  for (const auto& o : s.objects) {
    j["objects"].push_back({{"shape", shapes[static_cast<int>(o.shape)]},
                            {"color", vocab::word(vocab::first_color + o.color)},
                            {"size", o.size},
                            {"position", {o.x, o.y}},
                            {"velocity", {o.vx, o.vy}}});
  }
  for (std::size_t e = 0; e < s.expressions.size(); ++e) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : s.boxes[e]) boxes.push_back({b[0], b[1], b[2], b[3]});
    j["expressions"].push_back({{"tokens", s.expressions[e].tokens},
                                {"text", s.expressions[e].text()},
                                {"object", s.expressions[e].object},
                                {"boxes", boxes}});
  }
  return j;
}

inline SceneKnobs knobs_from_json(const nlohmann::json& k) {
  SceneKnobs knobs;
  knobs.height = k.at("height").get<std::size_t>();
  knobs.width = k.at("width").get<std::size_t>();
  knobs.frames = k.at("frames").get<std::size_t>();
  knobs.objects = k.at("objects").get<std::size_t>();
  knobs.expressions = k.at("expressions").get<std::size_t>();
  knobs.min_size = k.at("min_size").get<double>();
  knobs.max_size = k.at("max_size").get<double>();
  knobs.max_speed = k.at("max_speed").get<double>();
  knobs.noise = k.at("noise").get<double>();
  knobs.gap = k.at("gap").get<int>();
  return knobs;
}

inline std::string expression_dir(std::size_t e) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "expr_%02zu", e);
  return buf;
}

inline std::string frame_file(std::size_t t, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%03zu.%s", t, ext);
  return buf;
}

/// Writes scene.json, frames as PPM and ground-truth masks as PGM under `dir`.
inline void save_scene(const std::string& dir, const SceneSpec& s) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "scene.json");
    if (!out) throw FormatError("cannot write scene.json in " + dir);
    out << scene_to_json(s).dump(2) << "\n";
  }
  for (std::size_t t = 0; t < s.frames.size(); ++t) write_ppm((fs::path(dir) / frame_file(t, "ppm")).string(), s.frames[t]);
  for (std::size_t e = 0; e < s.masks.size(); ++e) {
    const fs::path sub = fs::path(dir) / "gt" / expression_dir(e);
    fs::create_directories(sub);
    for (std::size_t t = 0; t < s.masks[e].size(); ++t) write_pgm((sub / frame_file(t, "pgm")).string(), s.masks[e][t]);
  }
}

/// Regenerates a scene from the seed and knobs in scene.json and checks it matches the file.
inline SceneSpec load_scene(const std::string& dir) {
  const auto path = std::filesystem::path(dir) / "scene.json";
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    SceneSpec s = generate_scene(j.at("seed").get<std::uint64_t>(), knobs_from_json(j.at("knobs")));
    if (scene_to_json(s) != j) throw FormatError(path.string() + ": contents do not match its seed and knobs");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace rvos
