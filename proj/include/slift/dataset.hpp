#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "rng.hpp"
#include "synth.hpp"
#include "tensor.hpp"
#include "tensor_io.hpp"

namespace slift {

using json = nlohmann::json;

enum class Task { segmentation, depth };

inline std::string to_string(Task t) { return t == Task::segmentation ? "segmentation" : "depth"; }

inline Task parse_task(const std::string& s) {
  if (s == "segmentation") return Task::segmentation;
  if (s == "depth") return Task::depth;
  throw ConfigError("unknown task '" + s + "' (segmentation|depth)");
}

// One training/evaluation pair. `image` is [C,Y,X] in [0,1]; `target` is the
// binary mask or depth map [Cout,Y,X]; `valid` is [1,Y,X] or empty.
struct Sample {
  std::string id;
  Tensor<float> image;
  Tensor<float> target;
  Tensor<float> valid;
};

struct Dataset {
  Task task = Task::segmentation;
  std::size_t height = 0, width = 0, in_channels = 0, classes = 1;
  json generator = json::object();
  std::vector<Sample> samples;

  void validate() const {
    if (samples.empty()) throw ConfigError("dataset is empty");
    for (const auto& s : samples) {
      const auto& d = s.image.dims();
      if (d.size() != 3 || d[1] != height || d[2] != width || d[0] != in_channels)
        throw ConfigError("dataset: sample " + s.id + " image " + dims_str(d) + " breaks the dataset geometry");
      if (s.target.dims() != Dims{classes, height, width})
        throw ConfigError("dataset: sample " + s.id + " target " + dims_str(s.target.dims()) + " breaks the dataset geometry");
      if (!s.valid.empty() && s.valid.dims() != Dims{1, height, width})
        throw ConfigError("dataset: sample " + s.id + " valid mask has wrong geometry");
    }
  }
};

struct SegmentationParams {
  std::uint64_t seed = 0;
  std::size_t n = 10;
  std::size_t size = 64;
  std::string shape_family = "mixed";
};

struct DepthParams {
  std::uint64_t seed = 0;
  std::size_t n = 10;
  std::size_t size = 64;
};

// Sample i depends only on (seed, i).
inline Dataset gen_segmentation(const SegmentationParams& p) {
  if (p.n == 0) throw ConfigError("gen_segmentation: n must be > 0");
  if (!valid_shape_family(p.shape_family)) throw ConfigError("unknown shape family '" + p.shape_family + "'");
  Dataset ds;
  ds.task = Task::segmentation;
  ds.height = ds.width = p.size;
  ds.in_channels = 3;
  ds.classes = 1;
  ds.generator = {{"kind", "segmentation"}, {"seed", p.seed}, {"n", p.n}, {"size", p.size},
                  {"shape_family", p.shape_family}};
  for (std::size_t i = 0; i < p.n; ++i) {
    auto d = draw_segmentation(derive_seed(p.seed, 0x5e9, i), p.size, p.shape_family);
    char id[32];
    std::snprintf(id, sizeof id, "%05zu", i);
    ds.samples.push_back({id, std::move(d.image), std::move(d.mask), {}});
  }
  return ds;
}

inline Dataset gen_depth(const DepthParams& p) {
  if (p.n == 0) throw ConfigError("gen_depth: n must be > 0");
  Dataset ds;
  ds.task = Task::depth;
  ds.height = ds.width = p.size;
  ds.in_channels = 3;
  ds.classes = 1;
  ds.generator = {{"kind", "depth"}, {"seed", p.seed}, {"n", p.n}, {"size", p.size}};
  for (std::size_t i = 0; i < p.n; ++i) {
    auto d = draw_depth(derive_seed(p.seed, 0xde9, i), p.size);
    char id[32];
    std::snprintf(id, sizeof id, "%05zu", i);
    ds.samples.push_back({id, std::move(d.image), std::move(d.depth), std::move(d.valid)});
  }
  return ds;
}

namespace detail {

inline Tensor<std::uint8_t> to_u8(const Tensor<float>& t, float scale) {
  Tensor<std::uint8_t> out(t.dims());
  for (std::size_t i = 0; i < t.numel(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(t[i] * scale, 0.0f, 255.0f)));
  return out;
}

}  // namespace detail

// Layout: manifest.json plus one SLT1 file per tensor. Images and binary maps
// are stored as u8, depth as f32.
inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  ds.validate();
  std::filesystem::create_directories(dir);
  json samples = json::array();
  for (const auto& s : ds.samples) {
    json rec;
    rec["id"] = s.id;
    rec["input"] = "input_" + s.id + ".slt";
    rec["target"] = "target_" + s.id + ".slt";
    write_tensor(dir / rec["input"].get<std::string>(), detail::to_u8(s.image, 255.0f));
    if (ds.task == Task::segmentation)
      write_tensor(dir / rec["target"].get<std::string>(), detail::to_u8(s.target, 1.0f));
    else
      write_tensor(dir / rec["target"].get<std::string>(), s.target);
    if (!s.valid.empty()) {
      rec["valid"] = "valid_" + s.id + ".slt";
      write_tensor(dir / rec["valid"].get<std::string>(), detail::to_u8(s.valid, 1.0f));
    }
    samples.push_back(rec);
  }
  json manifest = {{"format", "slift-dataset"},
                   {"version", 1},
                   {"task", to_string(ds.task)},
                   {"geometry", {ds.height, ds.width}},
                   {"in_channels", ds.in_channels},
                   {"classes", ds.classes},
                   {"generator", ds.generator},
                   {"samples", samples}};
  const std::string text = manifest.dump(2) + "\n";
  write_file_atomic(dir / "manifest.json", Bytes(text.begin(), text.end()));
}

// Reads and fully validates a dataset directory; any missing file, parse
// failure or geometry mixture is reported before anything is returned.
inline Dataset read_dataset(const std::filesystem::path& dir) {
  const auto mpath = dir / "manifest.json";
  if (!std::filesystem::exists(mpath)) throw ConfigError("no manifest.json in " + dir.string());
  json m;
  try {
    const auto bytes = read_file(mpath);
    m = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw ConfigError("manifest.json: " + std::string(e.what()));
  }
  Dataset ds;
  try {
    if (m.at("format").get<std::string>() != "slift-dataset") throw ConfigError("manifest.json: unknown format");
    ds.task = parse_task(m.at("task").get<std::string>());
    ds.height = m.at("geometry").at(0).get<std::size_t>();
    ds.width = m.at("geometry").at(1).get<std::size_t>();
    ds.in_channels = m.at("in_channels").get<std::size_t>();
    ds.classes = m.at("classes").get<std::size_t>();
    ds.generator = m.value("generator", json::object());
    for (const auto& rec : m.at("samples")) {
      Sample s;
      s.id = rec.at("id").get<std::string>();
      auto load = [&](const char* key) {
        const auto p = dir / rec.at(key).get<std::string>();
        if (!std::filesystem::exists(p)) throw ConfigError("dataset: missing file " + p.string());
        return read_tensor(p);
      };
      s.image = as_dtype<float>(load("input"));
      // Same rounding as the generator, so a written dataset reads back exactly.
      for (auto& v : s.image.data()) v = static_cast<float>(static_cast<double>(v) / 255.0);
      s.target = as_dtype<float>(load("target"));
      if (rec.contains("valid")) s.valid = as_dtype<float>(load("valid"));
      ds.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ConfigError("manifest.json: " + std::string(e.what()));
  }
  ds.validate();
  return ds;
}

}  // namespace slift
