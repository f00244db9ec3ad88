#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>

#include <json.hpp>

#include "arch.hpp"
#include "error.hpp"
#include "losses.hpp"
#include "tensor_io.hpp"
#include "train.hpp"

namespace slift {

using json = nlohmann::json;

namespace detail {

template <class E>
struct EnumName {
  E value;
  const char* name;
};

inline constexpr EnumName<Head> kHeads[] = {{Head::segmentation, "segmentation"}, {Head::depth, "depth"}};
inline constexpr EnumName<Activation> kActivations[] = {{Activation::relu, "relu"},
                                                        {Activation::leaky_relu, "leaky_relu"}};
inline constexpr EnumName<PadMode> kPadModes[] = {{PadMode::zero, "zero"}, {PadMode::circular, "circular"}};
inline constexpr EnumName<Fusion> kFusions[] = {
    {Fusion::sigmoid, "sigmoid"}, {Fusion::softmax, "softmax"}, {Fusion::mean, "mean"}};
inline constexpr EnumName<LossKind> kLosses[] = {
    {LossKind::dice, "dice"},           {LossKind::bce, "bce"},
    {LossKind::iou, "iou"},             {LossKind::masked_l1, "masked_l1"},
    {LossKind::masked_mse, "masked_mse"}, {LossKind::dice_bce, "dice+bce"},
    {LossKind::wbce_wiou, "wbce+wiou"}, {LossKind::masked_mse_l1, "masked_mse+masked_l1"}};
inline constexpr EnumName<ScheduleKind> kSchedules[] = {{ScheduleKind::constant, "constant"},
                                                        {ScheduleKind::cosine_warm_restarts, "cosine_warm_restarts"},
                                                        {ScheduleKind::step_decay, "step_decay"}};
inline constexpr EnumName<ClipMode> kClipModes[] = {{ClipMode::norm, "norm"}, {ClipMode::value, "value"}};

template <class E, std::size_t N>
std::string enum_name(const EnumName<E> (&table)[N], E v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  throw ConfigError("unnamed enum value");
}

template <class E, std::size_t N>
E enum_value(const EnumName<E> (&table)[N], const json& j, const std::string& key) {
  if (!j.is_string()) throw ConfigError(key + ": expected a string");
  const auto s = j.get<std::string>();
  std::string options;
  for (const auto& e : table) {
    if (s == e.name) return e.value;
    options += (options.empty() ? "" : "|") + std::string(e.name);
  }
  throw ConfigError(key + ": unknown value '" + s + "' (" + options + ")");
}

inline void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <class T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(key + ": wrong type");
  }
}

inline std::size_t get_count(const json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw ConfigError(key + ": expected a non-negative integer");
  return j.get<std::size_t>();
}

inline double get_number(const json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError(key + ": expected a number");
  return j.get<double>();
}

}  // namespace detail

inline std::string to_string(LossKind k) { return detail::enum_name(detail::kLosses, k); }
inline LossKind parse_loss(const std::string& s) { return detail::enum_value(detail::kLosses, json(s), "loss"); }

// Schema:
//   levels, res_units, lift_depth, in_channels, out_channels: integers
//   channels: integer (constant width) or list of L integers
//   kernel: [kz, ky, kx]
//   head: segmentation|depth, padding: zero|circular,
//   activation: relu|leaky_relu, fusion: sigmoid|softmax|mean
inline json to_json(const ArchSpec& s) {
  return {{"levels", s.levels},
          {"res_units", s.res_units},
          {"channels", s.channels},
          {"lift_depth", s.lift_depth},
          {"in_channels", s.in_channels},
          {"out_channels", s.out_channels},
          {"kernel", s.kernel},
          {"head", detail::enum_name(detail::kHeads, s.head)},
          {"padding", detail::enum_name(detail::kPadModes, s.padding)},
          {"activation", detail::enum_name(detail::kActivations, s.activation)},
          {"fusion", detail::enum_name(detail::kFusions, s.fusion)}};
}

inline ArchSpec arch_from_json(const json& j) {
  using namespace detail;
  reject_unknown(j, {"levels", "res_units", "channels", "lift_depth", "in_channels", "out_channels", "kernel", "head",
                     "padding", "activation", "fusion"},
                 "arch");
  ArchSpec s;
  if (j.contains("levels")) s.levels = get_count(j["levels"], "arch.levels");
  if (j.contains("res_units")) s.res_units = get_count(j["res_units"], "arch.res_units");
  if (j.contains("lift_depth")) s.lift_depth = get_count(j["lift_depth"], "arch.lift_depth");
  if (j.contains("in_channels")) s.in_channels = get_count(j["in_channels"], "arch.in_channels");
  if (j.contains("out_channels")) s.out_channels = get_count(j["out_channels"], "arch.out_channels");
  if (j.contains("channels")) {
    const auto& c = j["channels"];
    if (c.is_number_integer()) {
      s.channels.assign(s.levels, get_count(c, "arch.channels"));
    } else if (c.is_array()) {
      s.channels.clear();
      for (const auto& e : c) s.channels.push_back(get_count(e, "arch.channels"));
    } else {
      throw ConfigError("arch.channels: expected an integer or a list");
    }
  } else {
    s.channels.assign(s.levels, 8);
  }
  if (j.contains("kernel")) {
    const auto& k = j["kernel"];
    if (!k.is_array() || k.size() != 3) throw ConfigError("arch.kernel: expected [kz, ky, kx]");
    for (std::size_t i = 0; i < 3; ++i) s.kernel[i] = get_count(k[i], "arch.kernel");
  }
  if (j.contains("head")) s.head = enum_value(kHeads, j["head"], "arch.head");
  if (j.contains("padding")) s.padding = enum_value(kPadModes, j["padding"], "arch.padding");
  if (j.contains("activation")) s.activation = enum_value(kActivations, j["activation"], "arch.activation");
  if (j.contains("fusion")) s.fusion = enum_value(kFusions, j["fusion"], "arch.fusion");
  s.validate();
  return s;
}

// Schema: epochs, learning_rate, beta1, beta2, eps, weight_decay, grad_clip,
// clip_mode (norm|value), loss (dice+bce|wbce+wiou|masked_mse+masked_l1|...),
// seed, batch_size, select_s, track_all_epochs, boundary_weight, and
// schedule {kind, t0, t_mult, eta_min, step, gamma}.
inline json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"beta1", c.adamw.beta1},
          {"beta2", c.adamw.beta2},
          {"eps", c.adamw.eps},
          {"weight_decay", c.adamw.weight_decay},
          {"schedule",
           {{"kind", detail::enum_name(detail::kSchedules, c.schedule.kind)},
            {"t0", c.schedule.t0},
            {"t_mult", c.schedule.t_mult},
            {"eta_min", c.schedule.eta_min},
            {"step", c.schedule.step},
            {"gamma", c.schedule.gamma}}},
          {"grad_clip", c.grad_clip},
          {"clip_mode", detail::enum_name(detail::kClipModes, c.clip_mode)},
          {"loss", to_string(c.loss)},
          {"seed", c.seed},
          {"batch_size", c.batch_size},
          {"select_s", c.select_s},
          {"track_all_epochs", c.track_all_epochs},
          {"boundary_weight", c.boundary_weight}};
}

inline TrainConfig train_from_json(const json& j) {
  using namespace detail;
  reject_unknown(j, {"epochs", "learning_rate", "beta1", "beta2", "eps", "weight_decay", "schedule", "grad_clip",
                     "clip_mode", "loss", "seed", "batch_size", "select_s", "track_all_epochs", "boundary_weight"},
                 "train");
  TrainConfig c;
  if (j.contains("epochs")) c.epochs = get_count(j["epochs"], "train.epochs");
  if (j.contains("learning_rate")) c.learning_rate = get_number(j["learning_rate"], "train.learning_rate");
  if (j.contains("beta1")) c.adamw.beta1 = get_number(j["beta1"], "train.beta1");
  if (j.contains("beta2")) c.adamw.beta2 = get_number(j["beta2"], "train.beta2");
  if (j.contains("eps")) c.adamw.eps = get_number(j["eps"], "train.eps");
  if (j.contains("weight_decay")) c.adamw.weight_decay = get_number(j["weight_decay"], "train.weight_decay");
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    reject_unknown(s, {"kind", "t0", "t_mult", "eta_min", "step", "gamma"}, "train.schedule");
    if (s.contains("kind")) c.schedule.kind = enum_value(kSchedules, s["kind"], "train.schedule.kind");
    if (s.contains("t0")) c.schedule.t0 = get_count(s["t0"], "train.schedule.t0");
    if (s.contains("t_mult")) c.schedule.t_mult = get_count(s["t_mult"], "train.schedule.t_mult");
    if (s.contains("eta_min")) c.schedule.eta_min = get_number(s["eta_min"], "train.schedule.eta_min");
    if (s.contains("step")) c.schedule.step = get_count(s["step"], "train.schedule.step");
    if (s.contains("gamma")) c.schedule.gamma = get_number(s["gamma"], "train.schedule.gamma");
  }
  if (j.contains("grad_clip")) c.grad_clip = get_number(j["grad_clip"], "train.grad_clip");
  if (j.contains("clip_mode")) c.clip_mode = enum_value(kClipModes, j["clip_mode"], "train.clip_mode");
  if (j.contains("loss")) c.loss = enum_value(kLosses, j["loss"], "train.loss");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("train.seed: expected a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("batch_size")) c.batch_size = get_count(j["batch_size"], "train.batch_size");
  if (j.contains("select_s")) c.select_s = get_count(j["select_s"], "train.select_s");
  if (j.contains("track_all_epochs")) {
    if (!j["track_all_epochs"].is_boolean()) throw ConfigError("train.track_all_epochs: expected a boolean");
    c.track_all_epochs = j["track_all_epochs"].get<bool>();
  }
  if (j.contains("boundary_weight")) c.boundary_weight = get_number(j["boundary_weight"], "train.boundary_weight");
  c.validate();
  return c;
}

// A run configuration file: {"arch": {...}, "train": {...}}. Either section may
// be omitted to take the defaults.
struct RunConfig {
  ArchSpec arch;
  TrainConfig train;
};

inline json parse_json_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline RunConfig run_config_from_json(const json& j) {
  detail::reject_unknown(j, {"arch", "train"}, "config");
  RunConfig rc;
  if (j.contains("arch")) rc.arch = arch_from_json(j["arch"]);
  if (j.contains("train")) rc.train = train_from_json(j["train"]);
  return rc;
}

// Spec files for the costmodel accept either a bare arch object or a run
// config with an "arch" section.
inline ArchSpec arch_from_file(const std::filesystem::path& path) {
  const auto j = parse_json_file(path);
  if (j.is_object() && j.contains("arch")) return run_config_from_json(j).arch;
  return arch_from_json(j);
}

}  // namespace slift
