#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "conv.hpp"
#include "error.hpp"
#include "lifting.hpp"

namespace slift {

enum class Head { segmentation, depth };
enum class Activation { relu, leaky_relu };

// Declarative U-Net description. SL mode keeps a constant channel width over
// all levels and runs on a lifted z axis of depth m; the 2-D baseline is the
// degenerate configuration kernel (1,ky,kx), m = 1.
struct ArchSpec {
  std::size_t levels = 5;
  std::size_t res_units = 1;
  std::vector<std::size_t> channels = std::vector<std::size_t>(5, 8);
  std::size_t lift_depth = 16;
  std::size_t in_channels = 3;
  std::size_t out_channels = 1;
  std::array<std::size_t, 3> kernel{3, 3, 3};
  Head head = Head::segmentation;
  PadMode padding = PadMode::zero;
  Activation activation = Activation::relu;
  Fusion fusion = Fusion::sigmoid;  // segmentation heads only; depth fuses by mean

  bool operator==(const ArchSpec&) const = default;

  Fusion effective_fusion() const { return head == Head::depth ? Fusion::mean : fusion; }

  void validate() const {
    if (levels < 2) throw ConfigError("arch: levels must be >= 2");
    if (channels.size() != levels)
      throw ConfigError("arch: channels list has " + std::to_string(channels.size()) + " entries, expected " +
                        std::to_string(levels));
    for (auto c : channels)
      if (c < 1) throw ConfigError("arch: channel widths must be >= 1");
    if (lift_depth < 1) throw ConfigError("arch: lift_depth must be >= 1");
    if (in_channels < 1 || out_channels < 1) throw ConfigError("arch: in/out channels must be >= 1");
    for (auto k : kernel)
      if (k < 1 || k % 2 == 0) throw ConfigError("arch: kernel extents must be odd and >= 1");
    if (head == Head::depth && out_channels != 1) throw ConfigError("arch: depth head has exactly one output channel");
    if (fusion == Fusion::mean && head != Head::depth) throw ConfigError("arch: mean fusion is reserved for depth heads");
  }

  // Y and X must halve cleanly at every down-sampling step.
  void validate_geometry(std::size_t height, std::size_t width) const {
    validate();
    const std::size_t f = std::size_t{1} << (levels - 1);
    if (height % f != 0 || width % f != 0)
      throw ConfigError("arch: spatial extents " + std::to_string(height) + "x" + std::to_string(width) +
                        " not divisible by 2^(L-1) = " + std::to_string(f));
  }
};

inline ArchSpec sl_unet(std::size_t levels, std::size_t res_units, std::size_t width, std::size_t m,
                        std::size_t in_channels = 3, std::size_t out_channels = 1) {
  ArchSpec s;
  s.levels = levels;
  s.res_units = res_units;
  s.channels.assign(levels, width);
  s.lift_depth = m;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  return s;
}

// 2-D U-Net counterpart: channels double from `base`, capped at `cap`.
inline ArchSpec baseline_unet(std::size_t levels, std::size_t res_units, std::size_t in_channels = 3,
                              std::size_t out_channels = 1, std::size_t base = 32, std::size_t cap = 512) {
  ArchSpec s;
  s.levels = levels;
  s.res_units = res_units;
  s.channels.clear();
  std::size_t c = base;
  for (std::size_t l = 0; l < levels; ++l) {
    s.channels.push_back(std::min(c, cap));
    c *= 2;
  }
  s.lift_depth = 1;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel = {1, 3, 3};
  return s;
}

enum class LayerKind { conv, tconv, norm };

// One parameterized layer in execution order. `level` is the resolution level
// of the layer's output; a tconv reads from level + 1.
struct LayerDesc {
  std::string name;
  LayerKind kind = LayerKind::conv;
  std::size_t cin = 0, cout = 0;
  ConvParams params;
  std::size_t level = 0;
  bool bias = true;
};

namespace detail {

inline void plan_block(std::vector<LayerDesc>& out, const ArchSpec& s, const std::string& prefix, std::size_t cin,
                       std::size_t cout, std::size_t level) {
  ConvParams body = ConvParams::same(s.kernel);
  body.mode = s.padding;
  auto conv = [&](std::string name, std::size_t ci, std::size_t co, ConvParams p) {
    out.push_back({std::move(name), LayerKind::conv, ci, co, p, level, true});
  };
  auto norm = [&](std::string name, std::size_t c) {
    out.push_back({std::move(name), LayerKind::norm, c, c, ConvParams{}, level, false});
  };
  if (s.res_units == 0) {
    conv(prefix + ".conv", cin, cout, body);
    norm(prefix + ".norm", cout);
    return;
  }
  for (std::size_t u = 0; u < s.res_units; ++u) {
    const std::string up = prefix + ".u" + std::to_string(u);
    const std::size_t ci = u == 0 ? cin : cout;
    conv(up + ".conv", ci, cout, body);
    norm(up + ".norm", cout);
    if (ci != cout) conv(up + ".proj", ci, cout, ConvParams{});
  }
}

}  // namespace detail

// Every parameterized layer the network owns, in the order the forward pass
// uses them. Both Network::build and model_cost are driven by this list.
inline std::vector<LayerDesc> layer_plan(const ArchSpec& s) {
  s.validate();
  std::vector<LayerDesc> out;
  const std::size_t L = s.levels;
  ConvParams down;
  down.kernel = {s.kernel[0], 2, 2};
  down.stride = {1, 2, 2};
  down.pad = {s.kernel[0] / 2, 0, 0};
  down.mode = s.padding;
  ConvParams up;
  up.kernel = {1, 2, 2};
  up.stride = {1, 2, 2};

  detail::plan_block(out, s, "enc0", s.in_channels, s.channels[0], 0);
  for (std::size_t l = 1; l < L; ++l) {
    const std::string p = "down" + std::to_string(l);
    out.push_back({p + ".conv", LayerKind::conv, s.channels[l - 1], s.channels[l], down, l, true});
    out.push_back({p + ".norm", LayerKind::norm, s.channels[l], s.channels[l], ConvParams{}, l, false});
    detail::plan_block(out, s, "enc" + std::to_string(l), s.channels[l], s.channels[l], l);
  }
  for (std::size_t l = L - 1; l-- > 0;) {
    const std::string p = "up" + std::to_string(l);
    out.push_back({p + ".tconv", LayerKind::tconv, s.channels[l + 1], s.channels[l], up, l, true});
    out.push_back({p + ".norm", LayerKind::norm, s.channels[l], s.channels[l], ConvParams{}, l, false});
    detail::plan_block(out, s, "dec" + std::to_string(l), 2 * s.channels[l], s.channels[l], l);
  }
  out.push_back({"head", LayerKind::conv, s.channels[0], s.out_channels, ConvParams{}, 0, true});
  return out;
}

}  // namespace slift
