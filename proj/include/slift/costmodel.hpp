#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "arch.hpp"
#include "error.hpp"

namespace slift {

namespace detail {

inline std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = 0;
  if (__builtin_mul_overflow(a, b, &r) || r > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
    throw OverflowError("cost count exceeds 2^63");
  return r;
}

inline std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = 0;
  if (__builtin_add_overflow(a, b, &r) || r > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
    throw OverflowError("cost count exceeds 2^63");
  return r;
}

}  // namespace detail

struct LayerCost {
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

// params = prod(kernel) * Cin * Cout (+ Cout bias); macs = weight count times
// the number of output positions. A 2-D layer is passed with its two kernel
// extents and two output extents.
inline LayerCost conv_cost(std::size_t cin, std::size_t cout, const std::vector<std::size_t>& kernel,
                           const std::vector<std::size_t>& out_geometry, bool bias) {
  if (cin == 0 || cout == 0) throw ConfigError("conv_cost: channel counts must be positive");
  std::uint64_t w = detail::checked_mul(cin, cout);
  for (auto k : kernel) {
    if (k == 0) throw ConfigError("conv_cost: kernel extents must be positive");
    w = detail::checked_mul(w, k);
  }
  std::uint64_t positions = 1;
  for (auto g : out_geometry) {
    if (g == 0) throw ConfigError("conv_cost: geometry extents must be positive");
    positions = detail::checked_mul(positions, g);
  }
  LayerCost c;
  c.params = bias ? detail::checked_add(w, cout) : w;
  c.macs = detail::checked_mul(w, positions);
  return c;
}

struct CostRow {
  std::string name;
  std::string kind;  // conv | tconv | norm
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

struct Geometry {
  std::size_t height = 0, width = 0;
};

struct CostReport {
  std::vector<CostRow> rows;
  std::uint64_t total_params = 0;
  std::uint64_t total_macs = 0;
  std::size_t height = 0, width = 0, depth = 1;
};

// Walks the same layer plan Network::build instantiates. Norm layers count
// their gain/shift parameters and no MACs. A transposed conv with stride equal
// to its kernel costs one multiply-accumulate per weight per input position.
inline CostReport model_cost(const ArchSpec& spec, Geometry geo) {
  spec.validate_geometry(geo.height, geo.width);
  CostReport rep;
  rep.height = geo.height;
  rep.width = geo.width;
  rep.depth = spec.lift_depth;
  for (const auto& layer : layer_plan(spec)) {
    CostRow row;
    row.name = layer.name;
    if (layer.kind == LayerKind::norm) {
      row.kind = "norm";
      row.params = detail::checked_mul(2, layer.cout);
    } else {
      const std::size_t lvl = layer.kind == LayerKind::tconv ? layer.level + 1 : layer.level;
      const std::vector<std::size_t> g{spec.lift_depth, geo.height >> lvl, geo.width >> lvl};
      const auto& k = layer.params.kernel;
      const auto c = conv_cost(layer.cin, layer.cout, {k[0], k[1], k[2]}, g, layer.bias);
      row.kind = layer.kind == LayerKind::conv ? "conv" : "tconv";
      row.params = c.params;
      row.macs = c.macs;
    }
    rep.total_params = detail::checked_add(rep.total_params, row.params);
    rep.total_macs = detail::checked_add(rep.total_macs, row.macs);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

struct CostComparison {
  CostReport a, b;
  double param_ratio = 0.0;  // b / a
  double mac_ratio = 0.0;
};

inline CostComparison compare(const ArchSpec& a, const ArchSpec& b, Geometry geo) {
  CostComparison c;
  c.a = model_cost(a, geo);
  c.b = model_cost(b, geo);
  c.param_ratio = static_cast<double>(c.b.total_params) / static_cast<double>(c.a.total_params);
  c.mac_ratio = static_cast<double>(c.b.total_macs) / static_cast<double>(c.a.total_macs);
  return c;
}

}  // namespace slift
