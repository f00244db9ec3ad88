#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace slift {

enum class ShapeKind { ellipse, rectangle, ring };

// One filled primitive in pixel coordinates; pixel (x, y) has its center at
// (x + 0.5, y + 0.5).
struct Shape {
  ShapeKind kind = ShapeKind::ellipse;
  double cx = 0, cy = 0;
  double rx = 1, ry = 1;  // semi-axes / half extents
  double angle = 0;       // radians
  double inner = 0.5;     // ring: inner radius as a fraction of the outer
  double depth = 0;       // depth scenes only

  bool contains(double px, double py) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dx = px - cx, dy = py - cy;
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    switch (kind) {
      case ShapeKind::ellipse: return u * u + v * v <= 1.0;
      case ShapeKind::rectangle: return std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
      case ShapeKind::ring: {
        const double r2 = u * u + v * v;
        return r2 <= 1.0 && r2 >= inner * inner;
      }
    }
    return false;
  }
};

inline ShapeKind parse_shape_family(const std::string& s, Rng& rng) {
  if (s == "ellipse") return ShapeKind::ellipse;
  if (s == "rectangle") return ShapeKind::rectangle;
  if (s == "ring") return ShapeKind::ring;
  if (s == "mixed") return static_cast<ShapeKind>(rng.below(3));
  throw ConfigError("unknown shape family '" + s + "' (ellipse|rectangle|ring|mixed)");
}

inline bool valid_shape_family(const std::string& s) {
  return s == "ellipse" || s == "rectangle" || s == "ring" || s == "mixed";
}

// Binary mask [1,S,S]: pixel centers inside any shape.
inline Tensor<float> rasterize_mask(const std::vector<Shape>& shapes, std::size_t size) {
  Tensor<float> m(Dims{1, size, size});
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x)
      for (const auto& sh : shapes)
        if (sh.contains(x + 0.5, y + 0.5)) {
          m[y * size + x] = 1.0f;
          break;
        }
  return m;
}

// Fraction of a 4x4 sub-sample grid inside any shape, per pixel.
inline std::vector<double> coverage(const std::vector<Shape>& shapes, std::size_t size) {
  std::vector<double> cov(size * size, 0.0);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < 4; ++sy)
        for (int sx = 0; sx < 4; ++sx) {
          const double px = x + (sx + 0.5) / 4.0, py = y + (sy + 0.5) / 4.0;
          for (const auto& sh : shapes)
            if (sh.contains(px, py)) {
              ++hits;
              break;
            }
        }
      cov[y * size + x] = hits / 16.0;
    }
  return cov;
}

namespace detail {

// Smooth random field from a handful of low-frequency sinusoids, roughly in [-1, 1].
inline std::vector<double> smooth_field(Rng& rng, std::size_t size, int waves = 4) {
  std::vector<double> f(size * size, 0.0);
  for (int w = 0; w < waves; ++w) {
    const double kx = rng.uniform(-3.0, 3.0), ky = rng.uniform(-3.0, 3.0);
    const double ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        f[y * size + x] += std::sin(2.0 * std::numbers::pi * (kx * x + ky * y) / static_cast<double>(size) + ph) / waves;
  }
  return f;
}

inline Shape random_shape(Rng& rng, ShapeKind kind, std::size_t size) {
  const double S = static_cast<double>(size);
  Shape s;
  s.kind = kind;
  s.cx = rng.uniform(0.25 * S, 0.75 * S);
  s.cy = rng.uniform(0.25 * S, 0.75 * S);
  s.rx = rng.uniform(0.12 * S, 0.32 * S);
  s.ry = rng.uniform(0.12 * S, 0.32 * S);
  s.angle = rng.uniform(0.0, std::numbers::pi);
  s.inner = rng.uniform(0.35, 0.6);
  return s;
}

inline float quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<float>(std::round(c * 255.0) / 255.0);
}

}  // namespace detail

struct SegmentationDraw {
  std::vector<Shape> shapes;
  Tensor<float> image;  // [3,S,S], values k/255
  Tensor<float> mask;   // [1,S,S]
};

inline constexpr double kMinCoverage = 0.05;
inline constexpr double kMaxCoverage = 0.60;

// Anti-aliased shapes over a textured background. Foreground coverage is kept
// within [5%, 60%] by redrawing the shapes.
inline SegmentationDraw draw_segmentation(std::uint64_t sample_seed, std::size_t size, const std::string& family) {
  if (size < 8) throw ConfigError("segmentation size must be >= 8");
  Rng rng(sample_seed);
  SegmentationDraw d;
  for (int attempt = 0;; ++attempt) {
    d.shapes.clear();
    const std::size_t count = 1 + rng.below(2);
    for (std::size_t k = 0; k < count; ++k) d.shapes.push_back(detail::random_shape(rng, parse_shape_family(family, rng), size));
    d.mask = rasterize_mask(d.shapes, size);
    double frac = 0;
    for (auto v : d.mask.data()) frac += v;
    frac /= static_cast<double>(size * size);
    if (frac >= kMinCoverage && frac <= kMaxCoverage) break;
    if (attempt > 1000) throw ConfigError("segmentation generator could not meet the coverage bounds");
  }

  const auto cov = coverage(d.shapes, size);
  std::array<double, 3> bg{}, fg{};
  const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  const double base = sign > 0 ? rng.uniform(0.2, 0.4) : rng.uniform(0.6, 0.8);
  const double contrast = rng.uniform(0.25, 0.4);
  for (int c = 0; c < 3; ++c) {
    bg[c] = base + rng.uniform(-0.08, 0.08);
    fg[c] = bg[c] + sign * (contrast + rng.uniform(-0.05, 0.05));
  }
  const auto bg_tex = detail::smooth_field(rng, size);
  const auto fg_tex = detail::smooth_field(rng, size);
  d.image = Tensor<float>(Dims{3, size, size});
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < size * size; ++i) {
      const double b = bg[c] + 0.08 * bg_tex[i] + 0.03 * rng.normal();
      const double f = fg[c] + 0.05 * fg_tex[i] + 0.03 * rng.normal();
      d.image[c * size * size + i] = detail::quantize(std::max(0.02, (1.0 - cov[i]) * b + cov[i] * f));
    }
  return d;
}

struct DepthScene {
  double base = 5.0, grad_x = 0.0, grad_y = 0.0;  // background plane
  std::vector<Shape> occluders;                     // `depth` set, distinct

  double plane_depth(double px, double py, std::size_t size) const {
    const double S = static_cast<double>(size);
    return base + grad_x * (px / S - 0.5) + grad_y * (py / S - 0.5);
  }
};

// Front-most (smallest depth) surface at every pixel center, as [1,S,S].
inline Tensor<float> composite_depth(const DepthScene& scene, std::size_t size) {
  Tensor<float> d(Dims{1, size, size});
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double depth = scene.plane_depth(px, py, size);
      for (const auto& o : scene.occluders)
        if (o.contains(px, py)) depth = std::min(depth, o.depth);
      d[y * size + x] = static_cast<float>(depth);
    }
  return d;
}

struct DepthDraw {
  DepthScene scene;
  Tensor<float> image;  // [3,S,S]
  Tensor<float> depth;  // [1,S,S], positive
  Tensor<float> valid;  // [1,S,S], binary
};

inline constexpr double kMinDropped = 0.10;
inline constexpr double kMaxDropped = 0.30;

// Planar background with occluding shapes at distinct depths. Brightness falls
// with depth so the scene is recoverable from the image; a random 10-30% of
// pixels is marked invalid.
inline DepthDraw draw_depth(std::uint64_t sample_seed, std::size_t size) {
  if (size < 8) throw ConfigError("depth size must be >= 8");
  Rng rng(sample_seed);
  DepthDraw d;
  d.scene.base = rng.uniform(5.5, 7.0);
  d.scene.grad_x = rng.uniform(-2.0, 2.0);
  d.scene.grad_y = rng.uniform(-2.0, 2.0);
  const std::size_t n_occ = 1 + rng.below(3);
  for (std::size_t k = 0; k < n_occ; ++k) {
    auto s = detail::random_shape(rng, static_cast<ShapeKind>(rng.below(2)), size);
    s.rx *= 0.8;
    s.ry *= 0.8;
    // Distinct depth bands, nearer than the whole background plane.
    s.depth = 1.0 + 0.9 * static_cast<double>(k) + rng.uniform(0.0, 0.6);
    d.scene.occluders.push_back(s);
  }
  d.depth = composite_depth(d.scene, size);

  const auto tex = detail::smooth_field(rng, size);
  std::array<double, 3> tint{};
  for (auto& t : tint) t = rng.uniform(0.85, 1.0);
  d.image = Tensor<float>(Dims{3, size, size});
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < size * size; ++i) {
      const double shade = 1.05 - static_cast<double>(d.depth[i]) / 10.0;
      d.image[c * size * size + i] = detail::quantize(std::max(0.02, tint[c] * shade + 0.04 * tex[i] + 0.02 * rng.normal()));
    }

  const std::size_t n = size * size;
  const double frac = rng.uniform(kMinDropped, kMaxDropped);
  const double nd = static_cast<double>(n);
  const auto dropped = static_cast<std::size_t>(
      std::clamp(std::round(frac * nd), std::ceil(kMinDropped * nd), std::floor(kMaxDropped * nd)));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx.begin(), idx.end());
  d.valid = Tensor<float>(Dims{1, size, size}, 1.0f);
  for (std::size_t k = 0; k < dropped; ++k) d.valid[idx[k]] = 0.0f;
  return d;
}

enum class Corruption { gaussian_noise, blur, occlusion };

inline Corruption parse_corruption(const std::string& s) {
  if (s == "gaussian_noise") return Corruption::gaussian_noise;
  if (s == "blur") return Corruption::blur;
  if (s == "occlusion") return Corruption::occlusion;
  throw ConfigError("unknown corruption '" + s + "' (gaussian_noise|blur|occlusion)");
}

inline constexpr std::array<double, 5> kNoiseSigma{0.04, 0.08, 0.16, 0.32, 0.64};
inline constexpr std::array<std::size_t, 5> kBlurRadius{1, 2, 3, 4, 6};
inline constexpr std::array<double, 5> kOcclusionArea{0.06, 0.12, 0.18, 0.24, 0.30};

// Degrade an image [C,Y,X]. Severity 1..5 strictly increases the noise sigma,
// blur radius or occluded area; for a fixed seed the noise field and occluder
// center are shared across severities, so occluders are nested.
inline Tensor<float> corrupt(const Tensor<float>& image, Corruption kind, int severity, std::uint64_t seed) {
  if (severity < 1 || severity > 5) throw ConfigError("corrupt: severity must be in 1..5");
  const auto& d = image.dims();
  if (d.size() != 3) throw ShapeError("corrupt: image must be [C,Y,X], got " + dims_str(d));
  const std::size_t C = d[0], H = d[1], W = d[2];
  const auto s = static_cast<std::size_t>(severity - 1);
  Rng rng(derive_seed(seed, 0xc0220));
  Tensor<float> out = image;
  switch (kind) {
    case Corruption::gaussian_noise:
      for (auto& v : out.data()) v = static_cast<float>(v + kNoiseSigma[s] * rng.normal());
      break;
    case Corruption::blur: {
      const long r = static_cast<long>(kBlurRadius[s]);
      auto clampi = [](long v, long n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };
      Tensor<float> tmp(d);
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x) {
            double acc = 0;
            for (long k = -r; k <= r; ++k)
              acc += image[(c * H + y) * W + static_cast<std::size_t>(clampi(static_cast<long>(x) + k, static_cast<long>(W)))];
            tmp[(c * H + y) * W + x] = static_cast<float>(acc / static_cast<double>(2 * r + 1));
          }
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x) {
            double acc = 0;
            for (long k = -r; k <= r; ++k)
              acc += tmp[(c * H + static_cast<std::size_t>(clampi(static_cast<long>(y) + k, static_cast<long>(H)))) * W + x];
            out[(c * H + y) * W + x] = static_cast<float>(acc / static_cast<double>(2 * r + 1));
          }
      }
      break;
    }
    case Corruption::occlusion: {
      const double largest = std::sqrt(kOcclusionArea.back());
      const double max_h = largest * static_cast<double>(H), max_w = largest * static_cast<double>(W);
      const double cy = rng.uniform(max_h / 2.0, static_cast<double>(H) - max_h / 2.0);
      const double cx = rng.uniform(max_w / 2.0, static_cast<double>(W) - max_w / 2.0);
      const double side = std::sqrt(kOcclusionArea[s]);
      const double hh = side * static_cast<double>(H) / 2.0, hw = side * static_cast<double>(W) / 2.0;
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const double py = y + 0.5, px = x + 0.5;
          if (std::abs(py - cy) <= hh && std::abs(px - cx) <= hw)
            for (std::size_t c = 0; c < C; ++c) out[(c * H + y) * W + x] = 0.0f;
        }
      break;
    }
  }
  return out;
}

}  // namespace slift
