#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "arch.hpp"
#include "autograd.hpp"
#include "ops.hpp"
#include "rng.hpp"

namespace slift {

template <class T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

// U-shaped encoder/decoder built from a layer plan. Parameters are tape
// leaves; forward() records a tape only when `record` is set.
template <class T>
class Network {
 public:
  Network() = default;

  static Network build(const ArchSpec& spec, std::uint64_t seed) {
    Network net;
    net.spec_ = spec;
    net.plan_ = layer_plan(spec);
    std::uint64_t stream = 0;
    for (const auto& layer : net.plan_) {
      net.index_[layer.name] = net.params_.size();
      if (layer.kind == LayerKind::norm) {
        net.add_param(layer.name + ".gain", Tensor<T>(Dims{layer.cout}, T{1}));
        net.add_param(layer.name + ".shift", Tensor<T>(Dims{layer.cout}, T{0}));
        continue;
      }
      const auto& k = layer.params.kernel;
      const std::size_t fan_in = layer.cin * k[0] * k[1] * k[2];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      Dims wd = layer.kind == LayerKind::conv ? Dims{layer.cout, layer.cin, k[0], k[1], k[2]}
                                              : Dims{layer.cin, layer.cout, k[0], k[1], k[2]};
      Rng rng(derive_seed(seed, 0x1a7e5, stream++));
      net.add_param(layer.name + ".weight", random_tensor<T>(wd, rng, -bound, bound));
      if (layer.bias) net.add_param(layer.name + ".bias", random_tensor<T>(Dims{layer.cout}, rng, -bound, bound));
    }
    return net;
  }

  const ArchSpec& spec() const { return spec_; }
  const std::vector<LayerDesc>& plan() const { return plan_; }
  std::vector<NamedParam<T>>& params() { return params_; }
  const std::vector<NamedParam<T>>& params() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var.value().numel();
    return n;
  }

  Var<T>& param(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return p.var;
    throw ConfigError("network has no parameter named " + name);
  }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

  // [N, C_in, m, Y, X] -> raw logits [N, C_out, m, Y, X].
  Var<T> forward(const Var<T>& x, bool record = true) const {
    const auto& d = x.dims();
    if (d.size() != 5 || d[1] != spec_.in_channels || d[2] != spec_.lift_depth)
      throw ShapeError("forward: expected input [N," + std::to_string(spec_.in_channels) + "," +
                       std::to_string(spec_.lift_depth) + ",Y,X], got " + dims_str(d));
    try {
      spec_.validate_geometry(d[3], d[4]);
    } catch (const ConfigError& e) {
      throw ShapeError(std::string("forward: ") + e.what());
    }
    Pass pass{*this, record};
    const std::size_t L = spec_.levels;
    std::vector<Var<T>> skips(L);
    skips[0] = pass.block("enc0", x, spec_.in_channels, spec_.channels[0]);
    for (std::size_t l = 1; l < L; ++l) {
      const std::string p = "down" + std::to_string(l);
      auto h = pass.act(pass.norm(p + ".norm", pass.conv(p + ".conv", skips[l - 1])));
      skips[l] = pass.block("enc" + std::to_string(l), h, spec_.channels[l], spec_.channels[l]);
    }
    Var<T> h = skips[L - 1];
    for (std::size_t l = L - 1; l-- > 0;) {
      const std::string p = "up" + std::to_string(l);
      auto u = pass.act(pass.norm(p + ".norm", pass.tconv(p + ".tconv", h)));
      h = pass.block("dec" + std::to_string(l), concat_channels(u, skips[l]), 2 * spec_.channels[l], spec_.channels[l]);
    }
    return pass.conv("head", h);
  }

  Tensor<T> infer(const Tensor<T>& x) const { return forward(Var<T>::constant(x), false).value(); }

  // Same architecture and weights in another precision.
  template <class U>
  Network<U> cast() const {
    Network<U> out;
    out.spec_ = spec_;
    out.plan_ = plan_;
    out.index_ = index_;
    for (const auto& p : params_)
      out.params_.push_back({p.name, Var<U>::leaf(p.var.value().template cast<U>(), true, p.name)});
    return out;
  }

  void add_param(std::string name, Tensor<T> value) {
    params_.push_back({name, Var<T>::leaf(std::move(value), true, name)});
  }

 private:
  template <class>
  friend class Network;

  struct Pass {
    const Network& net;
    bool record;

    Var<T> p(std::size_t i) const {
      const auto& v = net.params_.at(i).var;
      return record ? v : Var<T>::constant(v.value());
    }
    const LayerDesc& layer(const std::string& name, std::size_t& first) const {
      auto it = net.index_.find(name);
      if (it == net.index_.end()) throw ConfigError("network has no layer " + name);
      first = it->second;
      for (const auto& l : net.plan_)
        if (l.name == name) return l;
      throw ConfigError("network has no layer " + name);
    }
    Var<T> conv(const std::string& name, const Var<T>& x) const {
      std::size_t i = 0;
      const auto& l = layer(name, i);
      return conv3d(x, p(i), l.bias ? p(i + 1) : Var<T>{}, l.params);
    }
    Var<T> tconv(const std::string& name, const Var<T>& x) const {
      std::size_t i = 0;
      const auto& l = layer(name, i);
      return transposed_conv3d(x, p(i), l.bias ? p(i + 1) : Var<T>{}, l.params);
    }
    Var<T> norm(const std::string& name, const Var<T>& x) const {
      std::size_t i = 0;
      layer(name, i);
      return instance_norm(x, p(i), p(i + 1), T(1e-5));
    }
    Var<T> act(const Var<T>& x) const {
      return net.spec_.activation == Activation::relu ? relu(x) : leaky_relu(x, T(0.01));
    }
    // R residual units: out = act(norm(conv(x))) + shortcut(x), shortcut a
    // 1x1x1 projection when the width changes. R = 0 is a plain conv/norm/act.
    Var<T> block(const std::string& prefix, Var<T> x, std::size_t cin, std::size_t cout) const {
      if (net.spec_.res_units == 0) return act(norm(prefix + ".norm", conv(prefix + ".conv", x)));
      for (std::size_t u = 0; u < net.spec_.res_units; ++u) {
        const std::string up = prefix + ".u" + std::to_string(u);
        const std::size_t ci = u == 0 ? cin : cout;
        auto y = act(norm(up + ".norm", conv(up + ".conv", x)));
        auto sc = ci != cout ? conv(up + ".proj", x) : x;
        x = add(y, sc);
      }
      return x;
    }
  };

  ArchSpec spec_;
  std::vector<LayerDesc> plan_;
  std::map<std::string, std::size_t> index_;  // layer name -> first parameter index
  std::vector<NamedParam<T>> params_;
};

}  // namespace slift
