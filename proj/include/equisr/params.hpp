#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "equisr/autodiff.hpp"
#include "equisr/group.hpp"

namespace equisr {

using ad::Shape;
using ad::Tensor;
using ad::Var;

// Named parameter arrays, iterated in name order.
template <class T>
class ParamSet {
 public:
  void add(const std::string& name, Tensor<T> value) {
    if (!values_.emplace(name, std::move(value)).second) throw ConfigError("duplicate parameter '" + name + "'");
  }

  bool contains(const std::string& name) const { return values_.count(name) != 0; }

  const Tensor<T>& at(const std::string& name) const {
    auto it = values_.find(name);
    if (it == values_.end()) throw ConfigError("missing parameter '" + name + "'");
    return it->second;
  }

  Tensor<T>& at(const std::string& name) {
    auto it = values_.find(name);
    if (it == values_.end()) throw ConfigError("missing parameter '" + name + "'");
    return it->second;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : values_) n += v.size();
    return n;
  }

  std::size_t size() const { return values_.size(); }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }
  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.values_.size() != b.values_.size()) return false;
    for (auto ia = a.values_.begin(), ib = b.values_.begin(); ia != a.values_.end(); ++ia, ++ib)
      if (ia->first != ib->first || ia->second.shape != ib->second.shape || ia->second.data != ib->second.data)
        return false;
    return true;
  }

 private:
  std::map<std::string, Tensor<T>> values_;
};

// Parameters placed on a tape as leaves.
template <class T>
class BoundParams {
 public:
  BoundParams() = default;

  BoundParams(ad::Tape<T>& tape, const ParamSet<T>& params, bool requires_grad) {
    for (const auto& [name, value] : params) {
      Tensor<T> v = value;
      v.requires_grad = requires_grad;
      vars_.emplace(name, ad::leaf(tape, std::move(v)));
    }
  }

  Var<T> operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw ConfigError("parameter '" + name + "' not bound");
    return it->second;
  }

  bool contains(const std::string& name) const { return vars_.count(name) != 0; }

  // Binds an existing tape variable, e.g. a gradient-check probe leaf.
  void bind(const std::string& name, Var<T> v) {
    if (!vars_.emplace(name, v).second) throw ConfigError("parameter '" + name + "' bound twice");
  }

  ParamSet<T> gradients(const ad::Gradients<T>& grads) const {
    ParamSet<T> out;
    for (const auto& [name, var] : vars_) {
      auto it = grads.find(var.id());
      out.add(name, it != grads.end() ? it->second : Tensor<T>(var.shape()));
    }
    return out;
  }

 private:
  std::map<std::string, Var<T>> vars_;
};

template <class T>
Tensor<T> uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data) v = static_cast<T>(dist(rng));
  return t;
}

// Fan-in scaled uniform initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

template <class T>
Tensor<T> to_tensor(const Image& img) {
  Tensor<T> t(Shape{img.c, img.h, img.w});
  for (std::size_t i = 0; i < img.data.size(); ++i) t[i] = static_cast<T>(img.data[i]);
  return t;
}

template <class T>
Image to_image(const Tensor<T>& t) {
  if (t.rank() != 3) throw ShapeError("image tensor must be [C,H,W], got " + ad::to_string(t.shape));
  Image img(t.shape[1], t.shape[2], t.shape[0]);
  for (std::size_t i = 0; i < t.size(); ++i) img.data[i] = static_cast<double>(t[i]);
  return img;
}

template <class T>
Tensor<T> to_tensor(const GroupFeatureMap& f) {
  Tensor<T> t(Shape{f.t * f.n, f.h, f.w});
  for (std::size_t i = 0; i < f.data.size(); ++i) t[i] = static_cast<T>(f.data[i]);
  return t;
}

template <class T>
GroupFeatureMap to_feature_map(const Tensor<T>& t, std::size_t group_order) {
  if (t.rank() != 3 || group_order == 0 || t.shape[0] % group_order != 0)
    throw ShapeError("feature tensor " + ad::to_string(t.shape) + " is not [t*n,H,W] for t=" +
                     std::to_string(group_order));
  GroupFeatureMap f(t.shape[1], t.shape[2], t.shape[0] / group_order, group_order);
  for (std::size_t i = 0; i < t.size(); ++i) f.data[i] = static_cast<double>(t[i]);
  return f;
}

}  // namespace equisr
