#pragma once

// Finite-difference checks of every tape primitive and every composite layer,
// grouped by module. Parameters get non-zero random biases first so no check
// sits on the special all-zero point.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "equisr/gradcheck.hpp"
#include "equisr/inr.hpp"

namespace equisr {

struct GradCase {
  std::string module;
  std::string name;
  std::uint64_t seed;
  ad::GradCheckReport report;
  bool passed(double tol) const { return report.checked > 0 && report.max_rel_error <= tol; }
};

inline const std::vector<std::string>& gradient_modules() {
  static const std::vector<std::string> m = {"autodiff", "filter", "encoder", "inr"};
  return m;
}

namespace detail {

inline Tensor<double> randn(Shape s, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  Tensor<double> t(std::move(s));
  for (auto& v : t.data) v = g(rng);
  return t;
}

// Scalar with generic gradients: <y, W> for a fixed random W.
inline Var<double> project(Var<double> y, std::uint64_t seed) {
  return ad::sum(y * ad::constant(y.tape(), randn(y.shape(), seed + 1000)));
}

inline ParamSet<double> with_random_biases(ParamSet<double> ps, std::uint64_t seed) {
  std::mt19937_64 rng(seed + 77);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& [name, t] : ps)
    if (name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0)
      for (auto& v : t.data) v = u(rng);
  return ps;
}

// Checks fn over every parameter plus any extra inputs; fn receives the bound parameters.
inline ad::GradCheckReport check_with_params(
    const ParamSet<double>& params, const std::vector<Tensor<double>>& extra,
    const std::function<Var<double>(ad::Tape<double>&, const BoundParams<double>&, const std::vector<Var<double>>&)>& fn,
    std::uint64_t seed) {
  std::vector<std::string> names;
  std::vector<Tensor<double>> inputs;
  for (const auto& [name, t] : params) {
    names.push_back(name);
    inputs.push_back(t);
  }
  const std::size_t np = inputs.size();
  inputs.insert(inputs.end(), extra.begin(), extra.end());
  ad::TapeFunction<double> f = [&](ad::Tape<double>& tape, const std::vector<Var<double>>& vars) {
    BoundParams<double> P;
    for (std::size_t i = 0; i < np; ++i) P.bind(names[i], vars[i]);
    return fn(tape, P, std::vector<Var<double>>(vars.begin() + static_cast<std::ptrdiff_t>(np), vars.end()));
  };
  ad::GradCheckOptions opt;
  opt.seed = seed;
  opt.max_coordinates = 400;
  return ad::check_gradients(f, inputs, opt);
}

inline ModelConfig tiny_model(InrVariant v, std::size_t t, std::size_t L) {
  ModelConfig cfg;
  cfg.encoder = EncoderConfig{.t = t, .blocks = 1, .n = 2, .p = 3, .c_in = 2};
  cfg.inr.variant = v;
  cfg.inr.L = v == InrVariant::ope ? 0 : L;
  cfg.inr.widths = {3};
  cfg.inr.out_width = 4;
  cfg.inr.psi_hidden = {4};
  cfg.inr.k_max = 1;
  cfg.inr.K = 2;
  return cfg;
}

}  // namespace detail

inline std::vector<GradCase> run_gradient_suite(const std::string& module, std::uint64_t seed) {
  using V = const std::vector<Var<double>>&;
  using detail::project;
  using detail::randn;
  std::vector<GradCase> out;
  auto add = [&](const std::string& name, const ad::TapeFunction<double>& fn, const std::vector<Tensor<double>>& in) {
    ad::GradCheckOptions opt;
    opt.seed = seed;
    out.push_back({module, name, seed, ad::check_gradients(fn, in, opt)});
  };
  const std::uint64_t s = seed;

  if (module == "autodiff") {
    const auto a = randn(Shape{3, 4}, s), b = randn(Shape{3, 4}, s + 7);
    add("add", [s](ad::Tape<double>&, V v) { return project(v[0] + v[1], s); }, {a, b});
    add("sub", [s](ad::Tape<double>&, V v) { return project(v[0] - v[1], s); }, {a, b});
    add("mul", [s](ad::Tape<double>&, V v) { return project(v[0] * v[1], s); }, {a, b});
    for (bool ta : {false, true})
      for (bool tb : {false, true}) {
        const auto x = randn(ta ? Shape{5, 3} : Shape{3, 5}, s + 1);
        const auto y = randn(tb ? Shape{2, 5} : Shape{5, 2}, s + 2);
        add(std::string("matmul") + (ta ? "^T" : "") + (tb ? "*B^T" : ""),
            [=](ad::Tape<double>&, V v) { return project(ad::matmul(v[0], v[1], ta, tb), s); }, {x, y});
      }
    for (auto pad : {Padding::valid, Padding::same})
      add(pad == Padding::valid ? "conv2d.valid" : "conv2d.same",
          [=](ad::Tape<double>&, V v) { return project(ad::conv2d(v[0], v[1], pad), s); },
          {randn(Shape{2, 3, 6, 5}, s + 3), randn(Shape{4, 3, 3, 3}, s + 4)});
    add("relu", [s](ad::Tape<double>&, V v) { return project(ad::relu(v[0]), s); }, {a});
    add("sin", [s](ad::Tape<double>&, V v) { return project(ad::sin(v[0]), s); }, {a});
    add("cos", [s](ad::Tape<double>&, V v) { return project(ad::cos(v[0]), s); }, {a});
    add("concat",
        [s](ad::Tape<double>&, V v) { return project(ad::concat(std::vector<Var<double>>{v[0], v[1], v[0]}, 1), s); },
        {a, b});
    add("sum", [s](ad::Tape<double>&, V v) { return project(ad::sum(v[0], {0}), s); }, {a});
    add("scale", [s](ad::Tape<double>&, V v) { return project(ad::scale(v[0], -2.5), s); }, {a});
    const auto idx = ad::make_index({3, 3, -1, 0, 11, 5});
    add("gather", [=](ad::Tape<double>&, V v) { return project(ad::gather(v[0], idx, Shape{2, 3}), s); }, {a});
    add("reshape", [s](ad::Tape<double>&, V v) { return project(ad::reshape(v[0], Shape{2, 6}), s); }, {a});
    add("mean_abs", [](ad::Tape<double>&, V v) { return ad::mean_abs(v[0]); }, {a});
    return out;
  }

  if (module == "filter") {
    for (std::size_t t : {1u, 4u, 8u}) {
      const KernelSynthesizer<double> synth(3, RotationGroup(t));
      add("lifting_conv.t" + std::to_string(t),
          [&, s](ad::Tape<double>&, V v) { return project(lifting_conv(v[0], v[1], synth, Padding::same), s); },
          {randn(Shape{2, 5, 5}, s), randn(Shape{2, 1, 2, 3, 3}, s + 1)});
      add("group_conv.t" + std::to_string(t),
          [&, s](ad::Tape<double>&, V v) { return project(group_conv(v[0], v[1], synth, Padding::same), s); },
          {randn(Shape{t * 2, 5, 5}, s + 2), randn(Shape{2, t, 2, 3, 3}, s + 3)});
    }
    return out;
  }

  if (module == "encoder") {
    for (bool eq : {true, false}) {
      const Encoder enc(EncoderConfig{.equivariant = eq, .t = eq ? 4u : 1u, .blocks = 2, .n = 2, .p = 3, .c_in = 2});
      const auto params = detail::with_random_biases(enc.init(s), s);
      out.push_back({module, eq ? "encoder.eq" : "encoder.plain", s,
                     detail::check_with_params(
                         params, {randn(Shape{2, 5, 5}, s)},
                         [&](ad::Tape<double>&, const BoundParams<double>& P, V v) {
                           return project(enc.forward(P, v[0]), s);
                         },
                         s)});
    }
    return out;
  }

  if (module == "inr") {
    for (auto variant : {InrVariant::liif, InrVariant::ope, InrVariant::lte}) {
      const INRModel model(detail::tiny_model(variant, 4, 1));
      const auto params = detail::with_random_biases(model.init(s), s);
      const std::string v = to_string(variant);
      const std::size_t q = 3, td = model.t() * model.latent_width();
      const auto xloc = randn(Shape{q, 2}, s + 5, 0.6);
      auto run = [&](const std::string& name, const std::vector<Tensor<double>>& extra,
                     const std::function<Var<double>(ad::Tape<double>&, const BoundParams<double>&, V)>& fn) {
        out.push_back({module, v + "." + name, s, detail::check_with_params(params, extra, fn, s)});
      };
      run("input_layer", {randn(Shape{q, td}, s + 6)},
          [&](ad::Tape<double>&, const BoundParams<double>& P, V x) { return project(model.input_layer(P, x[0], xloc), s); });
      if (model.config().inr.L >= 1)
        run("intermediate_layer", {randn(Shape{q, model.t() * model.layer_width(0)}, s + 7)},
            [&](ad::Tape<double>&, const BoundParams<double>& P, V x) {
              return project(model.intermediate_layer(P, 1, x[0]), s);
            });
      run("output_layer", {randn(Shape{q, model.t() * model.layer_width(model.config().inr.L)}, s + 8)},
          [&](ad::Tape<double>&, const BoundParams<double>& P, V x) { return project(model.output_layer(P, x[0]), s); });
      const std::vector<Query> qs = {{0, {0.1, 0.3}}, {0, {-0.6, 0.45}}, {0, {0.9, -0.8}}};
      run("model", {randn(Shape{2, 4, 4}, s + 9, 0.3)}, [&](ad::Tape<double>& tape, const BoundParams<double>& P, V x) {
        auto y = model.global(P, model.latent(P, x[0]), qs, EvalMode::ensemble, 1e-7);
        return ad::mean_abs(y - ad::constant(tape, Tensor<double>(y.shape(), 0.3)));
      });
    }
    return out;
  }
  throw ConfigError("unknown gradient-check module '" + module + "' (expected autodiff, filter, encoder or inr)");
}

}  // namespace equisr
