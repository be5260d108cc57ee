#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "equisr/autodiff.hpp"

namespace equisr::ad {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates excluded by the relu kink guard
};

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t max_coordinates = 10000;
  std::uint64_t seed = 0;
  // Relative errors are taken against max(|analytic|, |numeric|, abs_floor * max(1, max|analytic|)).
  double abs_floor = 1e-6;
};

template <class T>
using TapeFunction = std::function<Var<T>(Tape<T>&, const std::vector<Var<T>>&)>;

namespace detail {

template <class T>
struct Probe {
  double value = 0.0;
  std::vector<std::vector<T>> relu_inputs;
};

template <class T>
Probe<T> probe(const TapeFunction<T>& fn, const std::vector<Tensor<T>>& inputs) {
  Tape<T> tape;
  std::vector<Var<T>> vars;
  for (const auto& x : inputs) {
    Tensor<T> t = x;
    t.requires_grad = true;
    vars.push_back(leaf(tape, std::move(t)));
  }
  const Var<T> out = fn(tape, vars);
  if (out.value().size() != 1) throw ContractError("gradient check needs a scalar-valued function");
  Probe<T> p;
  p.value = static_cast<double>(out.value()[0]);
  if (!std::isfinite(p.value)) throw EvaluationError("non-finite forward value during gradient check");
  for (const auto& e : tape.entries())
    if (e.op == Primitive::relu) p.relu_inputs.push_back(tape.value(e.inputs[0]).data);
  return p;
}

inline int sign_of(double v) { return (v > 0) - (v < 0); }

template <class T>
bool crosses_kink(const Probe<T>& base, const Probe<T>& plus, const Probe<T>& minus, double step) {
  const std::size_t n = std::min({base.relu_inputs.size(), plus.relu_inputs.size(), minus.relu_inputs.size()});
  for (std::size_t r = 0; r < n; ++r) {
    const auto& zb = base.relu_inputs[r];
    const auto& zp = plus.relu_inputs[r];
    const auto& zm = minus.relu_inputs[r];
    for (std::size_t i = 0; i < zb.size(); ++i) {
      const bool moved = zp[i] != zb[i] || zm[i] != zb[i];
      if (!moved) continue;
      if (std::abs(static_cast<double>(zb[i])) < 10.0 * step) return true;
      if (sign_of(zp[i]) != sign_of(zb[i]) || sign_of(zm[i]) != sign_of(zb[i])) return true;
    }
  }
  return false;
}

}  // namespace detail

// Compares reverse-mode gradients of a scalar tape function with central
// differences over every input coordinate, or over a seeded sample of
// max_coordinates when there are more.
template <class T>
GradCheckReport check_gradients(const TapeFunction<T>& fn, const std::vector<Tensor<T>>& inputs,
                                const GradCheckOptions& opt = {}) {
  if (!(opt.step >= 1e-7 && opt.step <= 1e-3)) throw DomainError("gradient check step must lie in [1e-7, 1e-3]");

  Tape<T> tape;
  std::vector<Var<T>> vars;
  for (const auto& x : inputs) {
    Tensor<T> t = x;
    t.requires_grad = true;
    vars.push_back(leaf(tape, std::move(t)));
  }
  const Var<T> out = fn(tape, vars);
  if (out.value().size() != 1) throw ContractError("gradient check needs a scalar-valued function");
  if (!std::isfinite(static_cast<double>(out.value()[0])))
    throw EvaluationError("non-finite forward value during gradient check");
  const auto grads = tape.backward(out.id());

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  double max_grad = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto& g = grads.at(vars[k].id());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      coords.emplace_back(k, i);
      max_grad = std::max(max_grad, std::abs(static_cast<double>(g[i])));
    }
  }
  if (coords.size() > opt.max_coordinates) {
    std::mt19937_64 rng(opt.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(opt.max_coordinates);
    std::sort(coords.begin(), coords.end());
  }

  const auto base = detail::probe(fn, inputs);
  const double floor = opt.abs_floor * std::max(1.0, max_grad);
  GradCheckReport report;
  std::vector<Tensor<T>> work = inputs;
  for (const auto& [k, i] : coords) {
    const T x0 = work[k][i];
    const T xp = x0 + static_cast<T>(opt.step);
    const T xm = x0 - static_cast<T>(opt.step);
    work[k][i] = xp;
    const auto plus = detail::probe(fn, work);
    work[k][i] = xm;
    const auto minus = detail::probe(fn, work);
    work[k][i] = x0;
    if (detail::crosses_kink(base, plus, minus, opt.step)) {
      ++report.skipped;
      continue;
    }
    const double numeric = (plus.value - minus.value) / static_cast<double>(xp - xm);
    const double analytic = static_cast<double>(grads.at(vars[k].id())[i]);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    report.max_rel_error = std::max(report.max_rel_error, std::abs(analytic - numeric) / denom);
    ++report.checked;
  }
  return report;
}

}  // namespace equisr::ad
