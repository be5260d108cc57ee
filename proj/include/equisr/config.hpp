#pragma once

// JSON run configuration. A document is overlaid on the defaults; keys that
// are not part of the schema are rejected.

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"

#include "equisr/data_io.hpp"
#include "equisr/equivariance.hpp"
#include "equisr/inr.hpp"

namespace equisr {

using json = nlohmann::json;

struct TrainConfig {
  std::size_t steps = 200;
  double lr = 1e-4;
  std::size_t decay_steps = 500;  // the learning rate halves every decay_steps
  std::size_t batch = 4;
  std::size_t patch = 24;
  std::uint64_t seed = 0;
  std::size_t smooth = 20;  // loss smoothing window

  void validate() const {
    if (steps == 0) throw ConfigError("train.steps must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
    if (decay_steps == 0) throw ConfigError("train.decay_steps must be >= 1");
    if (batch == 0 || patch == 0 || smooth == 0) throw ConfigError("train.batch, train.patch and train.smooth must be >= 1");
  }
};

struct EvalConfig {
  std::vector<double> angles_deg = {90.0};
  std::vector<double> scales = {2.0};
  std::vector<std::size_t> resolutions = {32};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::vector<std::size_t> groups = {4};
  std::vector<std::string> variants = {"liif"};
  std::vector<std::string> models = {"eq", "plain"};
  std::size_t budget = 32;
  std::string mask = "auto";  // auto | on | off
  std::string images = "smooth-field";
  double cutoff = 4.0;
  std::uint64_t image_seed = 1000;
};

struct RunConfig {
  ModelConfig model;
  DatasetSpec data;
  TrainConfig train;
  EvalConfig eval;
};

inline MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "auto") return MaskMode::automatic;
  if (s == "on") return MaskMode::on;
  if (s == "off") return MaskMode::off;
  throw ConfigError("eval.mask must be auto, on or off, got '" + s + "'");
}

inline EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "ensemble") return EvalMode::ensemble;
  if (s == "nearest") return EvalMode::nearest;
  throw ConfigError("inr.mode must be ensemble or nearest, got '" + s + "'");
}

// ---- to JSON ----

inline json model_to_json(const ModelConfig& m) {
  const auto& e = m.encoder;
  const auto& i = m.inr;
  return {{"variant", to_string(i.variant)},
          {"equivariant", e.equivariant},
          {"t", e.t},
          {"channels", e.c_in},
          {"encoder", {{"blocks", e.blocks}, {"n", e.n}, {"p", e.p}, {"bias", e.bias}}},
          {"inr",
           {{"L", i.L},
            {"widths", i.widths},
            {"out_width", i.out_width},
            {"psi_hidden", i.psi_hidden},
            {"k_max", i.k_max},
            {"K", i.K},
            {"eps", i.eps},
            {"mode", i.mode == EvalMode::ensemble ? "ensemble" : "nearest"}}}};
}

inline json data_to_json(const DatasetSpec& d) {
  return {{"kind", to_string(d.kind)},     {"count", d.count},       {"size", d.size},
          {"seed", d.seed},                {"scale_min", d.scale_min}, {"scale_max", d.scale_max},
          {"channels", d.channels},        {"cutoff", d.cutoff},     {"dir", d.dir}};
}

inline json train_to_json(const TrainConfig& t) {
  return {{"steps", t.steps}, {"lr", t.lr},       {"decay_steps", t.decay_steps}, {"batch", t.batch},
          {"patch", t.patch}, {"seed", t.seed},   {"smooth", t.smooth}};
}

inline json eval_to_json(const EvalConfig& e) {
  return {{"angles_deg", e.angles_deg}, {"scales", e.scales}, {"resolutions", e.resolutions},
          {"seeds", e.seeds},           {"groups", e.groups}, {"variants", e.variants},
          {"models", e.models},         {"budget", e.budget}, {"mask", e.mask},
          {"images", e.images},         {"cutoff", e.cutoff}, {"image_seed", e.image_seed}};
}

inline json to_json(const RunConfig& c) {
  return {{"model", model_to_json(c.model)},
          {"data", data_to_json(c.data)},
          {"train", train_to_json(c.train)},
          {"eval", eval_to_json(c.eval)}};
}

// ---- from JSON ----

namespace detail {

// Copies j[key] into out when present, with a path-qualified error on a type mismatch.
template <class V>
void read_key(const json& j, const std::string& path, const char* key, V& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<V>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + path + key + "' has the wrong type");
  }
}

inline void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config section '" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError("unknown config key '" + path + k + "'");
  }
}

}  // namespace detail

inline ModelConfig model_from_json(const json& j, ModelConfig m = {}) {
  using detail::read_key;
  detail::reject_unknown(j, "model.", {"variant", "equivariant", "t", "channels", "encoder", "inr"});
  std::string variant = to_string(m.inr.variant);
  read_key(j, "model.", "variant", variant);
  m.inr.variant = inr_variant_from_string(variant);
  read_key(j, "model.", "equivariant", m.encoder.equivariant);
  read_key(j, "model.", "t", m.encoder.t);
  read_key(j, "model.", "channels", m.encoder.c_in);
  if (auto it = j.find("encoder"); it != j.end()) {
    detail::reject_unknown(*it, "model.encoder.", {"blocks", "n", "p", "bias"});
    read_key(*it, "model.encoder.", "blocks", m.encoder.blocks);
    read_key(*it, "model.encoder.", "n", m.encoder.n);
    read_key(*it, "model.encoder.", "p", m.encoder.p);
    read_key(*it, "model.encoder.", "bias", m.encoder.bias);
  }
  if (auto it = j.find("inr"); it != j.end()) {
    detail::reject_unknown(*it, "model.inr.", {"L", "widths", "out_width", "psi_hidden", "k_max", "K", "eps", "mode"});
    read_key(*it, "model.inr.", "L", m.inr.L);
    read_key(*it, "model.inr.", "widths", m.inr.widths);
    read_key(*it, "model.inr.", "out_width", m.inr.out_width);
    read_key(*it, "model.inr.", "psi_hidden", m.inr.psi_hidden);
    read_key(*it, "model.inr.", "k_max", m.inr.k_max);
    read_key(*it, "model.inr.", "K", m.inr.K);
    read_key(*it, "model.inr.", "eps", m.inr.eps);
    std::string mode = m.inr.mode == EvalMode::ensemble ? "ensemble" : "nearest";
    read_key(*it, "model.inr.", "mode", mode);
    m.inr.mode = eval_mode_from_string(mode);
  }
  m.encoder.validate();
  m.inr.validate();
  return m;
}

inline DatasetSpec data_from_json(const json& j, DatasetSpec d = {}) {
  using detail::read_key;
  detail::reject_unknown(j, "data.", {"kind", "count", "size", "seed", "scale_min", "scale_max", "channels", "cutoff", "dir"});
  std::string kind = to_string(d.kind);
  read_key(j, "data.", "kind", kind);
  d.kind = data_kind_from_string(kind);
  read_key(j, "data.", "count", d.count);
  read_key(j, "data.", "size", d.size);
  read_key(j, "data.", "seed", d.seed);
  read_key(j, "data.", "scale_min", d.scale_min);
  read_key(j, "data.", "scale_max", d.scale_max);
  read_key(j, "data.", "channels", d.channels);
  read_key(j, "data.", "cutoff", d.cutoff);
  read_key(j, "data.", "dir", d.dir);
  d.validate();
  return d;
}

inline TrainConfig train_from_json(const json& j, TrainConfig t = {}) {
  using detail::read_key;
  detail::reject_unknown(j, "train.", {"steps", "lr", "decay_steps", "batch", "patch", "seed", "smooth"});
  read_key(j, "train.", "steps", t.steps);
  read_key(j, "train.", "lr", t.lr);
  read_key(j, "train.", "decay_steps", t.decay_steps);
  read_key(j, "train.", "batch", t.batch);
  read_key(j, "train.", "patch", t.patch);
  read_key(j, "train.", "seed", t.seed);
  read_key(j, "train.", "smooth", t.smooth);
  t.validate();
  return t;
}

inline EvalConfig eval_from_json(const json& j, EvalConfig e = {}) {
  using detail::read_key;
  detail::reject_unknown(j, "eval.", {"angles_deg", "scales", "resolutions", "seeds", "groups", "variants", "models",
                                      "budget", "mask", "images", "cutoff", "image_seed"});
  read_key(j, "eval.", "angles_deg", e.angles_deg);
  read_key(j, "eval.", "scales", e.scales);
  read_key(j, "eval.", "resolutions", e.resolutions);
  read_key(j, "eval.", "seeds", e.seeds);
  read_key(j, "eval.", "groups", e.groups);
  read_key(j, "eval.", "variants", e.variants);
  read_key(j, "eval.", "models", e.models);
  read_key(j, "eval.", "budget", e.budget);
  read_key(j, "eval.", "mask", e.mask);
  read_key(j, "eval.", "images", e.images);
  read_key(j, "eval.", "cutoff", e.cutoff);
  read_key(j, "eval.", "image_seed", e.image_seed);
  mask_mode_from_string(e.mask);
  for (const auto& v : e.variants) inr_variant_from_string(v);
  for (const auto& m : e.models)
    if (m != "eq" && m != "plain") throw ConfigError("eval.models entries must be 'eq' or 'plain', got '" + m + "'");
  for (double s : e.scales)
    if (!(s >= 1.0)) throw ConfigError("eval.scales entries must be >= 1");
  return e;
}

inline RunConfig config_from_json(const json& j) {
  detail::reject_unknown(j, "", {"model", "data", "train", "eval"});
  RunConfig c;
  if (auto it = j.find("model"); it != j.end()) c.model = model_from_json(*it);
  if (auto it = j.find("data"); it != j.end()) c.data = data_from_json(*it);
  if (auto it = j.find("train"); it != j.end()) c.train = train_from_json(*it);
  if (auto it = j.find("eval"); it != j.end()) c.eval = eval_from_json(*it);
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), e.byte);
  }
  return config_from_json(j);
}

inline RunConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

// Sweep grid described by an eval section, with `model` as the width reference.
inline SweepSpec sweep_spec(const RunConfig& c) {
  const auto& e = c.eval;
  SweepSpec s;
  s.base = c.model;
  s.equivariant.clear();
  for (const auto& m : e.models) s.equivariant.push_back(m == "eq");
  s.variants.clear();
  for (const auto& v : e.variants) s.variants.push_back(inr_variant_from_string(v));
  s.groups = e.groups;
  s.angles.clear();
  for (double a : e.angles_deg) s.angles.push_back(a * std::numbers::pi / 180.0);
  s.scales = e.scales;
  s.resolutions = e.resolutions;
  s.seeds = e.seeds;
  s.budget = e.budget;
  s.mask = mask_mode_from_string(e.mask);
  s.images.kind = data_kind_from_string(e.images);
  if (s.images.kind == DataKind::file_dir) throw ConfigError("eval.images must be a synthetic kind");
  s.images.cutoff = e.cutoff;
  s.images.seed = e.image_seed;
  s.validate();
  return s;
}

}  // namespace equisr
