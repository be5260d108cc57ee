#pragma once

// Equivariance error of a super-resolution model and grids of it.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "equisr/data_io.hpp"
#include "equisr/inr.hpp"
#include "equisr/metrics.hpp"
#include "equisr/version.hpp"

namespace equisr {

enum class MaskMode { automatic, on, off };

struct EquivCase {
  double nmse = 0.0;
  double nmae = 0.0;
  Image error_map;  // channel-max |difference|, zero outside the mask
};

// Compares SR(rotate(img)) with rotate(SR(img)). The automatic mask keeps the
// inscribed disk for angles that are not quarter turns, where the rotated
// input has zero-filled corners.
inline EquivCase equivariance_error(const INRModel& model, const ParamSet<double>& params, const Image& img,
                                    double angle, double scale, double eps, MaskMode mask = MaskMode::automatic,
                                    EvalMode mode = EvalMode::ensemble) {
  const SrOptions opt{mode, eps};
  const Image y0 = super_resolve(model, params, img, scale, opt);
  const Image y1 = super_resolve(model, params, rotate_image(img, angle), scale, opt);
  const Image ref = rotate_image(y0, angle);
  const bool use_mask = mask == MaskMode::on || (mask == MaskMode::automatic && !quarter_turns(angle));
  const PixelMask m = use_mask ? inscribed_disk_mask(y1.h, y1.w) : PixelMask{};
  EquivCase out;
  out.nmse = nmse(y1, ref, m);
  out.nmae = nmae(y1, ref, m);
  out.error_map = Image(y1.h, y1.w, 1);
  for (std::size_t i = 0; i < y1.h; ++i)
    for (std::size_t j = 0; j < y1.w; ++j) {
      if (!m.empty() && !m[i * y1.w + j]) continue;
      double e = 0.0;
      for (std::size_t ch = 0; ch < y1.c; ++ch) e = std::max(e, std::abs(y1.at(i, j, ch) - ref.at(i, j, ch)));
      out.error_map.at(i, j, 0) = e;
    }
  return out;
}

inline double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for fewer than two values.
inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw UndefinedMetricError("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// A grid of equivariance measurements. Each seed draws both the model
// parameters and the test image; plain rows use the equal-budget t = 1
// counterpart of the equivariant model with the same t.
struct SweepSpec {
  ModelConfig base;                       // width budget reference; variant and t are overridden
  std::vector<bool> equivariant = {true};
  std::vector<InrVariant> variants = {InrVariant::liif};
  std::vector<std::size_t> groups = {4};  // t values
  std::vector<double> angles = {std::numbers::pi / 2};  // radians
  std::vector<double> scales = {2.0};
  std::vector<std::size_t> resolutions = {32};
  std::vector<std::uint64_t> seeds = {0};
  std::size_t budget = 32;                // n * t of the encoder
  DatasetSpec images{.kind = DataKind::smooth_field};
  MaskMode mask = MaskMode::automatic;
  bool fixed_images = false;              // true: every seed uses image 0 of `images`

  void validate() const {
    if (equivariant.empty() || variants.empty() || groups.empty() || angles.empty() || scales.empty() ||
        resolutions.empty() || seeds.empty())
      throw ConfigError("every sweep grid axis needs at least one value");
    for (auto t : groups)
      if (t == 0 || budget % t != 0)
        throw ConfigError("sweep budget " + std::to_string(budget) + " is not divisible by t = " + std::to_string(t));
  }
};

struct SweepRow {
  std::string model;  // "eq" or "plain"
  InrVariant variant;
  std::size_t t;
  double angle;
  double scale;
  std::size_t resolution;
  std::vector<double> nmse, nmae;  // one entry per seed
  std::vector<Image> error_maps;   // one per seed, only when requested
};

// Model configuration for one grid point.
inline ModelConfig sweep_model(const SweepSpec& spec, bool equivariant, InrVariant variant, std::size_t t) {
  ModelConfig cfg = spec.base;
  cfg.inr.variant = variant;
  if (variant == InrVariant::ope) cfg.inr.L = 0;
  cfg.encoder.equivariant = true;
  cfg.encoder.t = t;
  cfg.encoder.n = spec.budget / t;
  return equivariant ? cfg : plain_counterpart(cfg);
}

inline Image sweep_image(const SweepSpec& spec, std::size_t resolution, std::uint64_t seed, std::size_t channels) {
  DatasetSpec ds = spec.images;
  ds.size = resolution;
  ds.channels = channels;
  ds.count = 1;
  ds.scale_max = ds.scale_min = 1.0;
  if (!spec.fixed_images) ds.seed = spec.images.seed + seed;
  return gen_synthetic(ds, 0);
}

// Runs the full cross product; rows come out in a fixed order and grid points
// are evaluated in parallel.
inline std::vector<SweepRow> sweep(const SweepSpec& spec, double eps, bool keep_maps = false) {
  spec.validate();
  std::vector<SweepRow> rows;
  for (bool eq : spec.equivariant)
    for (auto v : spec.variants)
      for (auto t : spec.groups)
        for (double a : spec.angles)
          for (double s : spec.scales)
            for (auto r : spec.resolutions) rows.push_back({eq ? "eq" : "plain", v, t, a, s, r, {}, {}, {}});

  auto run = [&](SweepRow& row) {
    const INRModel model(sweep_model(spec, row.model == "eq", row.variant, row.t));
    for (auto seed : spec.seeds) {
      const auto params = model.init(seed);
      const Image img = sweep_image(spec, row.resolution, seed, model.channels());
      auto c = equivariance_error(model, params, img, row.angle, row.scale, eps, spec.mask, spec.base.inr.mode);
      row.nmse.push_back(c.nmse);
      row.nmae.push_back(c.nmae);
      if (keep_maps) row.error_maps.push_back(std::move(c.error_map));
    }
  };
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  if (workers == 1) {
    for (auto& row : rows) run(row);
  } else {
    std::vector<std::future<void>> wave;
    for (auto& row : rows) {
      wave.push_back(std::async(std::launch::async, run, std::ref(row)));
      if (wave.size() == workers) {
        for (auto& f : wave) f.get();
        wave.clear();
      }
    }
    for (auto& f : wave) f.get();
  }
  return rows;
}

// The grid of one given model: angles x scales x resolutions, with seeds
// drawing test images only. Model, variant and group columns are the model's own.
inline std::vector<SweepRow> sweep_fixed(const INRModel& model, const ParamSet<double>& params, const SweepSpec& spec,
                                         double eps, bool keep_maps = false) {
  spec.validate();
  const auto& cfg = model.config();
  std::vector<SweepRow> rows;
  for (double a : spec.angles)
    for (double s : spec.scales)
      for (auto r : spec.resolutions)
        rows.push_back({cfg.equivariant() ? "eq" : "plain", cfg.inr.variant, cfg.t(), a, s, r, {}, {}, {}});
  for (auto& row : rows)
    for (auto seed : spec.seeds) {
      const Image img = sweep_image(spec, row.resolution, seed, model.channels());
      auto c = equivariance_error(model, params, img, row.angle, row.scale, eps, spec.mask, cfg.inr.mode);
      row.nmse.push_back(c.nmse);
      row.nmae.push_back(c.nmae);
      if (keep_maps) row.error_maps.push_back(std::move(c.error_map));
    }
  return rows;
}

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = version_comment();
  out += "model,variant,t,angle_rad,scale,resolution,seed_count,nmse_mean,nmse_std,nmae_mean,nmae_std\n";
  for (const auto& r : rows) {
    out += r.model + "," + to_string(r.variant) + "," + std::to_string(r.t) + "," + format_number(r.angle) + "," +
           format_number(r.scale) + "," + std::to_string(r.resolution) + "," + std::to_string(r.nmse.size()) + "," +
           format_number(mean(r.nmse)) + "," + format_number(sample_std(r.nmse)) + "," + format_number(mean(r.nmae)) +
           "," + format_number(sample_std(r.nmae)) + "\n";
  }
  return out;
}

}  // namespace equisr
