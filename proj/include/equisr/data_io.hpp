#pragma once

// Image files, bicubic resampling, synthetic corpora and training patches.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "equisr/filter.hpp"
#include "equisr/inr.hpp"

namespace equisr {

// ---- bicubic resampling -------------------------------------------------

namespace detail {

struct Taps {
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

// Weights for one output sample along an axis. Downscaling widens the kernel
// by the scale factor; weights are renormalized and indices edge-clamped.
inline Taps resample_taps(std::size_t in, std::size_t out, std::size_t o) {
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double stretch = std::max(1.0, scale);
  const double centre = (static_cast<double>(o) + 0.5) * scale - 0.5;
  const auto lo = static_cast<long long>(std::floor(centre - 2.0 * stretch));
  const auto hi = static_cast<long long>(std::ceil(centre + 2.0 * stretch));
  Taps taps;
  double total = 0.0;
  for (long long k = lo; k <= hi; ++k) {
    const double w = phi_bic((static_cast<double>(k) - centre) / stretch);
    if (w == 0.0) continue;
    const long long kc = std::clamp<long long>(k, 0, static_cast<long long>(in) - 1);
    taps.index.push_back(static_cast<std::size_t>(kc));
    taps.weight.push_back(w);
    total += w;
  }
  for (auto& w : taps.weight) w /= total;
  return taps;
}

}  // namespace detail

inline Image bicubic_resize(const Image& img, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw DomainError("resize target must be at least 1x1");
  if (out_h == img.h && out_w == img.w) return img;
  // Rows first, then columns.
  Image mid(out_h, img.w, img.c);
  for (std::size_t o = 0; o < out_h; ++o) {
    const auto taps = detail::resample_taps(img.h, out_h, o);
    for (std::size_t ch = 0; ch < img.c; ++ch)
      for (std::size_t j = 0; j < img.w; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < taps.index.size(); ++k) acc += taps.weight[k] * img.at(taps.index[k], j, ch);
        mid.at(o, j, ch) = acc;
      }
  }
  Image out(out_h, out_w, img.c);
  for (std::size_t o = 0; o < out_w; ++o) {
    const auto taps = detail::resample_taps(img.w, out_w, o);
    for (std::size_t ch = 0; ch < img.c; ++ch)
      for (std::size_t i = 0; i < out_h; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < taps.index.size(); ++k) acc += taps.weight[k] * mid.at(i, taps.index[k], ch);
        out.at(i, o, ch) = acc;
      }
  }
  return out;
}

// ---- PPM / PGM ----------------------------------------------------------

inline Image decode_netpbm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      const char ch = bytes[pos];
      if (ch == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > (1u << 24)) throw ParseError(std::string(what) + " too large", start);
      ++pos;
    }
    if (pos == start) throw ParseError(std::string("expected ") + what, start);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw ParseError("not a binary PGM/PPM (expected P5 or P6)", 0);
  const std::size_t c = bytes[1] == '6' ? 3 : 1;
  pos = 2;
  const std::size_t w = number("width");
  const std::size_t h = number("height");
  const std::size_t maxval_at = (skip_space(), pos);
  const std::size_t maxval = number("max-value");
  if (maxval != 255) throw ParseError("unsupported max-value " + std::to_string(maxval), maxval_at);
  if (w == 0 || h == 0) throw ParseError("zero image extent", maxval_at);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw ParseError("expected whitespace after header", pos);
  ++pos;
  const std::size_t need = w * h * c;
  if (bytes.size() - pos < need) throw ParseError("truncated payload", bytes.size());
  Image img(h, w, c);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t ch = 0; ch < c; ++ch)
        img.at(i, j, ch) = static_cast<unsigned char>(bytes[pos + (i * w + j) * c + ch]) / 255.0;
  return img;
}

inline std::uint8_t to_byte(double v) {
  const double b = std::floor(v * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(std::isfinite(b) ? b : 0.0, 0.0, 255.0));
}

inline std::string encode_netpbm(const Image& img) {
  if (img.c != 1 && img.c != 3) throw ShapeError("PGM/PPM need 1 or 3 channels, got " + std::to_string(img.c));
  std::string out = (img.c == 3 ? "P6\n" : "P5\n") + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
  const std::size_t head = out.size();
  out.resize(head + img.h * img.w * img.c);
  for (std::size_t i = 0; i < img.h; ++i)
    for (std::size_t j = 0; j < img.w; ++j)
      for (std::size_t ch = 0; ch < img.c; ++ch)
        out[head + (i * img.w + j) * img.c + ch] = static_cast<char>(to_byte(img.at(i, j, ch)));
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes to a sibling temp file, then renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

inline Image read_image(const std::filesystem::path& path) { return decode_netpbm(read_file(path)); }

inline void write_image(const std::filesystem::path& path, const Image& img) {
  write_file_atomic(path, encode_netpbm(img));
}

// ---- synthetic corpora -----------------------------------------------------

enum class DataKind { shapes, stripes, smooth_field, file_dir };

inline std::string to_string(DataKind k) {
  switch (k) {
    case DataKind::shapes: return "shapes";
    case DataKind::stripes: return "stripes";
    case DataKind::smooth_field: return "smooth-field";
    case DataKind::file_dir: return "file-dir";
  }
  return "?";
}

inline DataKind data_kind_from_string(const std::string& s) {
  if (s == "shapes") return DataKind::shapes;
  if (s == "stripes") return DataKind::stripes;
  if (s == "smooth-field") return DataKind::smooth_field;
  if (s == "file-dir") return DataKind::file_dir;
  throw ConfigError("unknown data kind '" + s + "' (expected shapes, stripes, smooth-field or file-dir)");
}

struct DatasetSpec {
  DataKind kind = DataKind::stripes;
  std::size_t count = 16;
  std::size_t size = 96;
  std::uint64_t seed = 0;
  double scale_min = 2.0;
  double scale_max = 4.0;
  std::size_t channels = 3;
  double cutoff = 4.0;  // smooth-field: highest frequency, in cycles across the image
  std::string dir;      // file-dir source

  void validate() const {
    if (!(scale_min >= 1.0) || !(scale_max >= scale_min))
      throw ConfigError("data scale range must satisfy 1 <= scale_min <= scale_max");
    if (channels != 1 && channels != 3) throw ConfigError("data channels must be 1 or 3");
    if (kind != DataKind::file_dir) {
      if (count == 0 || size == 0) throw ConfigError("data count and size must be positive");
      if (size % static_cast<std::size_t>(std::ceil(scale_max)) != 0)
        throw ConfigError("data size must be divisible by ceil(scale_max)");
    } else if (dir.empty()) {
      throw ConfigError("file-dir data needs 'dir'");
    }
    if (!(cutoff > 0.0)) throw ConfigError("data cutoff must be positive");
  }
};

namespace detail {

inline std::mt19937_64 item_rng(const DatasetSpec& spec, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(spec.kind), 0x5eedu};
  return std::mt19937_64(seq);
}

struct Shape2D {
  int type;  // 0 circle, 1 rectangle, 2 star
  Vec2 centre;
  double size, angle;
  std::vector<double> colour;

  bool contains(const Vec2& x) const {
    const double c = std::cos(-angle), s = std::sin(-angle);
    const double u = c * (x[0] - centre[0]) - s * (x[1] - centre[1]);
    const double v = s * (x[0] - centre[0]) + c * (x[1] - centre[1]);
    if (type == 0) return u * u + v * v <= size * size;
    if (type == 1) return std::abs(u) <= size && std::abs(v) <= 0.6 * size;
    // Five-pointed star: radius alternates between size and size/2.
    const double r = std::hypot(u, v);
    if (r > size) return false;
    double a = std::atan2(v, u);
    const double sector = std::numbers::pi / 5.0;
    a = std::fmod(a + 2.0 * std::numbers::pi, 2.0 * sector);
    const double tt = a / sector;  // 0 at a tip, 1 at an inner vertex
    const double f = tt <= 1.0 ? tt : 2.0 - tt;
    // Boundary along the straight edge from tip (size) to inner vertex (size/2).
    const double ang = f * sector;
    const Vec2 p0{size, 0.0}, p1{0.5 * size * std::cos(sector), 0.5 * size * std::sin(sector)};
    const Vec2 d{p1[0] - p0[0], p1[1] - p0[1]};
    const double denom = std::cos(ang) * d[1] - std::sin(ang) * d[0];
    const double edge = denom == 0.0 ? size : (p0[0] * d[1] - p0[1] * d[0]) / denom;
    return r <= edge;
  }
};

}  // namespace detail

// Deterministic item `index` of a synthetic corpus; values lie in [0, 1].
inline Image gen_synthetic(const DatasetSpec& spec, std::size_t index) {
  if (spec.kind == DataKind::file_dir) throw ConfigError("gen_synthetic does not handle file-dir corpora");
  if (index >= spec.count) throw IndexError("dataset index " + std::to_string(index) + " >= count");
  auto rng = detail::item_rng(spec, index);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const std::size_t n = spec.size, c = spec.channels;
  Image img(n, n, c);

  switch (spec.kind) {
    case DataKind::shapes: {
      std::vector<double> bg(c);
      for (auto& v : bg) v = U(rng);
      std::vector<detail::Shape2D> shapes(3 + rng() % 4);
      for (auto& s : shapes) {
        s.type = static_cast<int>(rng() % 3);
        s.centre = {-0.8 + 1.6 * U(rng), -0.8 + 1.6 * U(rng)};
        s.size = 0.15 + 0.35 * U(rng);
        s.angle = 2.0 * std::numbers::pi * U(rng);
        s.colour.resize(c);
        for (auto& v : s.colour) v = U(rng);
      }
      // 4 x 4 supersampling for anti-aliased edges.
      const int ss = 4;
      const double d = 2.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          std::vector<double> acc(c, 0.0);
          for (int a = 0; a < ss; ++a)
            for (int b = 0; b < ss; ++b) {
              const Vec2 x{-1.0 + (static_cast<double>(j) + (b + 0.5) / ss) * d,
                           1.0 - (static_cast<double>(i) + (a + 0.5) / ss) * d};
              const std::vector<double>* col = &bg;
              for (const auto& s : shapes)
                if (s.contains(x)) col = &s.colour;
              for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += (*col)[ch];
            }
          for (std::size_t ch = 0; ch < c; ++ch) img.at(i, j, ch) = acc[ch] / (ss * ss);
        }
      break;
    }
    case DataKind::stripes: {
      // Oriented sinusoidal stripes, 2 to 6 periods across the image, random colours per phase.
      const double theta = std::numbers::pi * U(rng);
      const double periods = 2.0 + 4.0 * U(rng);
      const double phase = 2.0 * std::numbers::pi * U(rng);
      std::vector<double> lo(c), hi(c);
      for (std::size_t ch = 0; ch < c; ++ch) {
        lo[ch] = 0.5 * U(rng);
        hi[ch] = 0.5 + 0.5 * U(rng);
      }
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const Vec2 x = img.coordinate(i, j);
          const double s = 0.5 + 0.5 * std::cos(std::numbers::pi * periods * (x[0] * std::cos(theta) + x[1] * std::sin(theta)) + phase);
          for (std::size_t ch = 0; ch < c; ++ch) img.at(i, j, ch) = lo[ch] + (hi[ch] - lo[ch]) * s;
        }
      break;
    }
    case DataKind::smooth_field: {
      // Gaussian random amplitudes on integer frequencies (cycles across the
      // image) inside the cutoff disk; the field is exactly periodic on the
      // domain, so its sampled spectrum has nothing above the cutoff.
      const auto kmax = static_cast<int>(std::floor(spec.cutoff));
      std::normal_distribution<double> G(0.0, 1.0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        struct Wave {
          int u, v;
          double a, phi;
        };
        std::vector<Wave> waves;
        double total = 0.0;
        for (int u = 0; u <= kmax; ++u)
          for (int v = -kmax; v <= kmax; ++v) {
            if (u == 0 && v <= 0) continue;
            if (std::hypot(u, v) > spec.cutoff) continue;
            const double a = G(rng) * std::exp(-(u * u + v * v) / (spec.cutoff * spec.cutoff));
            waves.push_back({u, v, a, 2.0 * std::numbers::pi * U(rng)});
            total += std::abs(a);
          }
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const Vec2 x = img.coordinate(i, j);
            double f = 0.0;
            for (const auto& w : waves)
              f += w.a * std::cos(std::numbers::pi * (w.u * (x[0] + 1.0) + w.v * (x[1] + 1.0)) + w.phi);
            img.at(i, j, ch) = 0.5 + 0.5 * (total > 0.0 ? f / total : 0.0);
          }
      }
      break;
    }
    case DataKind::file_dir: break;
  }
  return img;
}

// Lexicographically ordered *.ppm / *.pgm files of a directory.
inline std::vector<std::filesystem::path> list_image_files(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// Every item of a corpus, synthetic or from disk.
inline std::vector<Image> load_corpus(const DatasetSpec& spec) {
  spec.validate();
  std::vector<Image> out;
  if (spec.kind == DataKind::file_dir) {
    for (const auto& f : list_image_files(spec.dir)) out.push_back(read_image(f));
    if (out.empty()) throw ConfigError("no PPM/PGM files in '" + spec.dir + "'");
    return out;
  }
  for (std::size_t i = 0; i < spec.count; ++i) out.push_back(gen_synthetic(spec, i));
  return out;
}

// ---- training patches -------------------------------------------------------

struct PatchBatch {
  Tensor<double> lr;              // [N, c, patch, patch]
  std::vector<Query> queries;     // patch^2 per sample, coordinates on the patch domain
  Tensor<double> targets;         // [Q, c]
  std::vector<double> scales;
  std::vector<Image> hr;          // the HR crops
};

struct PatchSpec {
  std::size_t patch = 24;
  double scale_min = 2.0;
  double scale_max = 4.0;
  std::size_t batch = 4;
};

inline PatchBatch sample_patch_pairs(const std::vector<Image>& corpus, const PatchSpec& ps, std::uint64_t seed) {
  if (corpus.empty()) throw ConfigError("empty corpus");
  if (ps.patch == 0 || ps.batch == 0) throw ConfigError("patch and batch must be positive");
  if (!(ps.scale_min >= 1.0) || !(ps.scale_max >= ps.scale_min)) throw ConfigError("invalid scale range");
  const std::size_t c = corpus.front().c, P = ps.patch;
  const auto largest = static_cast<std::size_t>(std::llround(static_cast<double>(P) * ps.scale_max));
  for (const auto& img : corpus) {
    if (img.c != c) throw ConfigError("corpus images disagree on channel count");
    if (largest > img.h || largest > img.w)
      throw ConfigError("patch " + std::to_string(P) + " x scale " + std::to_string(ps.scale_max) +
                        " exceeds image size " + std::to_string(img.h) + "x" + std::to_string(img.w));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(ps.scale_min, ps.scale_max);
  PatchBatch out;
  out.lr = Tensor<double>(Shape{ps.batch, c, P, P});
  out.targets = Tensor<double>(Shape{ps.batch * P * P, c});
  for (std::size_t s = 0; s < ps.batch; ++s) {
    const Image& src = corpus[rng() % corpus.size()];
    const double scale = ps.scale_min == ps.scale_max ? ps.scale_min : U(rng);
    const auto hs = static_cast<std::size_t>(std::llround(static_cast<double>(P) * scale));
    const std::size_t i0 = rng() % (src.h - hs + 1), j0 = rng() % (src.w - hs + 1);
    Image crop(hs, hs, c);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hs; ++i)
        for (std::size_t j = 0; j < hs; ++j) crop.at(i, j, ch) = src.at(i0 + i, j0 + j, ch);
    const Image lr = bicubic_resize(crop, P, P);
    std::copy(lr.data.begin(), lr.data.end(), out.lr.data.begin() + static_cast<std::ptrdiff_t>(s * c * P * P));
    std::vector<std::size_t> perm(hs * hs);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t k = 0; k < P * P; ++k) {
      const std::size_t i = perm[k] / hs, j = perm[k] % hs;
      const std::size_t row = out.queries.size();
      out.queries.push_back({s, crop.coordinate(i, j)});
      for (std::size_t ch = 0; ch < c; ++ch) out.targets[row * c + ch] = crop.at(i, j, ch);
    }
    out.scales.push_back(scale);
    out.hr.push_back(std::move(crop));
  }
  return out;
}

}  // namespace equisr
