#pragma once

// Rotation-equivariant implicit neural representation on top of an encoder.
//
// Latent codes are stored slot-major: a row of t*d numbers holds F^{A_0},
// F^{A_1}, ... back to back. Every layer works on a batch of query rows, so
// one matrix product evaluates the layer for all queries at once. The
// cyclically shared weights of the input and intermediate layers are expanded
// into a dense block matrix by a gather; gradients flow back into the t
// underlying blocks.

#include <cmath>
#include <cstdint>
#include <future>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "equisr/encoder.hpp"

namespace equisr {

enum class InrVariant { liif, ope, lte };
enum class EvalMode { nearest, ensemble };

inline std::string to_string(InrVariant v) {
  switch (v) {
    case InrVariant::liif: return "liif";
    case InrVariant::ope: return "ope";
    case InrVariant::lte: return "lte";
  }
  return "?";
}

inline InrVariant inr_variant_from_string(const std::string& s) {
  if (s == "liif") return InrVariant::liif;
  if (s == "ope") return InrVariant::ope;
  if (s == "lte") return InrVariant::lte;
  throw ConfigError("unknown INR variant '" + s + "' (expected liif, ope or lte)");
}

struct InrConfig {
  InrVariant variant = InrVariant::liif;
  std::size_t L = 0;                        // intermediate layers
  std::vector<std::size_t> widths = {16};   // per-slot widths: input layer, then each intermediate layer
  std::size_t out_width = 32;               // rows of W_out1
  std::vector<std::size_t> psi_hidden = {32};
  std::size_t k_max = 3;                    // OPE frequencies per axis
  std::size_t K = 16;                       // LTE frequencies per slot
  double eps = 1e-7;                        // ensemble selection shift
  EvalMode mode = EvalMode::ensemble;

  // Width of layer l (0 = input layer); a single entry serves every layer.
  std::size_t width(std::size_t l) const { return widths.size() == 1 ? widths[0] : widths.at(l); }

  void validate() const {
    if (widths.empty() || (widths.size() != 1 && widths.size() != L + 1))
      throw ConfigError("inr.widths needs 1 or L+1 = " + std::to_string(L + 1) + " entries");
    for (auto w : widths)
      if (w == 0) throw ConfigError("inr widths must be positive");
    if (out_width == 0) throw ConfigError("inr.out_width must be positive");
    for (auto w : psi_hidden)
      if (w == 0) throw ConfigError("inr.psi_hidden widths must be positive");
    if (variant == InrVariant::ope && L != 0) throw ConfigError("the OPE variant has no intermediate layers (L = 0)");
    if (variant == InrVariant::lte && K == 0) throw ConfigError("inr.K must be positive");
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw ConfigError("inr.eps must be finite and >= 0");
  }
};

struct ModelConfig {
  EncoderConfig encoder;
  InrConfig inr;

  std::size_t t() const { return encoder.t; }
  std::size_t channels() const { return encoder.c_in; }
  bool equivariant() const { return encoder.equivariant; }
};

// Non-equivariant baseline with the same channel budget: t = 1 and every
// per-slot width multiplied by t.
inline ModelConfig plain_counterpart(ModelConfig cfg) {
  const std::size_t t = cfg.encoder.t;
  cfg.encoder.equivariant = false;
  cfg.encoder.t = 1;
  cfg.encoder.n *= t;
  for (auto& w : cfg.inr.widths) w *= t;
  cfg.inr.K *= t;
  return cfg;
}

// 1-D basis on [-1,1]: 1, sqrt2 cos(k pi x), sqrt2 sin(k pi x) for k = 1..k_max.
inline std::vector<double> ope_basis_1d(double x, std::size_t k_max) {
  std::vector<double> b{1.0};
  for (std::size_t k = 1; k <= k_max; ++k) {
    const double a = static_cast<double>(k) * std::numbers::pi * x;
    b.push_back(std::numbers::sqrt2 * std::cos(a));
    b.push_back(std::numbers::sqrt2 * std::sin(a));
  }
  return b;
}

// P(x) as the x1-major outer product of the 1-D bases; (2k_max+1)^2 entries.
inline std::vector<double> ope_basis(const Vec2& x, std::size_t k_max) {
  const auto bx = ope_basis_1d(x[0], k_max), by = ope_basis_1d(x[1], k_max);
  std::vector<double> p;
  p.reserve(bx.size() * by.size());
  for (double u : bx)
    for (double v : by) p.push_back(u * v);
  return p;
}

struct Query {
  std::size_t sample = 0;
  Vec2 x{0.0, 0.0};
};

// One pixel of a latent map: t slots of d numbers, slot-major.
struct LatentCode {
  std::size_t t = 0, d = 0;
  std::vector<double> data;
};

inline LatentCode latent_code(const GroupFeatureMap& f, std::size_t i, std::size_t j) {
  if (i >= f.h || j >= f.w) throw IndexError("latent pixel outside the map");
  LatentCode c{f.t, f.n, std::vector<double>(f.t * f.n)};
  for (std::size_t k = 0; k < f.t; ++k)
    for (std::size_t ch = 0; ch < f.n; ++ch) c.data[k * f.n + ch] = f.at(i, j, ch, k);
  return c;
}

// Cyclic shift of the group axis: slot j takes slot (j - k) mod t.
inline LatentCode shift_slots(const LatentCode& c, std::size_t k) {
  LatentCode out = c;
  for (std::size_t j = 0; j < c.t; ++j)
    for (std::size_t ch = 0; ch < c.d; ++ch) out.data[j * c.d + ch] = c.data[((j + c.t - k % c.t) % c.t) * c.d + ch];
  return out;
}

namespace detail {

// Dense [t*m_out, t*m_in] matrix from t blocks W [t, m_out, m_in]; block
// (row a, column b) is W[(b - a) mod t].
inline ad::IndexMap cyclic_block_index(std::size_t t, std::size_t m_out, std::size_t m_in) {
  std::vector<std::int64_t> idx(t * m_out * t * m_in);
  std::size_t pos = 0;
  for (std::size_t a = 0; a < t; ++a)
    for (std::size_t o = 0; o < m_out; ++o)
      for (std::size_t b = 0; b < t; ++b)
        for (std::size_t i = 0; i < m_in; ++i)
          idx[pos++] = static_cast<std::int64_t>((((b + t - a) % t) * m_out + o) * m_in + i);
  return ad::make_index(std::move(idx));
}

// x [R, w] plus a row bias b [w], broadcast with a rank-one product.
inline Var<double> add_row_bias(Var<double> x, Var<double> b) {
  const Shape s = x.shape();
  auto ones = ad::constant(x.tape(), Tensor<double>(Shape{s[0], 1}, 1.0));
  return x + ad::matmul(ones, ad::reshape(b, Shape{1, s[1]}));
}

// Repeats b [m] t times: [t*m].
inline Var<double> tile(Var<double> b, std::size_t t) {
  const std::size_t m = b.shape()[0];
  std::vector<std::int64_t> idx(t * m);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(i % m);
  return ad::gather(b, ad::make_index(std::move(idx)), Shape{t * m});
}

inline Var<double> linear(Var<double> x, Var<double> w, Var<double> b) {
  return add_row_bias(ad::matmul(x, w, false, true), b);
}

// Cell-axis helpers. Ties at a cell boundary go to the lower index.
inline std::size_t cell_index(double u, double delta, std::size_t n) {
  const double k = std::ceil(u / delta) - 1.0;
  if (k < 0.0) return 0;
  if (k > static_cast<double>(n - 1)) return n - 1;
  return static_cast<std::size_t>(k);
}

struct AxisPick {
  std::size_t idx[2];
  double offset[2];  // query minus cell center
  double weight[2];
};

}  // namespace detail

class INRModel {
 public:
  explicit INRModel(ModelConfig cfg)
      : cfg_((cfg.inr.validate(), cfg)), encoder_(cfg.encoder), group_(cfg.encoder.t), head_synth_(1, group_) {}

  const ModelConfig& config() const { return cfg_; }
  const RotationGroup& group() const { return group_; }
  const Encoder& encoder() const { return encoder_; }
  std::size_t t() const { return group_.order(); }
  std::size_t channels() const { return cfg_.channels(); }

  std::size_t ope_terms() const { return (2 * cfg_.inr.k_max + 1) * (2 * cfg_.inr.k_max + 1); }

  // Per-slot latent width d.
  std::size_t latent_width() const {
    switch (cfg_.inr.variant) {
      case InrVariant::liif: return cfg_.encoder.n;
      case InrVariant::ope: return channels() * ope_terms();
      case InrVariant::lte: return 4 * cfg_.inr.K;
    }
    return 0;
  }

  // Per-slot width of the function value after input layer (l = 0) or intermediate layer l.
  std::size_t layer_width(std::size_t l) const {
    if (l == 0 && cfg_.inr.variant == InrVariant::ope) return channels();
    if (l == 0 && cfg_.inr.variant == InrVariant::lte) return 2 * cfg_.inr.K;
    return cfg_.inr.width(l);
  }

  ParamSet<double> init(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    ParamSet<double> ps;
    encoder_.init(ps, rng);
    const std::size_t t = this->t(), n = cfg_.encoder.n;
    auto add = [&](const std::string& name, Shape w, std::size_t fan_in, std::size_t bias) {
      const double bound = fan_in_bound(fan_in);
      ps.add(name + ".w", uniform_tensor<double>(std::move(w), bound, rng));
      if (bias) ps.add(name + ".b", Tensor<double>(Shape{bias}));
    };
    const auto& inr = cfg_.inr;
    switch (inr.variant) {
      case InrVariant::liif: add("inr.in", Shape{t, layer_width(0), n + 2}, t * (n + 2), layer_width(0)); break;
      case InrVariant::ope: add("inr.head", Shape{latent_width(), t, n, 1, 1}, t * n, latent_width()); break;
      case InrVariant::lte:
        add("inr.amp", Shape{2 * inr.K, t, n, 1, 1}, t * n, 2 * inr.K);
        add("inr.freq", Shape{2 * inr.K, t, n, 1, 1}, t * n, 2 * inr.K);
        break;
    }
    if (inr.variant == InrVariant::ope) return ps;
    for (std::size_t l = 1; l <= inr.L; ++l)
      add("inr.mid" + std::to_string(l), Shape{t, layer_width(l), layer_width(l - 1)}, t * layer_width(l - 1),
          layer_width(l));
    add("inr.out1", Shape{inr.out_width, layer_width(inr.L)}, t * layer_width(inr.L), 0);
    std::size_t in = inr.out_width;
    for (std::size_t j = 0; j < inr.psi_hidden.size(); ++j) {
      add("inr.psi" + std::to_string(j), Shape{inr.psi_hidden[j], in}, in, inr.psi_hidden[j]);
      in = inr.psi_hidden[j];
    }
    add("inr.psi" + std::to_string(inr.psi_hidden.size()), Shape{channels(), in}, in, channels());
    return ps;
  }

  // Encoder plus latent heads: [.., t*d, H, W].
  // Pixel values are centred to [-1, 1] before the encoder.
  Var<double> latent(const BoundParams<double>& P, Var<double> img) const {
    Tensor<double> shift(img.shape());
    std::fill(shift.data.begin(), shift.data.end(), -1.0);
    auto f = encoder_.forward(P, ad::scale(img, 2.0) + ad::constant(img.tape(), std::move(shift)));
    switch (cfg_.inr.variant) {
      case InrVariant::liif: return f;
      case InrVariant::ope:
        return detail::add_channel_bias(group_conv(f, P["inr.head.w"], head_synth_, Padding::same), P["inr.head.b"]);
      case InrVariant::lte: {
        // Both heads in one 1x1 group conv: per slot 2K amplitudes then K x 2 frequencies.
        auto w = ad::concat(std::vector<Var<double>>{P["inr.amp.w"], P["inr.freq.w"]}, 0);
        auto b = ad::concat(std::vector<Var<double>>{P["inr.amp.b"], P["inr.freq.b"]}, 0);
        return detail::add_channel_bias(group_conv(f, w, head_synth_, Padding::same), b);
      }
    }
    return f;
  }

  GroupFeatureMap latent_map(const ParamSet<double>& params, const Image& img) const {
    ad::Tape<double> tape;
    BoundParams<double> P(tape, params, false);
    return to_feature_map(latent(P, ad::constant(tape, to_tensor<double>(img))).value(), t());
  }

  // Stacks A_a^-1 x for every query row: [Q, t*2], optionally repeated `rep` times per slot.
  Tensor<double> lifted(const Tensor<double>& xloc, std::size_t rep = 1) const {
    const std::size_t q = xloc.shape[0], t = this->t();
    Tensor<double> out(Shape{q, t * rep * 2});
    for (std::size_t r = 0; r < q; ++r) {
      const auto l = group_.lift({xloc[2 * r], xloc[2 * r + 1]});
      for (std::size_t a = 0; a < t; ++a)
        for (std::size_t k = 0; k < rep; ++k) {
          out[(r * t + a) * rep * 2 + 2 * k] = l[a][0];
          out[(r * t + a) * rep * 2 + 2 * k + 1] = l[a][1];
        }
    }
    return out;
  }

  // H(x, B) for every slot B: codes [Q, t*d], local coordinates [Q, 2] -> [Q, t*m].
  Var<double> input_layer(const BoundParams<double>& P, Var<double> codes, const Tensor<double>& xloc) const {
    const std::size_t t = this->t(), d = latent_width();
    const Shape cs = codes.shape();
    if (cs.size() != 2 || cs[1] != t * d || xloc.shape != Shape{cs[0], 2})
      throw ShapeError("input layer expects codes [Q," + std::to_string(t * d) + "] and coordinates [Q,2]");
    const std::size_t q = cs[0];
    auto& tape = codes.tape();
    switch (cfg_.inr.variant) {
      case InrVariant::liif: {
        // Columns: all slot features, then all lifted coordinates; W^{B^-1 A} on block (B, A).
        const std::size_t m = layer_width(0), n = d;
        std::vector<std::int64_t> idx(t * m * t * (n + 2));
        std::size_t pos = 0;
        for (std::size_t b = 0; b < t; ++b)
          for (std::size_t o = 0; o < m; ++o)
            for (std::size_t col = 0; col < t * (n + 2); ++col) {
              const bool feat = col < t * n;
              const std::size_t a = feat ? col / n : (col - t * n) / 2;
              const std::size_t c = feat ? col % n : n + (col - t * n) % 2;
              idx[pos++] = static_cast<std::int64_t>((((a + t - b) % t) * m + o) * (n + 2) + c);
            }
        auto wbig = ad::gather(P["inr.in.w"], ad::make_index(std::move(idx)), Shape{t * m, t * (n + 2)});
        auto z = ad::concat(std::vector<Var<double>>{codes, ad::constant(tape, lifted(xloc))}, 1);
        return detail::linear(z, wbig, detail::tile(P["inr.in.b"], t));
      }
      case InrVariant::ope: {
        const std::size_t c = channels(), k2 = ope_terms();
        Tensor<double> basis(Shape{q, t * c * k2});
        for (std::size_t r = 0; r < q; ++r) {
          const auto l = group_.lift({xloc[2 * r], xloc[2 * r + 1]});
          for (std::size_t a = 0; a < t; ++a) {
            const auto pb = ope_basis(l[a], cfg_.inr.k_max);
            for (std::size_t ch = 0; ch < c; ++ch)
              std::copy(pb.begin(), pb.end(), basis.data.begin() + static_cast<std::ptrdiff_t>((r * t + a) * c * k2 + ch * k2));
          }
        }
        auto prod = ad::reshape(codes * ad::constant(tape, std::move(basis)), Shape{q * t * c, k2});
        return ad::reshape(ad::sum(prod, {1}), Shape{q, t * c});
      }
      case InrVariant::lte: {
        const std::size_t K = cfg_.inr.K;
        std::vector<std::int64_t> amp_idx(q * t * 2 * K), freq_idx(q * t * 2 * K);
        for (std::size_t r = 0; r < q; ++r)
          for (std::size_t a = 0; a < t; ++a)
            for (std::size_t k = 0; k < 2 * K; ++k) {
              const std::size_t o = (r * t + a) * 2 * K + k;
              amp_idx[o] = static_cast<std::int64_t>((r * t + a) * d + k);
              freq_idx[o] = static_cast<std::int64_t>((r * t + a) * d + 2 * K + k);
            }
        auto amp = ad::gather(codes, ad::make_index(std::move(amp_idx)), Shape{q, t * 2 * K});
        auto freq = ad::gather(codes, ad::make_index(std::move(freq_idx)), Shape{q, t * 2 * K});
        auto proj = ad::sum(ad::reshape(freq * ad::constant(tape, lifted(xloc, K)), Shape{q * t * K, 2}), {1});
        auto arg = ad::reshape(ad::scale(proj, std::numbers::pi), Shape{q, t, K});
        auto wave = ad::reshape(ad::concat(std::vector<Var<double>>{ad::cos(arg), ad::sin(arg)}, 2), Shape{q, t * 2 * K});
        return amp * wave;
      }
    }
    throw ConfigError("unknown INR variant");
  }

  // Layer l >= 1: H'(x, A) = sum_B W^{A^-1 B} H(x, B) + b; no activation.
  Var<double> intermediate_layer(const BoundParams<double>& P, std::size_t l, Var<double> h) const {
    const std::size_t t = this->t(), m_in = layer_width(l - 1), m_out = layer_width(l);
    if (h.shape().size() != 2 || h.shape()[1] != t * m_in)
      throw ShapeError("intermediate layer " + std::to_string(l) + " expects width " + std::to_string(t * m_in));
    const std::string name = "inr.mid" + std::to_string(l);
    auto wbig = ad::gather(P[name + ".w"], detail::cyclic_block_index(t, m_out, m_in), Shape{t * m_out, t * m_in});
    return detail::linear(h, wbig, detail::tile(P[name + ".b"], t));
  }

  // psi(sum_A W_out1 H(x, A)); for OPE W_out1 = I/t and psi is the identity.
  Var<double> output_layer(const BoundParams<double>& P, Var<double> h) const {
    const std::size_t t = this->t(), m = layer_width(cfg_.inr.L);
    const Shape hs = h.shape();
    if (hs.size() != 2 || hs[1] != t * m) throw ShapeError("output layer expects width " + std::to_string(t * m));
    auto pooled = ad::sum(ad::reshape(h, Shape{hs[0], t, m}), {1});
    if (cfg_.inr.variant == InrVariant::ope) return ad::scale(pooled, 1.0 / static_cast<double>(t));
    auto z = ad::matmul(pooled, P["inr.out1.w"], false, true);
    const std::size_t hidden = cfg_.inr.psi_hidden.size();
    for (std::size_t j = 0; j <= hidden; ++j) {
      const std::string name = "inr.psi" + std::to_string(j);
      z = detail::linear(z, P[name + ".w"], P[name + ".b"]);
      if (j < hidden) z = ad::relu(z);
    }
    return z;
  }

  // Local function of one latent code per row: codes [Q, t*d], coordinates [Q, 2] -> [Q, c].
  Var<double> local(const BoundParams<double>& P, Var<double> codes, const Tensor<double>& xloc) const {
    auto h = input_layer(P, codes, xloc);
    if (cfg_.inr.variant == InrVariant::liif) h = ad::relu(h);
    for (std::size_t l = 1; l <= cfg_.inr.L; ++l) h = ad::relu(intermediate_layer(P, l, h));
    return output_layer(P, h);
  }

  // Global function at each query. latent: [t*d, H, W] or [N, t*d, H, W]; returns [Q, c].
  Var<double> global(const BoundParams<double>& P, Var<double> latent, const std::vector<Query>& queries,
                     EvalMode mode, double eps) const {
    const Shape ls = latent.shape();
    const std::size_t td = t() * latent_width();
    if ((ls.size() != 3 && ls.size() != 4) || ls[ls.size() - 3] != td)
      throw ShapeError("latent map must be [..," + std::to_string(td) + ",H,W], got " + ad::to_string(ls));
    const std::size_t samples = ls.size() == 4 ? ls[0] : 1, h = ls[ls.size() - 2], w = ls[ls.size() - 1];
    const std::size_t q = queries.size();
    const std::size_t sets = mode == EvalMode::nearest ? 1 : 4;
    const double dx = 2.0 / static_cast<double>(w), dy = 2.0 / static_cast<double>(h);

    std::vector<std::int64_t> idx(sets * q * td);
    Tensor<double> xloc(Shape{sets * q, 2});
    Tensor<double> weight(Shape{sets, q * channels()});
    for (std::size_t r = 0; r < q; ++r) {
      const auto& qu = queries[r];
      if (qu.sample >= samples) throw IndexError("query sample index out of range");
      const double x1 = qu.x[0], x2 = qu.x[1];
      if (!(std::abs(x1) <= 1.0 + 1e-12 && std::abs(x2) <= 1.0 + 1e-12))
        throw DomainError("query coordinate outside [-1,1]^2");
      // Per axis, s grows with the pixel index: s = x1 + 1 along columns, 1 - x2 along rows.
      auto pick = [&](double s_coord, double delta, std::size_t n) {
        detail::AxisPick a{};
        const std::size_t k = detail::cell_index(s_coord, delta, n);
        auto offset = [&](std::size_t i) { return s_coord - (static_cast<double>(i) + 0.5) * delta; };
        if (mode == EvalMode::nearest) {
          a.idx[0] = a.idx[1] = k;
          a.offset[0] = a.offset[1] = offset(k);
          a.weight[0] = 1.0;
          a.weight[1] = 0.0;
          return a;
        }
        // The containing cell and its neighbour on the query's side of the centre.
        if (offset(k) + eps > 0.0) {
          a.idx[0] = k;
          a.idx[1] = std::min(k + 1, n - 1);
        } else {
          a.idx[0] = k == 0 ? 0 : k - 1;
          a.idx[1] = k;
        }
        for (int i = 0; i < 2; ++i) a.offset[i] = offset(a.idx[i]);
        const double r0 = std::abs(a.offset[0]), r1 = std::abs(a.offset[1]);
        if (r0 + r1 > 0.0) {
          a.weight[0] = r1 / (r0 + r1);
          a.weight[1] = r0 / (r0 + r1);
        } else {
          a.weight[0] = a.weight[1] = 0.5;
        }
        return a;
      };
      const auto col = pick(x1 + 1.0, dx, w);
      const auto row = pick(1.0 - x2, dy, h);
      for (std::size_t s = 0; s < sets; ++s) {
        const std::size_t sr = s / 2, sc = s % 2;
        const std::size_t i = row.idx[sr], j = col.idx[sc];
        const std::size_t o = s * q + r;
        xloc[2 * o] = col.offset[sc] * 2.0 / dx;
        xloc[2 * o + 1] = -row.offset[sr] * 2.0 / dy;
        const double wgt = mode == EvalMode::nearest ? 1.0 : row.weight[sr] * col.weight[sc];
        for (std::size_t ch = 0; ch < channels(); ++ch) weight[s * q * channels() + r * channels() + ch] = wgt;
        for (std::size_t k = 0; k < td; ++k)
          idx[o * td + k] = static_cast<std::int64_t>(((qu.sample * td + k) * h + i) * w + j);
      }
    }
    auto codes = ad::gather(latent, ad::make_index(std::move(idx)), Shape{sets * q, td});
    auto pred = local(P, codes, xloc);
    if (sets == 1) return pred;
    auto weighted = ad::reshape(pred, Shape{sets, q * channels()}) * ad::constant(latent.tape(), std::move(weight));
    return ad::reshape(ad::sum(weighted, {0}), Shape{q, channels()});
  }

 private:
  ModelConfig cfg_;
  Encoder encoder_;
  RotationGroup group_;
  KernelSynthesizer<double> head_synth_;
};

// Value-level evaluation of one local function.
inline std::vector<double> eval_local(const INRModel& model, const ParamSet<double>& params, const LatentCode& code,
                                      const Vec2& x_local) {
  if (code.t != model.t() || code.d != model.latent_width())
    throw GroupError("latent code does not match the model's group order or width");
  ad::Tape<double> tape;
  BoundParams<double> P(tape, params, false);
  auto codes = ad::constant(tape, Tensor<double>(Shape{1, code.data.size()}, code.data));
  return model.local(P, codes, Tensor<double>(Shape{1, 2}, {x_local[0], x_local[1]})).value().data;
}

inline std::vector<double> eval_global(const INRModel& model, const ParamSet<double>& params,
                                       const GroupFeatureMap& latent, const Vec2& x, EvalMode mode, double eps) {
  if (latent.t != model.t() || latent.n != model.latent_width())
    throw GroupError("latent map does not match the model's group order or width");
  ad::Tape<double> tape;
  BoundParams<double> P(tape, params, false);
  auto lat = ad::constant(tape, to_tensor<double>(latent));
  return model.global(P, lat, {Query{0, x}}, mode, eps).value().data;
}

struct SrOptions {
  EvalMode mode = EvalMode::ensemble;
  double eps = 1e-7;
  std::size_t chunk = 4096;  // queries per tape
};

inline std::size_t scaled_extent(std::size_t n, double scale) {
  return static_cast<std::size_t>(std::llround(scale * static_cast<double>(n)));
}

// HR cell centers of an out_h x out_w raster over [-1,1]^2, row-major.
inline std::vector<Query> cell_centres(std::size_t out_h, std::size_t out_w, std::size_t sample = 0) {
  std::vector<Query> q;
  q.reserve(out_h * out_w);
  const Image probe(out_h, out_w, 0);
  for (std::size_t i = 0; i < out_h; ++i)
    for (std::size_t j = 0; j < out_w; ++j) q.push_back({sample, probe.coordinate(i, j)});
  return q;
}

// Encode once, then evaluate the global function at every HR cell center.
inline Image super_resolve(const INRModel& model, const ParamSet<double>& params, const Image& img, double scale,
                           const SrOptions& opt = {}) {
  if (!(scale >= 1.0) || !std::isfinite(scale)) throw DomainError("scale must be a finite real >= 1");
  if (img.c != model.channels())
    throw ShapeError("model expects " + std::to_string(model.channels()) + " channels, image has " +
                     std::to_string(img.c));
  const std::size_t oh = scaled_extent(img.h, scale), ow = scaled_extent(img.w, scale);
  const GroupFeatureMap lat = model.latent_map(params, img);
  const Tensor<double> lat_t = to_tensor<double>(lat);
  const auto queries = cell_centres(oh, ow);
  const std::size_t chunk = std::max<std::size_t>(1, opt.chunk);
  const std::size_t c = model.channels();
  Image out(oh, ow, c);

  auto run = [&](std::size_t begin, std::size_t end) {
    ad::Tape<double> tape;
    BoundParams<double> P(tape, params, false);
    std::vector<Query> part(queries.begin() + static_cast<std::ptrdiff_t>(begin),
                            queries.begin() + static_cast<std::ptrdiff_t>(end));
    const auto y = model.global(P, ad::constant(tape, lat_t), part, opt.mode, opt.eps).value();
    for (std::size_t r = 0; r < part.size(); ++r)
      for (std::size_t ch = 0; ch < c; ++ch) out.data[ch * oh * ow + begin + r] = y[r * c + ch];
  };
  // Chunks write disjoint pixels, so running them in waves of worker threads changes nothing numerically.
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::future<void>> wave;
  for (std::size_t b = 0; b < queries.size(); b += chunk) {
    const std::size_t e = std::min(queries.size(), b + chunk);
    if (workers == 1) {
      run(b, e);
      continue;
    }
    wave.push_back(std::async(std::launch::async, run, b, e));
    if (wave.size() == workers) {
      for (auto& j : wave) j.get();
      wave.clear();
    }
  }
  for (auto& j : wave) j.get();
  if (!out.finite()) throw EvaluationError("non-finite value in super-resolved output");
  return out;
}

}  // namespace equisr
