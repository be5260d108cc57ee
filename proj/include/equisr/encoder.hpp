#pragma once

// Mini-EDSR feature encoder: head conv, residual blocks (conv, relu, conv,
// skip), tail conv and a global skip around the body. The equivariant variant
// lifts with the head and uses group convolutions everywhere else; the plain
// variant is the same network over the trivial group.

#include <cstdint>
#include <random>
#include <string>

#include "equisr/filter.hpp"
#include "equisr/params.hpp"

namespace equisr {

struct EncoderConfig {
  bool equivariant = true;
  std::size_t t = 4;        // group order; must be 1 for the plain variant
  std::size_t blocks = 4;
  std::size_t n = 8;        // channels per group slot
  std::size_t p = 5;        // filter size
  std::size_t c_in = 3;
  bool bias = true;

  void validate() const {
    if (t == 0) throw ConfigError("encoder group order must be >= 1");
    if (!equivariant && t != 1) throw ConfigError("plain encoder requires t = 1, got t = " + std::to_string(t));
    if (blocks == 0) throw ConfigError("encoder needs at least one residual block");
    if (n == 0 || c_in == 0) throw ConfigError("encoder channel counts must be positive");
    if (p % 2 == 0) throw ConfigError("encoder filter size must be odd, got " + std::to_string(p));
  }

  std::size_t width() const { return n * t; }
};

namespace detail {

// Broadcast of a per-channel bias [n] onto x [..., t*n, H, W]; the same bias
// serves every group slot.
inline Var<double> add_channel_bias(Var<double> x, Var<double> bias) {
  const Shape s = x.shape();
  const std::size_t n = bias.shape()[0];
  const std::size_t hw = s[s.size() - 1] * s[s.size() - 2];
  const std::size_t channels = s[s.size() - 3];
  if (channels % n != 0) throw ShapeError("bias length does not divide channel count");
  std::vector<std::int64_t> idx(ad::numel(s));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>((i / hw) % channels % n);
  return x + ad::gather(bias, ad::make_index(std::move(idx)), s);
}

}  // namespace detail

class Encoder {
 public:
  explicit Encoder(EncoderConfig cfg) : cfg_((cfg.validate(), cfg)), synth_(cfg.p, RotationGroup(cfg.t)) {}

  const EncoderConfig& config() const { return cfg_; }
  std::size_t out_channels() const { return cfg_.width(); }

  // Adds "<prefix>head", "<prefix>block<i>.conv{1,2}", "<prefix>tail" weights (and biases) to `out`.
  void init(ParamSet<double>& out, std::mt19937_64& rng, const std::string& prefix = "enc.") const {
    const std::size_t n = cfg_.n, t = cfg_.t, p = cfg_.p;
    auto conv = [&](const std::string& name, std::size_t g_in, std::size_t c_in) {
      const double bound = fan_in_bound(g_in * c_in * p * p);
      out.add(prefix + name + ".w", uniform_tensor<double>(Shape{n, g_in, c_in, p, p}, bound, rng));
      if (cfg_.bias) out.add(prefix + name + ".b", Tensor<double>(Shape{n}));  // biases start at zero
    };
    conv("head", 1, cfg_.c_in);
    for (std::size_t b = 0; b < cfg_.blocks; ++b) {
      conv("block" + std::to_string(b) + ".conv1", t, n);
      conv("block" + std::to_string(b) + ".conv2", t, n);
    }
    conv("tail", t, n);
  }

  ParamSet<double> init(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    ParamSet<double> ps;
    init(ps, rng);
    return ps;
  }

  // img: [c_in, H, W] or [N, c_in, H, W]; returns [.., t*n, H, W].
  Var<double> forward(const BoundParams<double>& P, Var<double> img, const std::string& prefix = "enc.") const {
    const Shape s = img.shape();
    if (s.size() < 3 || s[s.size() - 3] != cfg_.c_in)
      throw ShapeError("encoder expects " + std::to_string(cfg_.c_in) + " input channels, got " + ad::to_string(s));
    auto layer = [&](const std::string& name, Var<double> x, bool lifting) {
      auto y = lifting ? lifting_conv(x, P[prefix + name + ".w"], synth_, Padding::same)
                       : group_conv(x, P[prefix + name + ".w"], synth_, Padding::same);
      return cfg_.bias ? detail::add_channel_bias(y, P[prefix + name + ".b"]) : y;
    };
    const auto head = layer("head", img, true);
    auto x = head;
    for (std::size_t b = 0; b < cfg_.blocks; ++b) {
      const std::string name = "block" + std::to_string(b);
      auto r = layer(name + ".conv2", ad::relu(layer(name + ".conv1", x, false)), false);
      x = x + r;
    }
    return layer("tail", x, false) + head;
  }

  GroupFeatureMap encode(const ParamSet<double>& params, const Image& img) const {
    if (img.c != cfg_.c_in)
      throw ShapeError("encoder expects " + std::to_string(cfg_.c_in) + " channels, image has " +
                       std::to_string(img.c));
    ad::Tape<double> tape;
    BoundParams<double> P(tape, params, false);
    auto y = forward(P, ad::constant(tape, to_tensor<double>(img)));
    return to_feature_map(y.value(), cfg_.t);
  }

 private:
  EncoderConfig cfg_;
  KernelSynthesizer<double> synth_;
};

inline ParamSet<double> build_encoder(const EncoderConfig& cfg, std::uint64_t seed) { return Encoder(cfg).init(seed); }

inline GroupFeatureMap encode(const EncoderConfig& cfg, const ParamSet<double>& params, const Image& img) {
  return Encoder(cfg).encode(params, img);
}

}  // namespace equisr
