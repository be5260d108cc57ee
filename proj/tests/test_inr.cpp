#include <gtest/gtest.h>

#include <numbers>

#include "equisr/gradcheck.hpp"
#include "equisr/inr.hpp"
#include "test_util.hpp"

using namespace equisr;
using equisr::testing::max_abs_diff;
using equisr::testing::random_image;

namespace {

ModelConfig small_config(InrVariant v, std::size_t t, std::size_t L = 0) {
  ModelConfig cfg;
  cfg.encoder = EncoderConfig{.t = t, .blocks = 1, .n = 2, .p = 3, .c_in = 3};
  cfg.inr.variant = v;
  cfg.inr.L = v == InrVariant::ope ? 0 : L;
  cfg.inr.widths = {4};
  cfg.inr.out_width = 6;
  cfg.inr.psi_hidden = {5};
  cfg.inr.k_max = 2;
  cfg.inr.K = 3;
  return cfg;
}

Tensor<double> random_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return uniform_tensor<double>(Shape{rows, cols}, 1.0, rng);
}

// Slot-major rows [Q, t*m]: slot j takes slot (j - k) mod t.
Tensor<double> shift_rows(const Tensor<double>& x, std::size_t t, std::size_t k) {
  const std::size_t q = x.shape[0], m = x.shape[1] / t;
  Tensor<double> out(x.shape);
  for (std::size_t r = 0; r < q; ++r)
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t c = 0; c < m; ++c) out[(r * t + j) * m + c] = x[(r * t + (j + t - k) % t) * m + c];
  return out;
}

Tensor<double> rotate_rows(const Tensor<double>& x, const Mat2& a) {
  Tensor<double> out(x.shape);
  for (std::size_t r = 0; r < x.shape[0]; ++r) {
    const Vec2 v = a * Vec2{x[2 * r], x[2 * r + 1]};
    out[2 * r] = v[0];
    out[2 * r + 1] = v[1];
  }
  return out;
}

struct Bound {
  ad::Tape<double> tape;
  BoundParams<double> P;
  Bound(const ParamSet<double>& ps) : P(tape, ps, false) {}
  Var<double> c(const Tensor<double>& v) { return ad::constant(tape, v); }
};

constexpr InrVariant kVariants[] = {InrVariant::liif, InrVariant::ope, InrVariant::lte};

}  // namespace

TEST(LiftCoordinate, OrthogonalImages) {
  const auto g = make_group(8);
  const Vec2 x{0.4, -0.9};
  const auto l = g.lift(x);
  for (std::size_t k = 0; k < 8; ++k) {
    const Vec2 back = g.element(k) * l[k];
    EXPECT_NEAR(back[0], x[0], 1e-12);
    EXPECT_NEAR(back[1], x[1], 1e-12);
  }
}

// The three layer identities with random parameters: a cyclic shift of the
// group axis together with the rotation of the coordinate passes through.
TEST(Theorem, LayerIdentities) {
  for (auto v : kVariants)
    for (std::size_t t : {2u, 4u, 8u})
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const INRModel model(small_config(v, t, 1));
        const auto params = model.init(seed);
        Bound b(params);
        const std::size_t q = 5, d = model.latent_width();
        const auto codes = random_rows(q, t * d, seed + 1);
        const auto x = random_rows(q, 2, seed + 2);
        for (std::size_t k = 0; k < t; ++k) {
          const Mat2& a = model.group().element(k);
          const auto h = model.input_layer(b.P, b.c(codes), x).value();
          const auto hs = model.input_layer(b.P, b.c(shift_rows(codes, t, k)), rotate_rows(x, a)).value();
          EXPECT_LE(max_abs_diff(hs.data, shift_rows(h, t, k).data), 1e-12) << to_string(v) << " t=" << t;

          const std::size_t m_out = model.layer_width(model.config().inr.L);
          const auto hh = random_rows(q, t * m_out, seed + 3);
          if (model.config().inr.L > 0) {
            const auto h0 = random_rows(q, t * model.layer_width(0), seed + 4);
            const auto y = model.intermediate_layer(b.P, 1, b.c(h0)).value();
            const auto ys = model.intermediate_layer(b.P, 1, b.c(shift_rows(h0, t, k))).value();
            EXPECT_LE(max_abs_diff(ys.data, shift_rows(y, t, k).data), 1e-12);
          }
          const auto o = model.output_layer(b.P, b.c(hh)).value();
          const auto os = model.output_layer(b.P, b.c(shift_rows(hh, t, k))).value();
          EXPECT_LE(max_abs_diff(os.data, o.data), 1e-12);
        }
      }
}

TEST(Theorem, LocalCorollary) {
  for (auto v : kVariants)
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const INRModel model(small_config(v, 4, 2));
      const auto params = model.init(seed);
      LatentCode code{4, model.latent_width(), random_rows(1, 4 * model.latent_width(), seed).data};
      const Vec2 x{0.3, -0.55};
      const auto base = eval_local(model, params, code, x);
      for (std::size_t k = 0; k < 4; ++k) {
        const auto y = eval_local(model, params, shift_slots(code, k), model.group().element(k) * x);
        EXPECT_LE(max_abs_diff(y, base), 1e-11);
      }
    }
}

TEST(InputLayer, TwoSlotHandExpansion) {
  auto cfg = small_config(InrVariant::liif, 2);
  cfg.encoder.n = 1;
  cfg.inr.widths = {1};
  const INRModel model(cfg);
  auto params = model.init(1);
  // W_in^{A_0} = [1, 2, 3], W_in^{A_1} = [4, 5, 6] acting on [F; x1; x2], bias 0.5.
  params.at("inr.in.w").data = {1, 2, 3, 4, 5, 6};
  params.at("inr.in.b").data = {0.5};
  Bound b(params);
  const double f0 = 0.7, f1 = -1.3, x1 = 0.2, x2 = 0.9;
  const auto h = model.input_layer(b.P, b.c(Tensor<double>(Shape{1, 2}, {f0, f1})), Tensor<double>(Shape{1, 2}, {x1, x2}));
  // A_1 is a half turn for t = 2, so A_1^-1 x = -x.
  const double h0 = (1 * f0 + 2 * x1 + 3 * x2) + (4 * f1 - 5 * x1 - 6 * x2) + 0.5;  // B = A_0
  const double h1 = (4 * f0 + 5 * x1 + 6 * x2) + (1 * f1 - 2 * x1 - 3 * x2) + 0.5;  // B = A_1
  EXPECT_NEAR(h.value()[0], h0, 1e-14);
  EXPECT_NEAR(h.value()[1], h1, 1e-14);
}

TEST(IntermediateLayer, TwoSlotAndIdentity) {
  auto cfg = small_config(InrVariant::liif, 2, 1);
  cfg.inr.widths = {1};
  const INRModel model(cfg);
  auto params = model.init(2);
  params.at("inr.mid1.w").data = {3.0, 5.0};  // a = W^{A_0}, b = W^{A_1}
  params.at("inr.mid1.b").data = {0.0};
  Bound b(params);
  const auto y = model.intermediate_layer(b.P, 1, b.c(Tensor<double>(Shape{1, 2}, {2.0, 7.0}))).value();
  EXPECT_EQ(y.data, (std::vector<double>{3 * 2 + 5 * 7, 5 * 2 + 3 * 7}));

  auto cfg4 = small_config(InrVariant::liif, 4, 1);
  const INRModel m4(cfg4);
  auto p4 = m4.init(3);
  auto& w = p4.at("inr.mid1.w");
  std::fill(w.data.begin(), w.data.end(), 0.0);
  for (std::size_t i = 0; i < 4; ++i) w[i * 4 + i] = 1.0;
  std::fill(p4.at("inr.mid1.b").data.begin(), p4.at("inr.mid1.b").data.end(), 0.0);
  Bound b4(p4);
  const auto h = random_rows(3, 16, 4);
  EXPECT_EQ(m4.intermediate_layer(b4.P, 1, b4.c(h)).value().data, h.data);
}

TEST(IntermediateLayer, ParameterFraction) {
  const INRModel model(small_config(InrVariant::liif, 4, 1));
  const auto& w = model.init(1).at("inr.mid1.w");
  const std::size_t dense = (4 * model.layer_width(1)) * (4 * model.layer_width(0));
  EXPECT_EQ(w.size() * 4, dense);
}

TEST(OutputLayer, OpeAverageAndConstantInput) {
  const INRModel ope(small_config(InrVariant::ope, 4));
  const auto params = ope.init(1);
  Bound b(params);
  const auto h = random_rows(2, 12, 5);
  const auto y = ope.output_layer(b.P, b.c(h)).value();
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0;
      for (std::size_t a = 0; a < 4; ++a) s += h[r * 12 + a * 3 + c];
      EXPECT_NEAR(y[r * 3 + c], s / 4, 1e-15);
    }
  // Constant in A: psi(t W_out1 H).
  auto cfg = small_config(InrVariant::liif, 4);
  cfg.inr.psi_hidden = {};
  const INRModel liif(cfg);
  const auto pl = liif.init(2);
  Bound bl(pl);
  Tensor<double> hc(Shape{1, 16});
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t c = 0; c < 4; ++c) hc[a * 4 + c] = 0.1 * static_cast<double>(c + 1);
  const auto out = liif.output_layer(bl.P, bl.c(hc)).value();
  const auto& w1 = pl.at("inr.out1.w");
  const auto& w2 = pl.at("inr.psi0.w");
  const auto& b2 = pl.at("inr.psi0.b");
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double acc = b2[ch];
    for (std::size_t o = 0; o < 6; ++o) {
      double z = 0;
      for (std::size_t c = 0; c < 4; ++c) z += 4.0 * w1[o * 4 + c] * 0.1 * static_cast<double>(c + 1);
      acc += w2[ch * 6 + o] * z;
    }
    EXPECT_NEAR(out[ch], acc, 1e-14);
  }
}

TEST(EvalLocal, ZeroParameters) {
  const INRModel model(small_config(InrVariant::liif, 4, 1));
  auto params = model.init(1);
  for (auto& [name, v] : params) std::fill(v.data.begin(), v.data.end(), 0.0);
  LatentCode code{4, model.latent_width(), random_rows(1, 4 * model.latent_width(), 3).data};
  for (double y : eval_local(model, params, code, {0.2, 0.1})) EXPECT_EQ(y, 0.0);
}

// Literal transcription of the equivariant LIIF with no intermediate layers.
TEST(EvalLocal, LiifClosedForm) {
  for (std::size_t t : {2u, 4u, 8u}) {
    const auto cfg = small_config(InrVariant::liif, t);
    const INRModel model(cfg);
    const auto params = model.init(t);
    const std::size_t n = cfg.encoder.n, m = cfg.inr.widths[0];
    LatentCode code{t, n, random_rows(1, t * n, 7).data};
    const Vec2 x{-0.35, 0.8};
    const auto g = make_group(t);
    const auto& win = params.at("inr.in.w");
    const auto& bin = params.at("inr.in.b");
    std::vector<double> pooled(m, 0.0);
    for (std::size_t bb = 0; bb < t; ++bb) {
      for (std::size_t o = 0; o < m; ++o) {
        double h = bin[o];
        for (std::size_t a = 0; a < t; ++a) {
          const std::size_t blk = (a + t - bb) % t;  // B^-1 A
          const Vec2 xa = g.element(a).transpose() * x;
          for (std::size_t c = 0; c < n; ++c) h += win[(blk * m + o) * (n + 2) + c] * code.data[a * n + c];
          h += win[(blk * m + o) * (n + 2) + n] * xa[0] + win[(blk * m + o) * (n + 2) + n + 1] * xa[1];
        }
        pooled[o] += std::max(h, 0.0);
      }
    }
    std::vector<double> z(cfg.inr.out_width, 0.0);
    for (std::size_t r = 0; r < z.size(); ++r)
      for (std::size_t o = 0; o < m; ++o) z[r] += params.at("inr.out1.w")[r * m + o] * pooled[o];
    std::vector<double> hid(5, 0.0);
    for (std::size_t r = 0; r < 5; ++r) {
      hid[r] = params.at("inr.psi0.b")[r];
      for (std::size_t o = 0; o < z.size(); ++o) hid[r] += params.at("inr.psi0.w")[r * z.size() + o] * z[o];
      hid[r] = std::max(hid[r], 0.0);
    }
    const auto y = eval_local(model, params, code, x);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      double ref = params.at("inr.psi1.b")[ch];
      for (std::size_t r = 0; r < 5; ++r) ref += params.at("inr.psi1.w")[ch * 5 + r] * hid[r];
      EXPECT_NEAR(y[ch], ref, 1e-12);
    }
  }
}

TEST(OpeBasis, OrthonormalOnSquare) {
  const std::size_t k = 3, q = 128, n = (2 * k + 1) * (2 * k + 1);
  std::vector<double> gram(n * n, 0.0);
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < q; ++j) {
      const Vec2 x{-1.0 + (static_cast<double>(i) + 0.5) * 2.0 / q, -1.0 + (static_cast<double>(j) + 0.5) * 2.0 / q};
      const auto p = ope_basis(x, k);
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) gram[a * n + b] += p[a] * p[b] / (q * q);
    }
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) EXPECT_NEAR(gram[a * n + b], a == b ? 1.0 : 0.0, 1e-3);
  const auto p = ope_basis({0.3, 0.0}, 1);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_NEAR(p[3], std::sqrt(2.0) * std::cos(std::numbers::pi * 0.3), 1e-15);  // cos in x1, constant in x2
}

TEST(EvalGlobal, NearestAndEnsembleAtCentre) {
  const INRModel model(small_config(InrVariant::liif, 4));
  const auto params = model.init(4);
  const auto lat = model.latent_map(params, random_image(6, 6, 3, 4));
  const Image probe(6, 6, 0);
  const Vec2 c = probe.coordinate(2, 3);
  const auto near = eval_global(model, params, lat, c, EvalMode::nearest, 0.0);
  const auto local = eval_local(model, params, latent_code(lat, 2, 3), {0.0, 0.0});
  EXPECT_LE(max_abs_diff(near, local), 1e-14);
  const auto ens = eval_global(model, params, lat, c, EvalMode::ensemble, 0.0);
  EXPECT_LE(max_abs_diff(ens, near), 1e-14);
  EXPECT_THROW(eval_global(model, params, lat, {1.5, 0.0}, EvalMode::nearest, 0.0), DomainError);
}

TEST(EvalGlobal, TieBreakAndContinuity) {
  const INRModel model(small_config(InrVariant::liif, 4));
  const auto params = model.init(5);
  const auto lat = model.latent_map(params, random_image(4, 4, 3, 5));
  // x1 = 0 is the boundary between columns 1 and 2; the lower index wins.
  const Image probe(4, 4, 0);
  const double yrow = probe.coordinate(1, 0)[1];
  const auto tie = eval_global(model, params, lat, {0.0, yrow}, EvalMode::nearest, 0.0);
  const auto left = eval_local(model, params, latent_code(lat, 1, 1), {2.0 * (0.0 - probe.coordinate(1, 1)[0]) / 0.5, 0.0});
  EXPECT_LE(max_abs_diff(tie, left), 1e-14);
  // Ensemble mode is continuous across the boundary.
  double worst = 0.0;
  std::vector<double> prev;
  for (int s = -50; s <= 50; ++s) {
    const auto y = eval_global(model, params, lat, {1e-4 * s, yrow + 0.013}, EvalMode::ensemble, 1e-7);
    if (!prev.empty()) worst = std::max(worst, max_abs_diff(y, prev));
    prev = y;
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(SuperResolve, ShapesAndDomain) {
  const INRModel model(small_config(InrVariant::lte, 2));
  const auto params = model.init(6);
  const auto img = random_image(10, 10, 3, 6);
  const auto y = super_resolve(model, params, img, 2.7);
  EXPECT_EQ(y.h, 27u);
  EXPECT_EQ(y.w, 27u);
  EXPECT_EQ(super_resolve(model, params, random_image(20, 20, 3, 1), 2.5).h, 50u);
  EXPECT_THROW(super_resolve(model, params, img, 0.5), DomainError);
}

TEST(SuperResolve, ChunkingDoesNotChangeResult) {
  const INRModel model(small_config(InrVariant::liif, 4, 1));
  const auto params = model.init(7);
  const auto img = random_image(8, 8, 3, 7);
  SrOptions a, b;
  b.chunk = 37;
  EXPECT_EQ(super_resolve(model, params, img, 2.0, a).data, super_resolve(model, params, img, 2.0, b).data);
}

TEST(SuperResolve, ExactP4Equivariance) {
  for (auto v : kVariants) {
    const INRModel model(small_config(v, 4, 1));
    const auto params = model.init(8);
    const auto img = random_image(8, 8, 3, 8);
    SrOptions opt;
    opt.eps = 0.0;
    const auto y0 = super_resolve(model, params, img, 2.0, opt);
    for (int k = 1; k < 4; ++k) {
      const double ang = k * std::numbers::pi / 2;
      const auto y1 = super_resolve(model, params, rotate_image(img, ang), 2.0, opt);
      EXPECT_LE(max_abs_diff(y1.data, rotate_image(y0, ang).data), 1e-10) << to_string(v);
    }
  }
}

TEST(InrGrad, FullModelComposite) {
  using namespace equisr::ad;
  for (auto v : kVariants)
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto cfg = small_config(v, 2, 1);
      cfg.encoder.c_in = 1;
      const INRModel model(cfg);
      const auto params = model.init(seed);
      std::vector<std::string> names;
      std::vector<Tensor<double>> inputs;
      for (const auto& [name, t] : params) {
        names.push_back(name);
        inputs.push_back(t);
      }
      const auto img = to_tensor<double>(random_image(4, 4, 1, seed));
      const std::vector<Query> qs = {{0, {0.1, 0.3}}, {0, {-0.6, 0.45}}, {0, {0.9, -0.8}}};
      TapeFunction<double> fn = [&](Tape<double>& tape, const std::vector<Var<double>>& vars) {
        BoundParams<double> P;
        for (std::size_t i = 0; i < names.size(); ++i) P.bind(names[i], vars[i]);
        auto y = model.global(P, model.latent(P, constant(tape, img)), qs, EvalMode::ensemble, 1e-7);
        return mean_abs(y - constant(tape, Tensor<double>(y.shape(), 0.3)));
      };
      EXPECT_LE(check_gradients(fn, inputs).max_rel_error, 1e-4) << to_string(v);
    }
}
