#include "vltrack/fgm.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace vltrack;

namespace {

// Identity projections of width d, no bias anywhere, for worked instances.
FGMParams identity_params(long d, double alpha = 50.0, double phi = 0.5) {
  FGMParams p;
  p.delta_t = Linear::identity(d);
  p.delta_c = Linear::identity(d);
  p.delta_imp = Linear::from(Tensor::zeros({d, 1}));
  p.delta_l = Linear::identity(d);
  p.delta_s = Linear::identity(d);
  p.delta_v = Linear::identity(d);
  p.alpha = alpha;
  p.phi = phi;
  std::mt19937_64 rng(99);
  p.app_attn = CrossAttnParams(d, rng);
  p.act_attn = p.app_attn;
  return p;
}

Tensor weighted(const Tensor& y) {
  std::mt19937_64 r(static_cast<unsigned long>(y.numel()) + 5);
  return sum_all(mul(reshape(y, {y.numel()}), Tensor::uniform({y.numel()}, r, 0.5, 1.5)));
}

}  // namespace

TEST(Vfm, WorkedInstance) {
  // L=1, d=2, template tokens (1,0) and (0,1), category token (1,0),
  // identity projections.
  FGMParams p = identity_params(2);
  Tensor f_n = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor f_cate = Tensor::from({1, 2}, {1, 0});
  VfmResult r = vfm(f_cate, f_n, p);
  ASSERT_EQ(r.m_t.numel(), 2);
  EXPECT_NEAR(r.m_t[0], 1.0, 1e-3);
  EXPECT_NEAR(r.m_t[1], 0.4930, 1e-3);
  // f_n_mod scales each template row by its map value.
  EXPECT_NEAR(r.f_n_mod(0, 0), r.m_t[0], 1e-12);
  EXPECT_NEAR(r.f_n_mod(1, 1), r.m_t[1], 1e-12);
}

TEST(Vfm, IdenticalTemplateTokensGiveUniformMap) {
  FGMParams p = identity_params(3);
  Tensor f_n = Tensor::from({4, 3}, {0.2, -1.0, 0.4, 0.2, -1.0, 0.4, 0.2, -1.0, 0.4,
                                     0.2, -1.0, 0.4});
  Tensor f_cate = Tensor::from({2, 3}, {1.0, 0.5, -0.2, 0.0, 0.3, 0.7});
  VfmResult r = vfm(f_cate, f_n, p);
  for (long i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(r.m_t[i], 1.0);
}

TEST(Vfm, MapInUnitRangeWithMaxExactlyOne) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    FGMParams p(6, rng);
    Tensor f_cate = Tensor::randn({3, 6}, rng);
    Tensor f_n = Tensor::randn({5, 6}, rng);
    VfmResult r = vfm(f_cate, f_n, p);
    double mx = 0.0;
    for (long i = 0; i < r.m_t.numel(); ++i) {
      EXPECT_GE(r.m_t[i], 0.0);
      EXPECT_LE(r.m_t[i], 1.0);
      mx = std::max(mx, r.m_t[i]);
    }
    EXPECT_DOUBLE_EQ(mx, 1.0);
    // Each category token's similarity over template tokens is a distribution.
    for (long l = 0; l < r.m_sim.cols(); ++l) {
      double sum = 0.0;
      for (long t = 0; t < r.m_sim.rows(); ++t) sum += r.m_sim(t, l);
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(Vfm, EmptyCategoryIsContractError) {
  FGMParams p = identity_params(2);
  EXPECT_THROW(vfm(Tensor::zeros({0, 2}), Tensor::zeros({2, 2}), p), std::invalid_argument);
}

TEST(ModifyAppearance, ZeroTemplateIsIdentity) {
  std::mt19937_64 rng(11);
  FGMParams p(4, rng);
  Tensor f_app = Tensor::randn({3, 4}, rng);
  Tensor y = modify_appearance(f_app, Tensor::zeros({5, 4}), p);
  EXPECT_EQ(y.values(), f_app.values());
  EXPECT_EQ(y.rows(), 3);
  EXPECT_EQ(y.cols(), 4);
}

TEST(ModifyAppearance, GradientReachesBothInputs) {
  std::mt19937_64 rng(13);
  FGMParams p(4, rng);
  Tensor f_app = Tensor::randn({3, 4}, rng);
  Tensor f_n = Tensor::randn({5, 4}, rng);
  EXPECT_LT(grad_check([&](const Tensor& t) { return weighted(modify_appearance(t, f_n, p)); },
                       f_app, 1e-5),
            1e-4);
  EXPECT_LT(grad_check([&](const Tensor& t) { return weighted(modify_appearance(f_app, t, p)); },
                       f_n, 1e-5),
            1e-4);
}

TEST(ModifyAction, ZeroTemplatesIsIdentity) {
  std::mt19937_64 rng(17);
  FGMParams p(4, rng);
  Tensor f_act = Tensor::randn({3, 4}, rng);
  std::vector<Tensor> tpls{Tensor::zeros({5, 4}), Tensor::zeros({5, 4})};
  Tensor y = modify_action(f_act, tpls, p);
  EXPECT_EQ(y.values(), f_act.values());
  EXPECT_THROW(modify_action(f_act, {}, p), std::invalid_argument);
}

TEST(ModifyAction, SingleTemplateMatchesAppearancePath) {
  std::mt19937_64 rng(19);
  FGMParams p = identity_params(4);
  Tensor x = Tensor::randn({3, 4}, rng);
  Tensor tpl = Tensor::randn({5, 4}, rng);
  Tensor via_action = modify_action(x, {tpl}, p);
  Tensor via_appearance = modify_appearance(x, tpl, p);  // same attention params
  EXPECT_EQ(via_action.values(), via_appearance.values());
}

TEST(ModifyAction, DuplicatedTemplateListIsInvariant) {
  std::mt19937_64 rng(23);
  FGMParams p(4, rng);
  Tensor x = Tensor::randn({3, 4}, rng);
  Tensor tpl = Tensor::randn({5, 4}, rng);
  Tensor once = modify_action(x, {tpl}, p);
  Tensor twice = modify_action(x, {tpl, tpl}, p);
  for (long i = 0; i < once.numel(); ++i) EXPECT_NEAR(once[i], twice[i], 1e-12);
}

TEST(LfaGate, WorkedColumn) {
  Tensor col = Tensor::from({3, 1}, {0.1, 0.2, 0.7});
  auto [g, theta] = lfa_gate(col, 50.0, 0.5);
  ASSERT_EQ(theta.numel(), 1);
  EXPECT_NEAR(theta[0], 0.33123, 1e-4);
  EXPECT_NEAR(g(0, 0), 9.5e-6, 1e-5);
  EXPECT_NEAR(g(1, 0), 1.41e-3, 1e-5);
  EXPECT_NEAR(g(2, 0), 1.0 - 9.8e-9, 1e-5);
}

TEST(LfaGate, ConstantColumnGatesAtHalf) {
  Tensor col = Tensor::from({4, 2}, {0.3, -1.0, 0.3, -1.0, 0.3, -1.0, 0.3, -1.0});
  auto [g, theta] = lfa_gate(col, 50.0, 0.5);
  EXPECT_DOUBLE_EQ(theta[0], 0.3);
  EXPECT_DOUBLE_EQ(theta[1], -1.0);
  for (long i = 0; i < g.numel(); ++i) EXPECT_DOUBLE_EQ(g[i], 0.5);
}

TEST(LfaGate, MonotoneAndThresholdSeparated) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor m = Tensor::uniform({5, 3}, rng, 0.0, 1.0);
    auto [g, theta] = lfa_gate(m, 50.0, 0.5);
    for (long j = 0; j < 3; ++j) {
      for (long i = 0; i < 5; ++i) {
        if (m(i, j) < theta[j]) EXPECT_LT(g(i, j), 0.5);
        if (m(i, j) > theta[j]) EXPECT_GT(g(i, j), 0.5);
        for (long i2 = 0; i2 < 5; ++i2)
          if (m(i, j) > m(i2, j)) EXPECT_GT(g(i, j), g(i2, j));
      }
    }
  }
}

TEST(LfaGate, AlphaMustBePositive) {
  EXPECT_THROW(lfa_gate(Tensor::zeros({2, 2}), 0.0, 0.5), std::invalid_argument);
}

TEST(Lfa, ZeroSearchIsIdentity) {
  std::mt19937_64 rng(31);
  FGMParams p(4, rng);  // delta_v bias is zero-initialized
  Tensor f_loc = Tensor::randn({3, 4}, rng);
  Tensor y = lfa(f_loc, Tensor::zeros({6, 4}), p);
  EXPECT_EQ(y.values(), f_loc.values());
  EXPECT_EQ(y.rows(), 3);
  EXPECT_EQ(y.cols(), 4);
}

TEST(Lfa, OutputShapeIndependentOfSearchTokenCount) {
  std::mt19937_64 rng(37);
  FGMParams p(4, rng);
  Tensor f_loc = Tensor::randn({5, 4}, rng);
  for (long n : {2L, 7L, 16L}) {
    Tensor y = lfa(f_loc, Tensor::randn({n, 4}, rng), p);
    EXPECT_EQ(y.rows(), 5);
    EXPECT_EQ(y.cols(), 4);
  }
}

// A location token orthogonal to every search token under the projections is
// gated to near zero wherever some other token beats it clearly.
TEST(Lfa, OrthogonalTokenIsSuppressed) {
  FGMParams p = identity_params(2);
  Tensor f_loc = Tensor::from({3, 2}, {6, 0, 6, 0, 0, 6});
  Tensor f_search = Tensor::from({2, 2}, {1, 0, 0, 1});
  const double inv = 1.0 / std::sqrt(2.0);
  Tensor m_sim = softmax_rows(mul_scalar(matmul(f_loc, transpose(f_search)), inv));
  auto [g, theta] = lfa_gate(m_sim, 50.0, 0.5);
  // Column 0: tokens 0 and 1 exceed token 2 by more than 0.1.
  ASSERT_GT(m_sim(0, 0), m_sim(2, 0) + 0.1);
  EXPECT_LT(g(2, 0), 0.01);
  // Column 1: token 2 dominates, tokens 0 and 1 are suppressed.
  ASSERT_GT(m_sim(2, 1), m_sim(0, 1) + 0.1);
  EXPECT_LT(g(0, 1), 0.01);
  EXPECT_LT(g(1, 1), 0.01);
}

namespace {

struct FgmFixture {
  EncoderConfig cfg;
  FGMParams params;
  LangFeatures lang;
  VisFeatures vis;

  explicit FgmFixture(unsigned seed) {
    std::mt19937_64 rng(seed);
    cfg.channels = 4;
    cfg.lang_len = 3;
    params = FGMParams(4, rng);
    lang.f_cate = Tensor::randn({3, 4}, rng);
    lang.f_app = Tensor::randn({3, 4}, rng);
    lang.f_act = Tensor::randn({3, 4}, rng);
    lang.f_loc = Tensor::randn({3, 4}, rng);
    vis.f_search = Tensor::randn({8, 4}, rng);
    for (int i = 0; i < 3; ++i) vis.f_templates.push_back(Tensor::randn({4, 4}, rng));
    vis.t_vi = Tensor::randn({1, 4}, rng);
  }
};

bool same_values(const Tensor& a, const Tensor& b) { return a.values() == b.values(); }

}  // namespace

TEST(FgmForward, CategoryPassThroughIsBitIdentical) {
  FgmFixture f(41);
  ModifiedLangFeatures mod = fgm_forward(f.lang, f.vis, f.params);
  EXPECT_TRUE(same_values(mod.f_cate, f.lang.f_cate));
  EXPECT_EQ(mod.f_cate.impl, f.lang.f_cate.impl);
}

TEST(FgmForward, SearchOnlyAffectsLocation) {
  FgmFixture f(43);
  ModifiedLangFeatures a = fgm_forward(f.lang, f.vis, f.params);
  std::mt19937_64 rng(997);
  VisFeatures vis2 = f.vis;
  vis2.f_search = Tensor::randn({8, 4}, rng);
  ModifiedLangFeatures b = fgm_forward(f.lang, vis2, f.params);
  EXPECT_TRUE(same_values(a.f_app_mod, b.f_app_mod));
  EXPECT_TRUE(same_values(a.f_act_mod, b.f_act_mod));
  EXPECT_FALSE(same_values(a.f_loc_mod, b.f_loc_mod));
}

TEST(FgmForward, OldestTemplateOnlyAffectsAction) {
  FgmFixture f(47);
  ModifiedLangFeatures a = fgm_forward(f.lang, f.vis, f.params);
  std::mt19937_64 rng(991);
  VisFeatures vis2 = f.vis;
  vis2.f_templates.back() = Tensor::randn({4, 4}, rng);
  ModifiedLangFeatures b = fgm_forward(f.lang, vis2, f.params);
  EXPECT_TRUE(same_values(a.f_app_mod, b.f_app_mod));
  EXPECT_TRUE(same_values(a.f_loc_mod, b.f_loc_mod));
  EXPECT_FALSE(same_values(a.f_act_mod, b.f_act_mod));
}

TEST(FgmForward, FiveOpsPassGradCheck) {
  std::mt19937_64 rng(53);
  FGMParams p(4, rng);
  Tensor f_cate = Tensor::randn({4, 3}, rng);
  FGMParams p3(3, rng);
  Tensor f_n43 = Tensor::randn({4, 3}, rng);

  // vfm on a random 4x3 instance, both arguments.
  EXPECT_LT(grad_check(
                [&](const Tensor& t) { return weighted(vfm(t, f_n43, p3).f_n_mod); },
                Tensor::randn({4, 3}, rng), 1e-5),
            1e-4);
  EXPECT_LT(grad_check(
                [&](const Tensor& t) { return weighted(vfm(f_cate, t, p3).f_n_mod); },
                Tensor::randn({5, 3}, rng), 1e-5),
            1e-4);

  // lfa gate, lfa, and the attention modifications.
  EXPECT_LT(grad_check(
                [&](const Tensor& t) { return weighted(lfa_gate(t, 50.0, 0.5).first); },
                Tensor::uniform({5, 3}, rng, 0.0, 1.0), 1e-5),
            1e-4);
  Tensor f_search = Tensor::randn({7, 4}, rng);
  Tensor f_loc = Tensor::randn({3, 4}, rng);
  EXPECT_LT(grad_check([&](const Tensor& t) { return weighted(lfa(t, f_search, p)); }, f_loc,
                       1e-5),
            1e-4);
  EXPECT_LT(grad_check([&](const Tensor& t) { return weighted(lfa(f_loc, t, p)); }, f_search,
                       1e-5),
            1e-4);
  Tensor f_act = Tensor::randn({3, 4}, rng);
  Tensor tpl0 = Tensor::randn({4, 4}, rng), tpl1 = Tensor::randn({4, 4}, rng);
  EXPECT_LT(grad_check(
                [&](const Tensor& t) { return weighted(modify_action(f_act, {tpl0, t}, p)); },
                tpl1, 1e-5),
            1e-4);
}

TEST(FgmForward, CoarseVariantShapes) {
  FgmFixture f(59);
  std::mt19937_64 rng(61);
  CrossAttnParams coarse(4, rng);
  ModifiedLangFeatures mod = coarse_modulate(f.lang, f.vis, coarse);
  EXPECT_EQ(mod.f_cate.rows(), 3);
  EXPECT_EQ(mod.f_app_mod.rows(), 3);
  EXPECT_EQ(mod.f_act_mod.rows(), 3);
  EXPECT_EQ(mod.f_loc_mod.rows(), 3);
  // Coarse interaction does modify the category stream.
  EXPECT_FALSE(same_values(mod.f_cate, f.lang.f_cate));
}

TEST(FgmForward, SwitchesDisableSubmodules) {
  FgmFixture f(67);
  ModifiedLangFeatures full = fgm_forward(f.lang, f.vis, f.params);
  FgmSwitches no_vfm;
  no_vfm.use_vfm = false;
  ModifiedLangFeatures a = fgm_forward(f.lang, f.vis, f.params, no_vfm);
  for (long i = 0; i < a.m_t.numel(); ++i) EXPECT_DOUBLE_EQ(a.m_t[i], 1.0);
  EXPECT_FALSE(same_values(a.f_app_mod, full.f_app_mod));
  EXPECT_TRUE(same_values(a.f_loc_mod, full.f_loc_mod));

  FgmSwitches no_lfa;
  no_lfa.use_lfa = false;
  ModifiedLangFeatures b = fgm_forward(f.lang, f.vis, f.params, no_lfa);
  EXPECT_FALSE(same_values(b.f_loc_mod, full.f_loc_mod));
  EXPECT_TRUE(same_values(b.f_app_mod, full.f_app_mod));
}
