#include "vltrack/vl_token.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace vltrack;

namespace {

ModifiedLangFeatures const_features(double c, long l, long width) {
  ModifiedLangFeatures m;
  m.f_cate = Tensor::full({l, width}, c);
  m.f_app_mod = Tensor::full({l, width}, c);
  m.f_act_mod = Tensor::full({l, width}, c);
  m.f_loc_mod = Tensor::full({l, width}, c);
  return m;
}

}  // namespace

TEST(LanguageToken, MeanOfConstantsIsConstant) {
  Tensor tok = build_language_token(const_features(0.75, 3, 5));
  ASSERT_EQ(tok.rows(), 1);
  ASSERT_EQ(tok.cols(), 5);
  for (long j = 0; j < 5; ++j) EXPECT_DOUBLE_EQ(tok(0, j), 0.75);
}

TEST(LanguageToken, EqualsMeanOfPerAttributeMeans) {
  std::mt19937_64 rng(3);
  ModifiedLangFeatures m;
  m.f_cate = Tensor::randn({4, 6}, rng);
  m.f_app_mod = Tensor::randn({4, 6}, rng);
  m.f_act_mod = Tensor::randn({4, 6}, rng);
  m.f_loc_mod = Tensor::randn({4, 6}, rng);
  Tensor tok = build_language_token(m);
  Tensor per = mean_rows(concat_rows({mean_rows(m.f_cate), mean_rows(m.f_app_mod),
                                      mean_rows(m.f_act_mod), mean_rows(m.f_loc_mod)}));
  for (long j = 0; j < 6; ++j) EXPECT_NEAR(tok(0, j), per(0, j), 1e-12);
}

TEST(LanguageToken, BruteForceMean) {
  std::mt19937_64 rng(5);
  ModifiedLangFeatures m;
  m.f_cate = Tensor::randn({2, 3}, rng);
  m.f_app_mod = Tensor::randn({2, 3}, rng);
  m.f_act_mod = Tensor::randn({2, 3}, rng);
  m.f_loc_mod = Tensor::randn({2, 3}, rng);
  Tensor tok = build_language_token(m);
  for (long j = 0; j < 3; ++j) {
    double s = 0.0;
    for (const Tensor* t : {&m.f_cate, &m.f_app_mod, &m.f_act_mod, &m.f_loc_mod})
      for (long i = 0; i < 2; ++i) s += (*t)(i, j);
    EXPECT_NEAR(tok(0, j), s / 8.0, 1e-12);
  }
}

TEST(VlToken, ConcatenationOrderAndShape) {
  std::mt19937_64 rng(7);
  Tensor t_lang = Tensor::randn({1, 4}, rng);
  Tensor t_vi = Tensor::randn({1, 4}, rng);
  Tensor pair = build_vl_token(t_lang, t_vi);
  ASSERT_EQ(pair.rows(), 2);
  ASSERT_EQ(pair.cols(), 4);
  for (long j = 0; j < 4; ++j) {
    EXPECT_DOUBLE_EQ(pair(0, j), t_lang(0, j));
    EXPECT_DOUBLE_EQ(pair(1, j), t_vi(0, j));
  }
  Tensor swapped = build_vl_token(t_vi, t_lang);
  for (long j = 0; j < 4; ++j) {
    EXPECT_DOUBLE_EQ(swapped(0, j), pair(1, j));
    EXPECT_DOUBLE_EQ(swapped(1, j), pair(0, j));
  }
  EXPECT_THROW(build_vl_token(Tensor::zeros({1, 3}), t_vi), std::invalid_argument);
}

TEST(Advance, FrameZeroCarriesLearnedInit) {
  std::mt19937_64 rng(9);
  Tensor learned = Tensor::randn({2, 4}, rng, 1.0, true);
  VLTokenState s = initial_state(learned);
  EXPECT_EQ(s.frame_index, 0);
  EXPECT_EQ(s.tokens.impl, learned.impl);
}

TEST(Advance, FrameIndexIncrements) {
  Tensor learned = Tensor::zeros({2, 4}, true);
  VLTokenState s = initial_state(learned);
  for (int i = 1; i <= 5; ++i) {
    s = advance(s, Tensor::full({2, 4}, static_cast<double>(i)));
    EXPECT_EQ(s.frame_index, i);
  }
}

// Backward through the next frame must not reach the previous frame's
// parameters via the token path.
TEST(Advance, GradientIsolationAcrossFrames) {
  std::mt19937_64 rng(11);
  Tensor learned = Tensor::randn({2, 4}, rng, 1.0, true);
  Tensor frame0_param = Tensor::randn({2, 4}, rng, 1.0, true);
  Tensor frame1_param = Tensor::randn({2, 4}, rng, 1.0, true);

  VLTokenState s0 = initial_state(learned);
  Tensor t_vl = mul(s0.tokens, frame0_param);  // frame 0 computation
  VLTokenState s1 = advance(s0, t_vl);
  EXPECT_FALSE(s1.tokens.requires_grad());

  Tensor loss = sum_all(mul(s1.tokens, frame1_param));  // frame 1 computation
  loss.backward();
  EXPECT_FALSE(learned.has_grad());
  EXPECT_FALSE(frame0_param.has_grad());
  ASSERT_TRUE(frame1_param.has_grad());

  // Frame 0's own loss does reach the learned initial tokens.
  sum_all(t_vl).backward();
  EXPECT_TRUE(learned.has_grad());
}
