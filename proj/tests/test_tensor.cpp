#include "vltrack/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace vltrack;

namespace {

Tensor t2(std::vector<double> d, long m, long n, bool rg = false) {
  return Tensor::from({m, n}, std::move(d), rg);
}

}  // namespace

TEST(Matmul, IdentityCase) {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor a = t2({1, 2, 3, 4}, 2, 2);
  Tensor y = matmul(eye, a);
  EXPECT_EQ(y.values(), a.values());
}

TEST(Matmul, HandMultiplication) {
  Tensor a = t2({1, 2}, 1, 2);
  Tensor b = t2({3, 4}, 2, 1);
  Tensor y = matmul(a, b);
  ASSERT_EQ(y.numel(), 1);
  EXPECT_DOUBLE_EQ(y.item(), 11.0);
}

TEST(Matmul, ZeroAnnihilator) {
  std::mt19937_64 rng(7);
  Tensor z = Tensor::zeros({3, 4});
  Tensor b = Tensor::randn({4, 5}, rng);
  Tensor y = matmul(z, b);
  for (long i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], 0.0);
}

TEST(Matmul, ShapeError) {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  EXPECT_THROW(matmul(a, b), std::invalid_argument);
}

TEST(SoftmaxRows, UniformLogits) {
  Tensor y = softmax_rows(t2({0, 0, 0}, 1, 3));
  for (long j = 0; j < 3; ++j) EXPECT_NEAR(y(0, j), 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxRows, ClosedForm) {
  Tensor y = softmax_rows(t2({std::log(2.0), 0.0}, 1, 2));
  EXPECT_NEAR(y(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(y(0, 1), 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxRows, ShiftInvariance) {
  std::mt19937_64 rng(11);
  for (int s = 0; s < 10; ++s) {
    Tensor x = Tensor::randn({3, 5}, rng, 2.0);
    Tensor shifted = add_scalar(x, 3.71);
    Tensor a = softmax_rows(x), b = softmax_rows(shifted);
    for (long i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(SoftmaxRows, RowsSumToOneAtLargeMagnitude) {
  std::mt19937_64 rng(13);
  for (int s = 0; s < 20; ++s) {
    Tensor x = Tensor::uniform({4, 7}, rng, -1e3, 1e3);
    Tensor y = softmax_rows(x);
    for (long i = 0; i < 4; ++i) {
      double sum = 0.0;
      for (long j = 0; j < 7; ++j) {
        sum += y(i, j);
        EXPECT_GE(y(i, j), 0.0);
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(Sigmoid, Midpoint) {
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::from({1}, {0.0})).item(), 0.5);
}

TEST(Sigmoid, ScalarEvaluation) {
  EXPECT_NEAR(sigmoid(Tensor::from({1}, {18.44})).item(), 1.0 - 9.8e-9, 1e-10);
}

TEST(Sigmoid, Symmetry) {
  std::mt19937_64 rng(17);
  for (int s = 0; s < 50; ++s) {
    Tensor x = Tensor::uniform({1}, rng, -30.0, 30.0);
    Tensor nx = mul_scalar(x, -1.0);
    EXPECT_NEAR(sigmoid(nx).item(), 1.0 - sigmoid(x).item(), 1e-12);
  }
}

TEST(Attention, ZeroValues) {
  std::mt19937_64 rng(19);
  Tensor q = Tensor::randn({3, 4}, rng);
  Tensor k = Tensor::randn({5, 4}, rng);
  Tensor v = Tensor::zeros({5, 2});
  Tensor y = scaled_dot_attention(q, k, v);
  for (long i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], 0.0);
}

TEST(Attention, SingletonKey) {
  std::mt19937_64 rng(23);
  Tensor q = Tensor::randn({4, 3}, rng);
  Tensor k = Tensor::randn({1, 3}, rng);
  Tensor v = Tensor::randn({1, 6}, rng);
  Tensor y = scaled_dot_attention(q, k, v);
  for (long i = 0; i < 4; ++i)
    for (long j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(y(i, j), v(0, j));
}

// Step-by-step oracle: logits, softmax, mix computed by hand.
TEST(Attention, ManualTwoByTwo) {
  Tensor q = t2({1.0, 0.0, 0.5, -0.5}, 2, 2);
  Tensor k = t2({0.2, 0.4, -0.3, 0.1}, 2, 2);
  Tensor v = t2({1.0, 2.0, 3.0, 4.0}, 2, 2);
  const double inv = 1.0 / std::sqrt(2.0);
  double expect[2][2];
  for (int i = 0; i < 2; ++i) {
    double l0 = (q(i, 0) * k(0, 0) + q(i, 1) * k(0, 1)) * inv;
    double l1 = (q(i, 0) * k(1, 0) + q(i, 1) * k(1, 1)) * inv;
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
    const double w0 = e0 / (e0 + e1), w1 = e1 / (e0 + e1);
    expect[i][0] = w0 * v(0, 0) + w1 * v(1, 0);
    expect[i][1] = w0 * v(0, 1) + w1 * v(1, 1);
  }
  Tensor y = scaled_dot_attention(q, k, v);
  for (long i = 0; i < 2; ++i)
    for (long j = 0; j < 2; ++j) EXPECT_NEAR(y(i, j), expect[i][j], 1e-12);
}

TEST(GradCheck, LinearFunction) {
  std::mt19937_64 rng(29);
  Tensor x = Tensor::randn({3, 3}, rng);
  const double err = grad_check([](const Tensor& t) { return sum_all(t); }, x, 1e-5);
  EXPECT_LT(err, 1e-9);
}

TEST(GradCheck, SigmoidSumAtZero) {
  Tensor x = Tensor::zeros({2, 3});
  Tensor xg = Tensor::from(x.shape(), x.values(), true);
  Tensor y = sum_all(sigmoid(xg));
  y.backward();
  for (long i = 0; i < xg.numel(); ++i) EXPECT_DOUBLE_EQ(xg.grad_at(i), 0.25);
  const double err = grad_check([](const Tensor& t) { return sum_all(sigmoid(t)); }, x, 1e-5);
  EXPECT_LT(err, 1e-6);
}

TEST(GradCheck, ContractErrors) {
  Tensor x = Tensor::zeros({2});
  EXPECT_THROW(grad_check([](const Tensor& t) { return t; }, x, 1e-5), std::invalid_argument);
  EXPECT_THROW(grad_check([](const Tensor& t) { return sum_all(t); }, x, 0.5),
               std::invalid_argument);
}

TEST(GradOps, ElementwiseAndReductions) {
  std::mt19937_64 rng(31);
  Tensor x = Tensor::randn({3, 4}, rng);
  Tensor b = Tensor::randn({3, 4}, rng);
  auto weighted = [](Tensor y) {
    std::mt19937_64 r(static_cast<unsigned long>(y.numel()) + 5);
    return sum_all(mul(reshape(y, {y.numel()}), Tensor::uniform({y.numel()}, r, 0.5, 1.5)));
  };
  auto run = [&](const std::function<Tensor(const Tensor&)>& f) {
    return grad_check([&](const Tensor& t) { return weighted(f(t)); }, x, 1e-5);
  };
  EXPECT_LT(run([&](const Tensor& t) { return add(t, b); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return sub(b, t); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return mul(t, b); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return div(t, add_scalar(sigmoid(b), 0.5)); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return div(b, add_scalar(sigmoid(t), 0.5)); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return neg(t); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return mul_scalar(t, -2.5); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return gelu(t); }), 1e-5);
  EXPECT_LT(run([&](const Tensor& t) { return exp(t); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return log(add_scalar(sigmoid(t), 0.5)); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return softmax_rows(t); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return mean_all(t); }), 1e-7);
  EXPECT_LT(run([&](const Tensor& t) { return max_all(t); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return mean_rows(t); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return transpose(t); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return minimum(t, b); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return maximum(t, b); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return abs(t); }), 1e-6);
}

TEST(GradOps, StructuralAndBroadcast) {
  std::mt19937_64 rng(37);
  Tensor x = Tensor::randn({4, 3}, rng);
  Tensor other = Tensor::randn({2, 3}, rng);
  Tensor rowv = Tensor::randn({1, 3}, rng);
  Tensor colv = Tensor::randn({4, 1}, rng);
  auto weighted = [](Tensor y) {
    std::mt19937_64 r(static_cast<unsigned long>(y.numel()) + 5);
    return sum_all(mul(reshape(y, {y.numel()}), Tensor::uniform({y.numel()}, r, 0.5, 1.5)));
  };
  auto run = [&](const std::function<Tensor(const Tensor&)>& f) {
    return grad_check([&](const Tensor& t) { return weighted(f(t)); }, x, 1e-5);
  };
  EXPECT_LT(run([&](const Tensor& t) { return concat_rows({t, other}); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return slice_rows(t, 1, 3); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return slice_cols(t, 0, 2); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return concat_cols({t, t}); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return add_rowvec(t, rowv); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return sub_rowvec(t, rowv); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return scale_rows(t, colv); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) {
              return scale_rows(other, slice_cols(slice_rows(t, 0, 2), 0, 1));
            }),
            1e-5);
  EXPECT_LT(run([&](const Tensor& t) { return div_by(t, add_scalar(max_all(abs(t)), 1.0)); }),
            1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return pick(t, 5); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) {
              return concat_vec({pick(t, 0), pick(t, 7), mean_all(t)});
            }),
            1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return matmul(t, transpose(other)); }), 1e-6);
  EXPECT_LT(run([&](const Tensor& t) { return matmul(other, transpose(t)); }), 1e-6);
}

TEST(GradOps, MedianStdClampNorm) {
  std::mt19937_64 rng(41);
  Tensor x5 = Tensor::randn({5, 3}, rng);  // odd rows: unique median
  Tensor x4 = Tensor::randn({4, 3}, rng);
  Tensor gain = Tensor::randn({1, 3}, rng, 0.5);
  Tensor bias = Tensor::randn({1, 3}, rng, 0.5);
  auto weighted = [](Tensor y) {
    std::mt19937_64 r(static_cast<unsigned long>(y.numel()) + 5);
    return sum_all(mul(reshape(y, {y.numel()}), Tensor::uniform({y.numel()}, r, 0.5, 1.5)));
  };
  EXPECT_LT(grad_check([&](const Tensor& t) { return weighted(columns_median(t)); }, x5, 1e-5),
            1e-6);
  EXPECT_LT(grad_check([&](const Tensor& t) { return weighted(columns_median(t)); }, x4, 1e-5),
            1e-6);
  EXPECT_LT(grad_check([&](const Tensor& t) { return weighted(columns_std(t)); }, x5, 1e-5),
            1e-6);
  EXPECT_LT(grad_check(
                [&](const Tensor& t) { return weighted(layer_norm_rows(t, gain, bias)); }, x5,
                1e-5),
            1e-5);
  EXPECT_LT(grad_check(
                [&](const Tensor& t) {
                  return weighted(layer_norm_rows(x5, t, bias));
                },
                gain, 1e-5),
            1e-5);
  EXPECT_LT(grad_check([&](const Tensor& t) { return weighted(clamp(t, -0.5, 0.5)); }, x5, 1e-5),
            1e-5);
}

TEST(GradOps, GatherPatchConv) {
  std::mt19937_64 rng(43);
  Tensor table = Tensor::randn({6, 4}, rng);
  Tensor img = Tensor::randn({4, 4, 3}, rng);
  Tensor fmap = Tensor::randn({2, 3, 3}, rng);
  auto weighted = [](Tensor y) {
    std::mt19937_64 r(static_cast<unsigned long>(y.numel()) + 5);
    return sum_all(mul(reshape(y, {y.numel()}), Tensor::uniform({y.numel()}, r, 0.5, 1.5)));
  };
  EXPECT_LT(grad_check(
                [&](const Tensor& t) { return weighted(embedding_lookup(t, {1, 3, 1, 5})); },
                table, 1e-5),
            1e-6);
  EXPECT_LT(grad_check([&](const Tensor& t) { return weighted(extract_patches(t, 2)); }, img,
                       1e-5),
            1e-6);
  EXPECT_LT(grad_check([&](const Tensor& t) { return weighted(im2col(t, 3)); }, fmap, 1e-5),
            1e-6);
}

TEST(GradOps, AttentionComposite) {
  std::mt19937_64 rng(47);
  Tensor q = Tensor::randn({3, 4}, rng);
  Tensor k = Tensor::randn({5, 4}, rng);
  Tensor v = Tensor::randn({5, 2}, rng);
  auto weighted = [](Tensor y) {
    std::mt19937_64 r(static_cast<unsigned long>(y.numel()) + 5);
    return sum_all(mul(reshape(y, {y.numel()}), Tensor::uniform({y.numel()}, r, 0.5, 1.5)));
  };
  EXPECT_LT(grad_check(
                [&](const Tensor& t) { return weighted(scaled_dot_attention(t, k, v)); }, q,
                1e-5),
            1e-5);
  EXPECT_LT(grad_check(
                [&](const Tensor& t) { return weighted(scaled_dot_attention(q, t, v)); }, k,
                1e-5),
            1e-5);
  EXPECT_LT(grad_check(
                [&](const Tensor& t) { return weighted(scaled_dot_attention(q, k, t)); }, v,
                1e-5),
            1e-5);
}

TEST(Tensor, Determinism) {
  std::mt19937_64 rng(53);
  Tensor a = Tensor::randn({8, 8}, rng);
  Tensor b = Tensor::randn({8, 8}, rng);
  Tensor y1 = matmul(softmax_rows(a), gelu(b));
  Tensor y2 = matmul(softmax_rows(a), gelu(b));
  EXPECT_EQ(y1.values(), y2.values());
}

TEST(Tensor, NonFiniteIsAnError) {
  EXPECT_THROW(exp(Tensor::from({1}, {1000.0})), std::runtime_error);
  EXPECT_THROW(log(Tensor::from({1}, {0.0})), std::runtime_error);
  std::vector<double> bad{std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(Tensor::from({1}, bad), std::runtime_error);
}

TEST(Tensor, GradShapeMatchesData) {
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  sum_all(x).backward();
  ASSERT_TRUE(x.has_grad());
  EXPECT_EQ(x.grad().size(), x.values().size());
}

TEST(Tensor, DetachStopsGradient) {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  Tensor y = mul_scalar(x, 3.0).detach();
  Tensor z = sum_all(mul(y, y));
  z.backward();
  EXPECT_FALSE(x.has_grad());
  EXPECT_FALSE(y.requires_grad());
}

TEST(Tensor, NoGradGuardSuppressesTape) {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  NoGradGuard ng;
  Tensor y = sum_all(mul(x, x));
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.impl->parents.empty());
}

TEST(Tensor, GradAccumulatesAcrossBackwards) {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  sum_all(x).backward();
  sum_all(x).backward();
  EXPECT_DOUBLE_EQ(x.grad_at(0), 2.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

// Two roots sharing an interior subgraph must each contribute exactly once.
TEST(Tensor, SharedSubgraphBackwardsDoNotDoubleCount) {
  Tensor x = Tensor::from({2}, {1.5, -0.5});
  Tensor w = Tensor::from({2}, {2.0, 3.0}, true);
  Tensor h = mul(x, w);  // shared interior node

  Tensor wa = Tensor::from({2}, {2.0, 3.0}, true);
  Tensor ha = mul(x, wa);
  sum_all(mul(ha, ha)).backward();
  const std::vector<double> single = wa.grad();

  sum_all(mul(h, h)).backward();
  sum_all(mul(h, h)).backward();
  for (size_t i = 0; i < single.size(); ++i)
    EXPECT_DOUBLE_EQ(w.grad()[i], 2.0 * single[i]);
}
