#pragma once

// Registry of finite-difference gradient checks: every differentiable op
// exactly once, plus the composite paths (VFM chain, LFA chain, full head).
// Each entry builds a random small instance from a seed and returns the max
// relative error between analytic and central-difference gradients.

#include <functional>
#include <string>
#include <vector>

#include "vltrack/fgm.hpp"
#include "vltrack/head.hpp"
#include "vltrack/tensor.hpp"

namespace vltrack {

struct GradCheckEntry {
  std::string name;
  std::function<double(std::uint64_t)> run;  // seed -> max relative error
};

namespace detail {

inline Tensor weighted_sum(const Tensor& y, std::uint64_t salt) {
  std::mt19937_64 r(salt * 7919u + 13u);
  return sum_all(mul(reshape(y, {y.numel()}), Tensor::uniform({y.numel()}, r, 0.5, 1.5)));
}

// Check d(weighted_sum(f(x)))/dx at a random x built by `make_input`.
inline double check_op(std::uint64_t seed, const std::function<Tensor(std::mt19937_64&)>& make_input,
                       const std::function<Tensor(const Tensor&)>& f) {
  std::mt19937_64 rng(seed);
  Tensor x = make_input(rng);
  return grad_check([&](const Tensor& t) { return detail::weighted_sum(f(t), seed); }, x, 1e-5);
}

}  // namespace detail

inline std::vector<GradCheckEntry> grad_check_registry() {
  using detail::check_op;
  auto randn34 = [](std::mt19937_64& r) { return Tensor::randn({3, 4}, r); };
  auto randn43 = [](std::mt19937_64& r) { return Tensor::randn({4, 3}, r); };
  auto randn53 = [](std::mt19937_64& r) { return Tensor::randn({5, 3}, r); };
  auto unit53 = [](std::mt19937_64& r) { return Tensor::uniform({5, 3}, r, 0.0, 1.0); };

  std::vector<GradCheckEntry> reg;
  auto add_entry = [&](const std::string& name, std::function<double(std::uint64_t)> fn) {
    reg.push_back({name, std::move(fn)});
  };

  add_entry("add", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    Tensor b = Tensor::randn({3, 4}, r);
    return check_op(s, randn34, [=](const Tensor& t) { return add(t, b); });
  });
  add_entry("sub", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    Tensor b = Tensor::randn({3, 4}, r);
    return check_op(s, randn34, [=](const Tensor& t) { return sub(b, t); });
  });
  add_entry("mul", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    Tensor b = Tensor::randn({3, 4}, r);
    return check_op(s, randn34, [=](const Tensor& t) { return mul(t, b); });
  });
  add_entry("div", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    Tensor b = add_scalar(sigmoid(Tensor::randn({3, 4}, r)), 0.5);
    return std::max(
        check_op(s, randn34, [=](const Tensor& t) { return div(t, b); }),
        check_op(s, randn34,
                 [=](const Tensor& t) { return div(b, add_scalar(sigmoid(t), 0.5)); }));
  });
  add_entry("neg", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) { return neg(t); });
  });
  add_entry("add_scalar", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) { return add_scalar(t, 1.7); });
  });
  add_entry("mul_scalar", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) { return mul_scalar(t, -2.3); });
  });
  add_entry("matmul", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    Tensor b = Tensor::randn({4, 2}, r);
    return std::max(
        check_op(s, randn34, [=](const Tensor& t) { return matmul(t, b); }),
        check_op(s, randn43, [=](const Tensor& t) { return matmul(transpose(b), t); }));
  });
  add_entry("transpose", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) { return transpose(t); });
  });
  add_entry("reshape", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) { return reshape(t, {2, 6}); });
  });
  add_entry("sigmoid", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) { return sigmoid(t); });
  });
  add_entry("gelu", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) { return gelu(t); });
  });
  add_entry("exp", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) { return exp(t); });
  });
  add_entry("log", [=](std::uint64_t s) {
    return check_op(s, randn34,
                    [](const Tensor& t) { return log(add_scalar(sigmoid(t), 0.5)); });
  });
  add_entry("abs", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) { return abs(t); });
  });
  add_entry("clamp", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) { return clamp(t, -0.4, 0.6); });
  });
  add_entry("minimum", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    Tensor b = Tensor::randn({3, 4}, r);
    return check_op(s, randn34, [=](const Tensor& t) { return minimum(t, b); });
  });
  add_entry("maximum", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    Tensor b = Tensor::randn({3, 4}, r);
    return check_op(s, randn34, [=](const Tensor& t) { return maximum(t, b); });
  });
  add_entry("softmax_rows", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) { return softmax_rows(t); });
  });
  add_entry("layer_norm_rows", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    Tensor g = Tensor::randn({1, 4}, r, 0.5);
    Tensor b = Tensor::randn({1, 4}, r, 0.5);
    Tensor x = Tensor::randn({3, 4}, r);
    return std::max(
        check_op(s, randn34, [=](const Tensor& t) { return layer_norm_rows(t, g, b); }),
        check_op(
            s, [](std::mt19937_64& rr) { return Tensor::randn({1, 4}, rr, 0.5); },
            [=](const Tensor& t) { return layer_norm_rows(x, t, b); }));
  });
  add_entry("sum_all", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) { return sum_all(t); });
  });
  add_entry("mean_all", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) { return mean_all(t); });
  });
  add_entry("max_all", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) { return max_all(t); });
  });
  add_entry("mean_rows", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) { return mean_rows(t); });
  });
  add_entry("columns_median", [=](std::uint64_t s) {
    return std::max(
        check_op(s, randn53, [](const Tensor& t) { return columns_median(t); }),
        check_op(s + 1, randn43, [](const Tensor& t) { return columns_median(t); }));
  });
  add_entry("columns_std", [=](std::uint64_t s) {
    return check_op(s, randn53, [](const Tensor& t) { return columns_std(t); });
  });
  add_entry("add_rowvec", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    Tensor v = Tensor::randn({1, 4}, r);
    Tensor x = Tensor::randn({3, 4}, r);
    return std::max(
        check_op(s, randn34, [=](const Tensor& t) { return add_rowvec(t, v); }),
        check_op(
            s, [](std::mt19937_64& rr) { return Tensor::randn({1, 4}, rr); },
            [=](const Tensor& t) { return add_rowvec(x, t); }));
  });
  add_entry("scale_rows", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    Tensor v = Tensor::randn({3, 1}, r);
    Tensor x = Tensor::randn({3, 4}, r);
    return std::max(
        check_op(s, randn34, [=](const Tensor& t) { return scale_rows(t, v); }),
        check_op(
            s, [](std::mt19937_64& rr) { return Tensor::randn({3, 1}, rr); },
            [=](const Tensor& t) { return scale_rows(x, t); }));
  });
  add_entry("div_by", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) {
      return div_by(t, add_scalar(max_all(abs(t)), 1.0));
    });
  });
  add_entry("concat_rows", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    Tensor b = Tensor::randn({2, 4}, r);
    return check_op(s, randn34, [=](const Tensor& t) { return concat_rows({t, b, t}); });
  });
  add_entry("slice_rows", [=](std::uint64_t s) {
    return check_op(s, randn53, [](const Tensor& t) { return slice_rows(t, 1, 4); });
  });
  add_entry("slice_cols", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) { return slice_cols(t, 1, 3); });
  });
  add_entry("concat_cols", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    Tensor b = Tensor::randn({3, 2}, r);
    return check_op(s, randn34, [=](const Tensor& t) { return concat_cols({t, b}); });
  });
  add_entry("pick", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) { return pick(t, 7); });
  });
  add_entry("concat_vec", [=](std::uint64_t s) {
    return check_op(s, randn34, [](const Tensor& t) {
      return concat_vec({pick(t, 0), mean_all(t), pick(t, 5)});
    });
  });
  add_entry("embedding_lookup", [=](std::uint64_t s) {
    return check_op(
        s, [](std::mt19937_64& r) { return Tensor::randn({6, 4}, r); },
        [](const Tensor& t) { return embedding_lookup(t, {0, 3, 3, 5}); });
  });
  add_entry("extract_patches", [=](std::uint64_t s) {
    return check_op(
        s, [](std::mt19937_64& r) { return Tensor::randn({4, 4, 3}, r); },
        [](const Tensor& t) { return extract_patches(t, 2); });
  });
  add_entry("im2col", [=](std::uint64_t s) {
    return check_op(
        s, [](std::mt19937_64& r) { return Tensor::randn({2, 3, 3}, r); },
        [](const Tensor& t) { return im2col(t, 3); });
  });
  add_entry("scaled_dot_attention", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    Tensor q = Tensor::randn({3, 4}, r);
    Tensor k = Tensor::randn({5, 4}, r);
    Tensor v = Tensor::randn({5, 3}, r);
    auto dq = check_op(s, randn34,
                       [=](const Tensor& t) { return scaled_dot_attention(t, k, v); });
    auto dk = check_op(s, randn53 /* 5x3 -> reuse as keys of width 3? no */,
                       [=](const Tensor& t) {
                         return scaled_dot_attention(Tensor::from({3, 3}, std::vector<double>(9, 0.3)),
                                                     t, v);
                       });
    auto dv = check_op(s, randn53, [=](const Tensor& t) {
      return scaled_dot_attention(q, k, reshape(t, {5, 3}));
    });
    return std::max({dq, dk, dv});
  });
  add_entry("focal_loss", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    Box gt{8.0, 10.0, 10.0, 12.0};
    BoxTargets targets = encode_targets(gt, 4, 32);
    return check_op(
        s,
        [](std::mt19937_64& rr) {
          return add_scalar(mul_scalar(Tensor::uniform({4, 4}, rr, 0.0, 1.0), 0.9), 0.05);
        },
        [=](const Tensor& t) { return focal_loss(t, targets.heat); });
  });
  add_entry("l1_loss", [=](std::uint64_t s) {
    Box gt{0.3, 0.4, 0.2, 0.25};
    return check_op(
        s, [](std::mt19937_64& r) { return Tensor::uniform({4}, r, 0.1, 0.6); },
        [=](const Tensor& t) { return l1_loss(t, gt); });
  });
  add_entry("giou_loss", [=](std::uint64_t s) {
    Box gt{0.3, 0.4, 0.2, 0.25};
    return check_op(
        s, [](std::mt19937_64& r) { return Tensor::uniform({4}, r, 0.1, 0.4); },
        [=](const Tensor& t) { return giou_loss(t, gt); });
  });

  // Composite paths.
  add_entry("vfm_chain", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    FGMParams p(3, r);
    Tensor f_cate = Tensor::randn({4, 3}, r);
    Tensor f_n = Tensor::randn({4, 3}, r);
    auto d_cate = check_op(s, randn43, [=](const Tensor& t) {
      VfmResult v = vfm(t, f_n, p);
      return add(v.f_n_mod, scale_rows(f_n, v.m_t));
    });
    auto d_tpl = check_op(s, randn43,
                          [=](const Tensor& t) { return vfm(f_cate, t, p).f_n_mod; });
    return std::max(d_cate, d_tpl);
  });
  add_entry("lfa_chain", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    FGMParams p(3, r);
    Tensor f_loc = Tensor::randn({4, 3}, r);
    Tensor f_search = Tensor::randn({5, 3}, r);
    auto d_gate = check_op(s, unit53,
                           [](const Tensor& t) { return lfa_gate(t, 50.0, 0.5).first; });
    auto d_loc = check_op(s, randn43, [=](const Tensor& t) { return lfa(t, f_search, p); });
    auto d_search =
        check_op(s, randn53, [=](const Tensor& t) { return lfa(f_loc, t, p); });
    return std::max({d_gate, d_loc, d_search});
  });
  add_entry("modify_appearance", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    FGMParams p(4, r);
    Tensor f_n = Tensor::randn({5, 4}, r);
    return check_op(s, randn34,
                    [=](const Tensor& t) { return modify_appearance(t, f_n, p); });
  });
  add_entry("modify_action", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    FGMParams p(4, r);
    Tensor t0 = Tensor::randn({4, 4}, r);
    Tensor t1 = Tensor::randn({4, 4}, r);
    return check_op(s, randn34,
                    [=](const Tensor& t) { return modify_action(t, {t0, t1}, p); });
  });
  add_entry("full_head", [=](std::uint64_t s) {
    std::mt19937_64 r(s + 1);
    HeadParams p(4, r);
    ModifiedLangFeatures mod;
    mod.f_cate = Tensor::randn({2, 4}, r);
    mod.f_app_mod = Tensor::randn({2, 4}, r);
    mod.f_act_mod = Tensor::randn({2, 4}, r);
    mod.f_loc_mod = Tensor::randn({2, 4}, r);
    Box gt{10.0, 12.0, 14.0, 9.0};
    return check_op(
        s, [](std::mt19937_64& rr) { return Tensor::randn({16, 4}, rr, 0.5); },
        [=](const Tensor& t) {
          HeadMaps maps = predict(fuse(t, mod, p), p);
          return frame_loss(maps, gt, 32);
        });
  });
  return reg;
}

// Worst error over `n_seeds` randomized instances.
inline double grad_check_worst(const GradCheckEntry& entry, int n_seeds,
                               std::uint64_t base_seed = 1000) {
  double worst = 0.0;
  for (int i = 0; i < n_seeds; ++i) worst = std::max(worst, entry.run(base_seed + static_cast<std::uint64_t>(i)));
  return worst;
}

}  // namespace vltrack
