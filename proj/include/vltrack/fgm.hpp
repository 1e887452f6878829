#pragma once

// Fine-grained modulation of attribute language features. Each attribute is
// refined against the visual input whose temporal/spatial scale matches it:
// appearance against the newest (background-suppressed) template, action
// against the whole template sequence, location against the search region
// through a gated similarity.

#include <optional>
#include <string>
#include <vector>

#include "vltrack/encoder.hpp"
#include "vltrack/tensor.hpp"

namespace vltrack {

// Single-head residual cross-attention, bias-free so zero-valued keys and
// values leave the query stream untouched.
struct CrossAttnParams {
  Linear wq, wk, wv, wo;

  CrossAttnParams() = default;
  CrossAttnParams(long c, std::mt19937_64& rng)
      : wq(c, c, rng, false), wk(c, c, rng, false), wv(c, c, rng, false),
        wo(c, c, rng, false) {}

  void visit(const std::string& p, const ParamVisitor& fn) {
    fn(p + ".wq.weight", wq.weight);
    fn(p + ".wk.weight", wk.weight);
    fn(p + ".wv.weight", wv.weight);
    fn(p + ".wo.weight", wo.weight);
  }
};

inline Tensor cross_attend(const Tensor& x, const Tensor& kv, const CrossAttnParams& p) {
  return add(x, p.wo(scaled_dot_attention(p.wq(x), p.wk(kv), p.wv(kv))));
}

struct FGMParams {
  Linear delta_t, delta_c;  // template / category projections to a shared dim
  Linear delta_imp;         // category token importance, C -> 1
  Linear delta_l, delta_s;  // location / search projections
  Linear delta_v;           // search value projection, C -> C
  double alpha = 50.0;      // gate sharpness
  double phi = 0.5;         // std weight in the gate threshold
  CrossAttnParams app_attn, act_attn;

  FGMParams() = default;
  FGMParams(long c, std::mt19937_64& rng, long proj_dim = 0)
      : delta_t(c, proj_dim > 0 ? proj_dim : c, rng),
        delta_c(c, proj_dim > 0 ? proj_dim : c, rng),
        delta_imp(c, 1, rng),
        delta_l(c, proj_dim > 0 ? proj_dim : c, rng),
        delta_s(c, proj_dim > 0 ? proj_dim : c, rng),
        delta_v(c, c, rng),
        app_attn(c, rng),
        act_attn(c, rng) {}

  void visit(const std::string& p, const ParamVisitor& fn) {
    fn(p + ".delta_t.weight", delta_t.weight);
    fn(p + ".delta_t.bias", delta_t.bias);
    fn(p + ".delta_c.weight", delta_c.weight);
    fn(p + ".delta_c.bias", delta_c.bias);
    fn(p + ".delta_imp.weight", delta_imp.weight);
    fn(p + ".delta_imp.bias", delta_imp.bias);
    fn(p + ".delta_l.weight", delta_l.weight);
    fn(p + ".delta_l.bias", delta_l.bias);
    fn(p + ".delta_s.weight", delta_s.weight);
    fn(p + ".delta_s.bias", delta_s.bias);
    fn(p + ".delta_v.weight", delta_v.weight);
    fn(p + ".delta_v.bias", delta_v.bias);
    app_attn.visit(p + ".app_attn", fn);
    act_attn.visit(p + ".act_attn", fn);
  }
};

struct ModifiedLangFeatures {
  Tensor f_cate;      // passed through untouched
  Tensor f_app_mod;
  Tensor f_act_mod;
  Tensor f_loc_mod;
  Tensor m_t;         // [N_t] target map of the newest template
};

struct VfmResult {
  Tensor f_n_mod;  // [N_t x C]
  Tensor m_t;      // [N_t], max-normalized to [0, 1]
  Tensor m_sim;    // [N_t x L]; each category token's column is a distribution
};

// Category-conditioned suppression of background tokens in the newest
// template. Per category token the similarity over template tokens is a
// softmax distribution; mixing those distributions with the category-token
// importance weights and max-normalizing gives the target map.
inline VfmResult vfm(const Tensor& f_cate, const Tensor& f_n, const FGMParams& params) {
  check(f_cate.ndim() == 2 && f_cate.rows() >= 1, "vfm: category features must be [L x C], L >= 1");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(params.delta_t.out_dim()));
  Tensor a = params.delta_t(f_n);     // [N_t x d]
  Tensor b = params.delta_c(f_cate);  // [L x d]
  // Rows of `sim` (one per category token) are softmax distributions over
  // template tokens.
  Tensor sim = softmax_rows(matmul_scaled(b, transpose(a), inv_sqrt_d));  // [L x N_t]
  Tensor imp = softmax_rows(transpose(params.delta_imp(f_cate)));              // [1 x L]
  Tensor m_raw = matmul(imp, sim);                                             // [1 x N_t]
  Tensor m_t = reshape(div_by(m_raw, max_all(m_raw)), {f_n.rows()});
  VfmResult out;
  out.f_n_mod = scale_rows(f_n, m_t);
  out.m_t = m_t;
  out.m_sim = transpose(sim);
  return out;
}

inline Tensor modify_appearance(const Tensor& f_app, const Tensor& f_n_mod,
                                const FGMParams& params) {
  return cross_attend(f_app, f_n_mod, params.app_attn);
}

inline Tensor modify_action(const Tensor& f_act, const std::vector<Tensor>& f_templates,
                            const FGMParams& params) {
  check(!f_templates.empty(), "modify_action: template feature list is empty");
  return cross_attend(f_act, concat_rows(f_templates), params.act_attn);
}

// Column-wise gate of a similarity matrix. theta_j is the median plus
// phi * population-std of column j; entries below it are squashed toward 0.
inline std::pair<Tensor, Tensor> lfa_gate(const Tensor& m_sim, double alpha, double phi) {
  check(alpha > 0.0, "lfa_gate: alpha must be positive");
  Tensor theta = add(columns_median(m_sim), mul_scalar(columns_std(m_sim), phi));  // [1 x N_s]
  Tensor g = sigmoid(mul_scalar(sub_rowvec(m_sim, theta), alpha));
  return {g, reshape(theta, {m_sim.cols()})};
}

// Gated aggregation of projected search features into the location feature.
inline Tensor lfa(const Tensor& f_loc, const Tensor& f_search, const FGMParams& params) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(params.delta_l.out_dim()));
  Tensor q = params.delta_l(f_loc);     // [L x d]
  Tensor k = params.delta_s(f_search);  // [N_s x d]
  Tensor m_sim = softmax_rows(matmul_scaled(q, transpose(k), inv_sqrt_d));  // [L x N_s]
  auto [g, theta] = lfa_gate(m_sim, params.alpha, params.phi);
  Tensor m = mul(m_sim, g);
  return add(matmul(m, params.delta_v(f_search)), f_loc);
}

struct FgmSwitches {
  bool use_vfm = true;
  bool use_lfa = true;
};

// Full modulation pass. Category features pass through untouched; appearance
// sees the newest template (optionally VFM-suppressed), action sees the whole
// template sequence, location sees the search features (optionally gated).
inline ModifiedLangFeatures fgm_forward(const LangFeatures& lang, const VisFeatures& vis,
                                        const FGMParams& params,
                                        const FgmSwitches& sw = FgmSwitches{}) {
  check(!vis.f_templates.empty(), "fgm_forward: no template features");
  ModifiedLangFeatures out;
  out.f_cate = lang.f_cate;

  Tensor newest = vis.f_templates.front();
  if (sw.use_vfm) {
    VfmResult v = vfm(lang.f_cate, newest, params);
    out.m_t = v.m_t;
    out.f_app_mod = modify_appearance(lang.f_app, v.f_n_mod, params);
  } else {
    out.m_t = Tensor::full({newest.rows()}, 1.0);
    out.f_app_mod = modify_appearance(lang.f_app, newest, params);
  }

  out.f_act_mod = modify_action(lang.f_act, vis.f_templates, params);

  if (sw.use_lfa) {
    out.f_loc_mod = lfa(lang.f_loc, vis.f_search, params);
  } else {
    // Plain cross attention with the same projections, gate left open.
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(params.delta_l.out_dim()));
    Tensor q = params.delta_l(lang.f_loc);
    Tensor k = params.delta_s(vis.f_search);
    Tensor m_sim = softmax_rows(matmul_scaled(q, transpose(k), inv_sqrt_d));
    out.f_loc_mod = add(matmul(m_sim, params.delta_v(vis.f_search)), lang.f_loc);
  }
  return out;
}

// Coarse one-shot variant: the four attribute features are modified jointly
// by cross attention over the concatenated visual features. Used by the
// modulation-off ablation.
inline ModifiedLangFeatures coarse_modulate(const LangFeatures& lang, const VisFeatures& vis,
                                            const CrossAttnParams& attn) {
  const long l = lang.f_cate.rows();
  std::vector<Tensor> vis_all{vis.f_search};
  for (const Tensor& t : vis.f_templates) vis_all.push_back(t);
  Tensor joined = concat_rows({lang.f_cate, lang.f_app, lang.f_act, lang.f_loc});
  Tensor mod = cross_attend(joined, concat_rows(vis_all), attn);
  ModifiedLangFeatures out;
  out.f_cate = slice_rows(mod, 0, l);
  out.f_app_mod = slice_rows(mod, l, 2 * l);
  out.f_act_mod = slice_rows(mod, 2 * l, 3 * l);
  out.f_loc_mod = slice_rows(mod, 3 * l, 4 * l);
  out.m_t = Tensor::full({vis.f_templates.front().rows()}, 1.0);
  return out;
}

}  // namespace vltrack
