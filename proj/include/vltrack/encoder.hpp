#pragma once

// Toy transformer backbones. The visual encoder consumes the search crop, the
// template sequence and (from the second frame on) the propagated token pair
// in one joint token stream; the language encoder encodes each attribute
// phrase independently with shared weights.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vltrack/lang.hpp"
#include "vltrack/tensor.hpp"

namespace vltrack {

struct EncoderConfig {
  long channels = 64;      // C
  long patch = 8;          // p
  long search_size = 128;  // H_x
  long template_size = 64; // H_z
  long depth = 4;
  long heads = 4;
  long lang_len = 8;       // L, tokens per attribute
  long n_templates = 3;    // newest-first, init pinned last
  bool record_attention = false;

  long search_tokens() const { return (search_size / patch) * (search_size / patch); }
  long template_tokens() const {
    return (template_size / patch) * (template_size / patch);
  }
  long grid() const { return search_size / patch; }

  void validate() const {
    check(channels > 0 && heads > 0 && channels % heads == 0,
          "encoder config: channels must be divisible by heads");
    check(patch > 0 && search_size % patch == 0 && template_size % patch == 0,
          "encoder config: image sides must be divisible by the patch size");
    check(n_templates >= 2, "encoder config: need init plus at least one dynamic template");
    check(lang_len >= 1 && depth >= 0, "encoder config: bad depth or language length");
  }
};

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

// ---------------------------------------------------------------------------
// Transformer trunk

struct AttnBlockParams {
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // [1 x C]
  Linear wq, wk, wv, wo;                          // C -> C
  Linear mlp_in, mlp_out;                         // C -> 4C -> C

  AttnBlockParams() = default;
  AttnBlockParams(long c, std::mt19937_64& rng)
      : ln1_gain(Tensor::full({1, c}, 1.0, true)),
        ln1_bias(Tensor::zeros({1, c}, true)),
        ln2_gain(Tensor::full({1, c}, 1.0, true)),
        ln2_bias(Tensor::zeros({1, c}, true)),
        wq(c, c, rng),
        wk(c, c, rng),
        wv(c, c, rng),
        wo(c, c, rng),
        mlp_in(c, 4 * c, rng),
        mlp_out(4 * c, c, rng) {}

  void visit(const std::string& p, const ParamVisitor& fn) {
    fn(p + ".ln1.gain", ln1_gain);
    fn(p + ".ln1.bias", ln1_bias);
    fn(p + ".ln2.gain", ln2_gain);
    fn(p + ".ln2.bias", ln2_bias);
    fn(p + ".wq.weight", wq.weight);
    fn(p + ".wq.bias", wq.bias);
    fn(p + ".wk.weight", wk.weight);
    fn(p + ".wk.bias", wk.bias);
    fn(p + ".wv.weight", wv.weight);
    fn(p + ".wv.bias", wv.bias);
    fn(p + ".wo.weight", wo.weight);
    fn(p + ".wo.bias", wo.bias);
    fn(p + ".mlp_in.weight", mlp_in.weight);
    fn(p + ".mlp_in.bias", mlp_in.bias);
    fn(p + ".mlp_out.weight", mlp_out.weight);
    fn(p + ".mlp_out.bias", mlp_out.bias);
  }
};

struct EncoderParams {
  std::vector<AttnBlockParams> blocks;

  EncoderParams() = default;
  EncoderParams(long c, long depth, std::mt19937_64& rng) {
    blocks.reserve(static_cast<size_t>(depth));
    for (long i = 0; i < depth; ++i) blocks.emplace_back(c, rng);
  }

  void visit(const std::string& p, const ParamVisitor& fn) {
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].visit(p + ".block" + std::to_string(i), fn);
  }
};

// Pre-norm block: x += MHA(LN(x)); x += MLP(LN(x)). When `records` is given,
// the head-averaged attention probabilities of every layer are appended.
inline Tensor transformer_forward(Tensor x, const EncoderParams& params, long heads,
                                  std::vector<Tensor>* records = nullptr) {
  const long t = x.rows(), c = x.cols();
  check(c % heads == 0, "transformer: channels not divisible by heads");
  const long dh = c / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const AttnBlockParams& blk : params.blocks) {
    Tensor h = layer_norm_rows(x, blk.ln1_gain, blk.ln1_bias);
    Tensor q = blk.wq(h), k = blk.wk(h), v = blk.wv(h);
    std::vector<Tensor> head_out;
    head_out.reserve(static_cast<size_t>(heads));
    std::vector<double> avg_probs;
    if (records) avg_probs.assign(static_cast<size_t>(t * t), 0.0);
    for (long hd = 0; hd < heads; ++hd) {
      Tensor qi = slice_cols(q, hd * dh, (hd + 1) * dh);
      Tensor ki = slice_cols(k, hd * dh, (hd + 1) * dh);
      Tensor vi = slice_cols(v, hd * dh, (hd + 1) * dh);
      Tensor probs = softmax_rows(matmul_scaled(qi, transpose(ki), scale));
      if (records) {
        const double w = 1.0 / static_cast<double>(heads);
        for (size_t i = 0; i < avg_probs.size(); ++i)
          avg_probs[i] += w * probs[static_cast<long>(i)];
      }
      head_out.push_back(matmul(probs, vi));
    }
    if (records) records->push_back(Tensor::from({t, t}, std::move(avg_probs)));
    x = add(x, blk.wo(concat_cols(head_out)));
    Tensor h2 = layer_norm_rows(x, blk.ln2_gain, blk.ln2_bias);
    x = add(x, blk.mlp_out(gelu(blk.mlp_in(h2))));
  }
  return x;
}

// ---------------------------------------------------------------------------
// Visual encoder

struct VisFeatures {
  Tensor f_search;                  // [N_s x C]
  std::vector<Tensor> f_templates;  // newest-first, each [N_t x C]
  Tensor t_vi;                      // [1 x C], cls output
  std::vector<Tensor> attn_records; // per layer, head-averaged [T x T]
};

struct VisualEncoderParams {
  Linear patch_proj;     // 3p^2 -> C
  Tensor cls;            // [1 x C], learned summary token
  Tensor pos_search;     // [N_s x C]
  Tensor pos_template;   // [N_t x C], shared across slots
  Tensor slot_template;  // [n_templates x C], one row per slot
  Tensor pos_vl;         // [2 x C]
  EncoderParams trunk;

  VisualEncoderParams() = default;
  VisualEncoderParams(const EncoderConfig& cfg, std::mt19937_64& rng)
      : patch_proj(3 * cfg.patch * cfg.patch, cfg.channels, rng),
        cls(Tensor::randn({1, cfg.channels}, rng, 0.02, true)),
        pos_search(Tensor::randn({cfg.search_tokens(), cfg.channels}, rng, 0.02, true)),
        pos_template(Tensor::randn({cfg.template_tokens(), cfg.channels}, rng, 0.02, true)),
        slot_template(Tensor::randn({cfg.n_templates, cfg.channels}, rng, 0.02, true)),
        pos_vl(Tensor::randn({2, cfg.channels}, rng, 0.02, true)),
        trunk(cfg.channels, cfg.depth, rng) {}

  void visit(const std::string& p, const ParamVisitor& fn) {
    fn(p + ".patch_proj.weight", patch_proj.weight);
    fn(p + ".patch_proj.bias", patch_proj.bias);
    fn(p + ".cls", cls);
    fn(p + ".pos_search", pos_search);
    fn(p + ".pos_template", pos_template);
    fn(p + ".slot_template", slot_template);
    fn(p + ".pos_vl", pos_vl);
    trunk.visit(p + ".trunk", fn);
  }
};

// Patch embedding without the positional term: one output row per p x p x 3
// patch in row-major patch order.
inline Tensor patchify_embed(const Tensor& image, long patch, const Linear& proj) {
  return proj(extract_patches(image, patch));
}

// Joint one-stream encoding. Token layout: [cls | vl tokens | search tokens |
// template tokens, newest first]. The injected vl rows participate in
// attention but are excluded from every output slice.
inline VisFeatures visual_forward(const Tensor& search, const std::vector<Tensor>& templates,
                                  const std::optional<Tensor>& vl_tokens,
                                  const EncoderConfig& cfg, const VisualEncoderParams& params) {
  cfg.validate();
  check(static_cast<long>(templates.size()) == cfg.n_templates,
        "visual_forward: expected " + std::to_string(cfg.n_templates) + " templates, got " +
            std::to_string(templates.size()));
  const long n_s = cfg.search_tokens(), n_t = cfg.template_tokens();

  std::vector<Tensor> seq;
  seq.push_back(params.cls);
  long n_vl = 0;
  if (vl_tokens.has_value()) {
    n_vl = vl_tokens->rows();
    check(n_vl >= 1 && n_vl <= 2 && vl_tokens->cols() == cfg.channels,
          "visual_forward: vl tokens must be [1..2 x C]");
    seq.push_back(add(*vl_tokens, slice_rows(params.pos_vl, 0, n_vl)));
  }
  seq.push_back(add(patchify_embed(search, cfg.patch, params.patch_proj), params.pos_search));
  for (long i = 0; i < cfg.n_templates; ++i) {
    Tensor emb = add(patchify_embed(templates[static_cast<size_t>(i)], cfg.patch,
                                    params.patch_proj),
                     params.pos_template);
    seq.push_back(add_rowvec(emb, slice_rows(params.slot_template, i, i + 1)));
  }

  Tensor tokens = concat_rows(seq);
  VisFeatures out;
  Tensor y = transformer_forward(tokens, params.trunk, cfg.heads,
                                 cfg.record_attention ? &out.attn_records : nullptr);

  out.t_vi = slice_rows(y, 0, 1);
  const long search_begin = 1 + n_vl;
  out.f_search = slice_rows(y, search_begin, search_begin + n_s);
  long off = search_begin + n_s;
  for (long i = 0; i < cfg.n_templates; ++i) {
    out.f_templates.push_back(slice_rows(y, off, off + n_t));
    off += n_t;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Language encoder

struct LangFeatures {
  Tensor f_cate, f_app, f_act, f_loc;  // each [L x C]
};

struct LanguageEncoderParams {
  Tensor embedding;  // [V x C]
  Tensor pos;        // [L x C]
  EncoderParams trunk;

  LanguageEncoderParams() = default;
  LanguageEncoderParams(const EncoderConfig& cfg, long vocab_size, std::mt19937_64& rng)
      : embedding(Tensor::randn({vocab_size, cfg.channels}, rng, 0.02, true)),
        pos(Tensor::randn({cfg.lang_len, cfg.channels}, rng, 0.02, true)),
        trunk(cfg.channels, cfg.depth, rng) {}

  void visit(const std::string& p, const ParamVisitor& fn) {
    fn(p + ".embedding", embedding);
    fn(p + ".pos", pos);
    trunk.visit(p + ".trunk", fn);
  }
};

inline Tensor encode_phrase(const std::optional<Phrase>& phrase, const Vocabulary& vocab,
                            const EncoderConfig& cfg, const LanguageEncoderParams& params) {
  const std::vector<long> ids = tokenize(phrase, vocab, cfg.lang_len);
  Tensor x = add(embedding_lookup(params.embedding, ids), params.pos);
  return transformer_forward(x, params.trunk, cfg.heads);
}

// One feature matrix per attribute; weights are shared and no slot
// conditioning is applied, so identical phrases encode identically.
inline LangFeatures language_forward(const AttributePhrases& phrases, const Vocabulary& vocab,
                                     const EncoderConfig& cfg,
                                     const LanguageEncoderParams& params) {
  LangFeatures out;
  out.f_cate = encode_phrase(phrases.category, vocab, cfg, params);
  out.f_app = encode_phrase(phrases.appearance, vocab, cfg, params);
  out.f_act = encode_phrase(phrases.action, vocab, cfg, params);
  out.f_loc = encode_phrase(phrases.location, vocab, cfg, params);
  return out;
}

}  // namespace vltrack
