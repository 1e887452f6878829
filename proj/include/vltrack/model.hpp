#pragma once

// The full tracker model: visual/language encoders, fine-grained modulation,
// token propagation and prediction head, with every ablation switch of the
// experiment harness, plus a versioned binary checkpoint container.

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vltrack/encoder.hpp"
#include "vltrack/fgm.hpp"
#include "vltrack/head.hpp"
#include "vltrack/vl_token.hpp"

namespace vltrack {

struct AblationSwitches {
  bool use_fgm = true;
  bool use_vfm = true;
  bool use_lfa = true;
  bool use_vl_token = true;
  std::string token_mode = "concat";    // concat | attn
  std::string vl_token_parts = "both";  // both | lang | vi
  std::vector<std::string> drop_attributes;  // subset of {cate, app, act, loc}

  bool dropped(const std::string& a) const {
    return std::find(drop_attributes.begin(), drop_attributes.end(), a) !=
           drop_attributes.end();
  }
  void validate() const {
    check(token_mode == "concat" || token_mode == "attn",
          "switches: token_mode must be concat or attn");
    check(vl_token_parts == "both" || vl_token_parts == "lang" || vl_token_parts == "vi",
          "switches: vl_token_parts must be both, lang or vi");
    for (const auto& a : drop_attributes)
      check(a == "cate" || a == "app" || a == "act" || a == "loc",
            "switches: unknown attribute to drop: " + a);
  }
};

struct ModelConfig {
  EncoderConfig enc;
  double alpha = 50.0;
  double phi = 0.5;
  LossWeights loss;
  AblationSwitches sw;

  void validate() const {
    enc.validate();
    sw.validate();
    check(alpha > 0.0 && phi >= 0.0, "model config: alpha must be > 0 and phi >= 0");
  }
};

inline nlohmann::json model_config_to_json(const ModelConfig& m) {
  nlohmann::json j;
  j["channels"] = m.enc.channels;
  j["patch"] = m.enc.patch;
  j["search_size"] = m.enc.search_size;
  j["template_size"] = m.enc.template_size;
  j["depth"] = m.enc.depth;
  j["heads"] = m.enc.heads;
  j["lang_len"] = m.enc.lang_len;
  j["n_templates"] = m.enc.n_templates;
  j["alpha"] = m.alpha;
  j["phi"] = m.phi;
  j["lambda1"] = m.loss.lambda1;
  j["lambda2"] = m.loss.lambda2;
  j["use_fgm"] = m.sw.use_fgm;
  j["use_vfm"] = m.sw.use_vfm;
  j["use_lfa"] = m.sw.use_lfa;
  j["use_vl_token"] = m.sw.use_vl_token;
  j["token_mode"] = m.sw.token_mode;
  j["vl_token_parts"] = m.sw.vl_token_parts;
  j["drop_attributes"] = m.sw.drop_attributes;
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.enc.channels = j.at("channels").get<long>();
  m.enc.patch = j.at("patch").get<long>();
  m.enc.search_size = j.at("search_size").get<long>();
  m.enc.template_size = j.at("template_size").get<long>();
  m.enc.depth = j.at("depth").get<long>();
  m.enc.heads = j.at("heads").get<long>();
  m.enc.lang_len = j.at("lang_len").get<long>();
  m.enc.n_templates = j.at("n_templates").get<long>();
  m.alpha = j.at("alpha").get<double>();
  m.phi = j.at("phi").get<double>();
  m.loss.lambda1 = j.at("lambda1").get<double>();
  m.loss.lambda2 = j.at("lambda2").get<double>();
  m.sw.use_fgm = j.at("use_fgm").get<bool>();
  m.sw.use_vfm = j.at("use_vfm").get<bool>();
  m.sw.use_lfa = j.at("use_lfa").get<bool>();
  m.sw.use_vl_token = j.at("use_vl_token").get<bool>();
  m.sw.token_mode = j.at("token_mode").get<std::string>();
  m.sw.vl_token_parts = j.at("vl_token_parts").get<std::string>();
  m.sw.drop_attributes = j.at("drop_attributes").get<std::vector<std::string>>();
  return m;
}

struct FrameOutput {
  VisFeatures vis;
  ModifiedLangFeatures mod;
  Tensor fused;   // [N_s x C]
  HeadMaps maps;
  Tensor t_vl;    // [2 x C] pair built this frame
};

class TrackerModel {
 public:
  ModelConfig cfg;
  Vocabulary vocab;
  VisualEncoderParams visual;
  LanguageEncoderParams language;
  FGMParams fgm;
  HeadParams head;
  CrossAttnParams coarse;       // modulation-off ablation path
  CrossAttnParams token_mixer;  // token_mode == attn
  Tensor vl_init;               // [2 x C] learned frame-0 token pair

  TrackerModel(ModelConfig config, Vocabulary vocabulary, std::uint64_t seed)
      : cfg(std::move(config)), vocab(std::move(vocabulary)) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    visual = VisualEncoderParams(cfg.enc, rng);
    language = LanguageEncoderParams(cfg.enc, vocab.size(), rng);
    fgm = FGMParams(cfg.enc.channels, rng);
    fgm.alpha = cfg.alpha;
    fgm.phi = cfg.phi;
    head = HeadParams(cfg.enc.channels, rng);
    coarse = CrossAttnParams(cfg.enc.channels, rng);
    token_mixer = CrossAttnParams(cfg.enc.channels, rng);
    vl_init = Tensor::randn({2, cfg.enc.channels}, rng, 0.02, true);
  }

  void visit(const ParamVisitor& fn) {
    visual.visit("visual", fn);
    language.visit("language", fn);
    fgm.visit("fgm", fn);
    head.visit("head", fn);
    coarse.visit("coarse", fn);
    token_mixer.visit("token_mixer", fn);
    fn("vl_init", vl_init);
  }

  std::vector<std::pair<std::string, Tensor>> named_params() {
    std::vector<std::pair<std::string, Tensor>> out;
    visit([&](const std::string& name, Tensor& t) {
      if (t.defined()) out.emplace_back(name, t);
    });
    return out;
  }

  void zero_grad() {
    visit([](const std::string&, Tensor& t) {
      if (t.defined()) t.zero_grad();
    });
  }

  // Attribute encodings, honoring dropped attributes (a dropped attribute is
  // encoded like an absent one).
  LangFeatures encode_language(const AttributePhrases& attrs) const {
    AttributePhrases a = attrs;
    std::optional<Phrase> cate = a.category;
    if (cfg.sw.dropped("cate")) cate = std::nullopt;
    if (cfg.sw.dropped("app")) a.appearance = std::nullopt;
    if (cfg.sw.dropped("act")) a.action = std::nullopt;
    if (cfg.sw.dropped("loc")) a.location = std::nullopt;
    LangFeatures out;
    out.f_cate = encode_phrase(cate, vocab, cfg.enc, language);
    out.f_app = encode_phrase(a.appearance, vocab, cfg.enc, language);
    out.f_act = encode_phrase(a.action, vocab, cfg.enc, language);
    out.f_loc = encode_phrase(a.location, vocab, cfg.enc, language);
    return out;
  }

  // Rows of the stored pair actually injected into the visual stream.
  std::optional<Tensor> injected_tokens(const VLTokenState& state) const {
    if (!cfg.sw.use_vl_token) return std::nullopt;
    if (cfg.sw.vl_token_parts == "lang") return slice_rows(state.tokens, 0, 1);
    if (cfg.sw.vl_token_parts == "vi") return slice_rows(state.tokens, 1, 2);
    return state.tokens;
  }

  FrameOutput forward_frame(const LangFeatures& lang, const Tensor& search,
                            const std::vector<Tensor>& templates,
                            const VLTokenState& vl_state) const {
    FrameOutput out;
    out.vis = visual_forward(search, templates, injected_tokens(vl_state), cfg.enc, visual);
    if (cfg.sw.use_fgm) {
      FgmSwitches fsw;
      fsw.use_vfm = cfg.sw.use_vfm;
      fsw.use_lfa = cfg.sw.use_lfa;
      out.mod = fgm_forward(lang, out.vis, fgm, fsw);
    } else {
      out.mod = coarse_modulate(lang, out.vis, coarse);
    }
    out.fused = fuse(out.vis.f_search, out.mod, head);
    out.maps = predict(out.fused, head);
    Tensor pair = build_vl_token(build_language_token(out.mod), out.vis.t_vi);
    if (cfg.sw.token_mode == "attn") pair = cross_attend(pair, pair, token_mixer);
    out.t_vl = pair;
    return out;
  }
};

// ---------------------------------------------------------------------------
// Checkpoint container: magic + version, a JSON metadata blob (model config,
// vocabulary, caller extras), then named tensors. Keys are the visit() names
// plus optimizer state under "opt.".

namespace detail {

constexpr char kCheckpointMagic[8] = {'V', 'L', 'T', 'K', '0', '0', '0', '1'};

inline void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), 8);
}
inline std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

}  // namespace detail

inline void save_tensors(const std::string& path, const nlohmann::json& meta,
                         const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(detail::kCheckpointMagic, 8);
  const std::string meta_s = meta.dump();
  detail::write_u64(out, meta_s.size());
  out.write(meta_s.data(), static_cast<std::streamsize>(meta_s.size()));
  detail::write_u64(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    detail::write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u64(out, t.shape().size());
    for (long d : t.shape()) detail::write_u64(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.values().size() * sizeof(double)));
  }
}

struct LoadedCheckpoint {
  nlohmann::json meta;
  std::map<std::string, Tensor> tensors;
};

inline LoadedCheckpoint load_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic/version): " + path);
  LoadedCheckpoint ck;
  const std::uint64_t meta_len = detail::read_u64(in);
  std::string meta_s(meta_len, '\0');
  in.read(meta_s.data(), static_cast<std::streamsize>(meta_len));
  ck.meta = nlohmann::json::parse(meta_s);
  const std::uint64_t count = detail::read_u64(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = detail::read_u64(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const std::uint64_t ndim = detail::read_u64(in);
    Shape shape(ndim);
    for (auto& d : shape) d = static_cast<long>(detail::read_u64(in));
    std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    ck.tensors.emplace(name, Tensor::from(shape, std::move(data)));
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, TrackerModel& model,
                            const nlohmann::json& extra = nlohmann::json::object(),
                            const std::vector<std::pair<std::string, Tensor>>& opt_state = {}) {
  nlohmann::json meta;
  meta["format"] = 1;
  meta["model"] = model_config_to_json(model.cfg);
  meta["vocab"] = model.vocab.id_to_token;
  meta["extra"] = extra;
  std::vector<std::pair<std::string, Tensor>> tensors = model.named_params();
  for (const auto& kv : opt_state) tensors.push_back(kv);
  save_tensors(path, meta, tensors);
}

inline TrackerModel load_checkpoint(const std::string& path,
                                    LoadedCheckpoint* raw_out = nullptr) {
  LoadedCheckpoint ck = load_tensors(path);
  ModelConfig cfg = model_config_from_json(ck.meta.at("model"));
  Vocabulary vocab;
  vocab.id_to_token.clear();
  vocab.token_to_id.clear();
  for (const auto& tok : ck.meta.at("vocab")) vocab.add(tok.get<std::string>());
  TrackerModel model(cfg, vocab, /*seed=*/0);
  model.visit([&](const std::string& name, Tensor& t) {
    if (!t.defined()) return;
    auto it = ck.tensors.find(name);
    check(it != ck.tensors.end(), "checkpoint missing tensor: " + name);
    check(it->second.shape() == t.shape(), "checkpoint shape mismatch for " + name);
    t.raw() = it->second.values();
  });
  if (raw_out) *raw_out = std::move(ck);
  return model;
}

}  // namespace vltrack
