#include "vltrack/tracker.hpp"

#include <gtest/gtest.h>

#include <filesystem>

#include "vltrack/synthdata.hpp"

using namespace vltrack;
namespace fs = std::filesystem;

namespace {

// Tiny model over 32px search / 16px template crops; fast enough to run the
// full pipeline in unit tests.
ModelConfig tiny_model_cfg() {
  ModelConfig cfg;
  cfg.enc.channels = 8;
  cfg.enc.patch = 8;
  cfg.enc.search_size = 32;
  cfg.enc.template_size = 16;
  cfg.enc.depth = 1;
  cfg.enc.heads = 2;
  cfg.enc.lang_len = 4;
  cfg.enc.n_templates = 3;
  return cfg;
}

TrackerModel tiny_model(std::uint64_t seed = 7) {
  return TrackerModel(tiny_model_cfg(), Vocabulary::standard(), seed);
}

SequenceRecord tiny_sequence(std::uint64_t seed = 11, long frames = 24) {
  GenConfig g;
  g.frames = frames;
  g.occluder_prob = 0.0;
  return generate_sequence(g, seed);
}

}  // namespace

TEST(CropSearch, FullFrameCaseIsResize) {
  SequenceRecord rec = tiny_sequence();
  const Image& frame = rec.frames[0];
  // A box whose crop covers exactly the full frame at scale 1.
  Box centered{frame.w / 2.0 - 16.0, frame.h / 2.0 - 16.0, 32.0, 32.0};
  auto [patch, crop] = crop_search(frame, centered, frame.w / 32.0, frame.w);
  EXPECT_EQ(crop.scale, 1.0);
  EXPECT_EQ(patch, frame);
}

TEST(CropSearch, CropSideAndInversion) {
  Box box{40.0, 20.0, 18.0, 8.0};
  SequenceRecord rec = tiny_sequence();
  auto [patch, crop] = crop_search(rec.frames[0], box, 4.0, 32);
  EXPECT_DOUBLE_EQ(crop.scale * 32.0, 4.0 * std::sqrt(18.0 * 8.0));
  EXPECT_DOUBLE_EQ(crop.center_x, box.cx());
  EXPECT_DOUBLE_EQ(crop.center_y, box.cy());
  // Mapping a box into the crop and back is exact.
  Box round = crop.to_source(crop.to_crop(box));
  EXPECT_NEAR(round.x, box.x, 1e-12);
  EXPECT_NEAR(round.w, box.w, 1e-12);
  EXPECT_THROW(crop_search(rec.frames[0], box, 0.5, 32), std::invalid_argument);
}

TEST(Init, ReplicatesTemplatesAndCachesLanguage) {
  TrackerModel model = tiny_model();
  SequenceRecord rec = tiny_sequence();
  TrackerState state = init_tracker(model, rec.frames[0], rec.boxes[0], rec.attrs);
  ASSERT_EQ(state.templates.size(), 3u);
  EXPECT_EQ(state.templates[0], state.templates[1]);
  EXPECT_EQ(state.templates[1], state.templates[2]);
  EXPECT_EQ(state.prev_box, rec.boxes[0]);
  EXPECT_EQ(state.vl_state.frame_index, 0);

  // Language features encoded once: later frames reuse the same tensors.
  const auto cate_impl = state.lang.f_cate.impl;
  track_frame(model, state, rec.frames[1]);
  track_frame(model, state, rec.frames[2]);
  EXPECT_EQ(state.lang.f_cate.impl, cate_impl);
}

TEST(Init, DegenerateBoxIsContractError) {
  TrackerModel model = tiny_model();
  SequenceRecord rec = tiny_sequence();
  EXPECT_THROW(init_tracker(model, rec.frames[0], Box{10, 10, 1.0, 8.0}, rec.attrs),
               std::invalid_argument);
}

TEST(TrackFrame, DeterministicWithScoreInRange) {
  TrackerModel model = tiny_model();
  SequenceRecord rec = tiny_sequence();
  TrackerState a = init_tracker(model, rec.frames[0], rec.boxes[0], rec.attrs);
  TrackerState b = init_tracker(model, rec.frames[0], rec.boxes[0], rec.attrs);
  for (long f = 1; f < 6; ++f) {
    TrackResult ra = track_frame(model, a, rec.frames[static_cast<size_t>(f)]);
    TrackResult rb = track_frame(model, b, rec.frames[static_cast<size_t>(f)]);
    EXPECT_EQ(ra.box, rb.box);
    EXPECT_EQ(ra.score, rb.score);
    EXPECT_GT(ra.score, 0.0);
    EXPECT_LT(ra.score, 1.0);
  }
  EXPECT_EQ(a.vl_state.frame_index, 5);
}

TEST(TrackFrame, ReplayFromSavedStateIsIdentical) {
  TrackerModel model = tiny_model();
  SequenceRecord rec = tiny_sequence();
  TrackerState state = init_tracker(model, rec.frames[0], rec.boxes[0], rec.attrs);
  track_frame(model, state, rec.frames[1]);
  TrackerState saved = state;  // value semantics snapshot
  TrackResult r1 = track_frame(model, state, rec.frames[2]);
  TrackResult r2 = track_frame(model, saved, rec.frames[2]);
  EXPECT_EQ(r1.box, r2.box);
  EXPECT_EQ(r1.score, r2.score);
}

TEST(UpdateTemplates, GateAndOrdering) {
  TrackerModel model = tiny_model();
  SequenceRecord rec = tiny_sequence();
  TrackerState state = init_tracker(model, rec.frames[0], rec.boxes[0], rec.attrs);
  const Image init_tpl = state.templates.back();
  TrackerConfig tcfg;
  tcfg.update_interval = 1;  // eligible every frame

  // Below the gate: unchanged.
  std::vector<Image> before = state.templates;
  state.vl_state.frame_index = 1;
  update_templates(model, state, rec.frames[1], rec.boxes[1], 0.2, tcfg);
  EXPECT_EQ(state.templates, before);

  // Accepted: the newest slot holds the new crop, init stays pinned last.
  update_templates(model, state, rec.frames[1], rec.boxes[1], 0.9, tcfg);
  ASSERT_EQ(state.templates.size(), 3u);
  Image expect_new =
      crop_search(rec.frames[1], rec.boxes[1], tcfg.template_factor, 16).first;
  EXPECT_EQ(state.templates[0], expect_new);
  EXPECT_EQ(state.templates.back(), init_tpl);
}

TEST(UpdateTemplates, InitTemplateSurvivesLongRuns) {
  TrackerModel model = tiny_model();
  GenConfig g;
  g.frames = 60;
  g.occluder_prob = 0.0;
  SequenceRecord rec = generate_sequence(g, 3);
  TrackerState state = init_tracker(model, rec.frames[0], rec.boxes[0], rec.attrs);
  const Image init_tpl = state.templates.back();
  TrackerConfig tcfg;
  tcfg.update_threshold = 0.0;  // force frequent updates
  tcfg.update_interval = 5;
  for (size_t f = 1; f < rec.frames.size(); ++f) {
    track_frame(model, state, rec.frames[f], tcfg);
    ASSERT_EQ(state.templates.size(), 3u);
    EXPECT_EQ(state.templates.back(), init_tpl);
  }
  EXPECT_EQ(state.vl_state.frame_index, static_cast<long>(rec.frames.size()) - 1);
}

TEST(Model, NamedParamsAreUniqueAndCheckpointRoundTrips) {
  TrackerModel model = tiny_model(21);
  auto params = model.named_params();
  EXPECT_GT(params.size(), 40u);
  std::set<std::string> names;
  for (const auto& [name, t] : params) {
    EXPECT_TRUE(names.insert(name).second) << "duplicate " << name;
    EXPECT_TRUE(t.requires_grad()) << name;
  }

  const fs::path path = fs::temp_directory_path() / "vltrack_test_ckpt.bin";
  save_checkpoint(path.string(), model, {{"note", "unit"}});
  TrackerModel back = load_checkpoint(path.string());
  auto params2 = back.named_params();
  ASSERT_EQ(params.size(), params2.size());
  for (size_t i = 0; i < params.size(); ++i) {
    EXPECT_EQ(params[i].first, params2[i].first);
    EXPECT_EQ(params[i].second.values(), params2[i].second.values());
  }
  EXPECT_EQ(back.vocab.id_to_token, model.vocab.id_to_token);
  fs::remove(path);
}

TEST(Model, CheckpointRejectsGarbage) {
  const fs::path path = fs::temp_directory_path() / "vltrack_test_ckpt_bad.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << "definitely not a checkpoint";
  }
  EXPECT_THROW(load_checkpoint(path.string()), std::runtime_error);
  fs::remove(path);
}

TEST(Model, TokenSwitchOffMatchesNoTokenBaselineBitExactly) {
  ModelConfig cfg = tiny_model_cfg();
  cfg.sw.use_vl_token = false;
  TrackerModel off(cfg, Vocabulary::standard(), 31);

  SequenceRecord rec = tiny_sequence(13);
  TrackerState state = init_tracker(off, rec.frames[0], rec.boxes[0], rec.attrs);

  // Hand-composed no-token forward over the same weights.
  NoGradGuard ng;
  auto [patch, crop] = crop_search(rec.frames[0], rec.boxes[0], 4.0, 32);
  std::vector<Tensor> tpls;
  for (const Image& t : state.templates) tpls.push_back(image_to_tensor(t));
  VisFeatures vis = visual_forward(image_to_tensor(patch), tpls, std::nullopt, off.cfg.enc,
                                   off.visual);
  ModifiedLangFeatures mod = fgm_forward(state.lang, vis, off.fgm);
  HeadMaps maps = predict(fuse(vis.f_search, mod, off.head), off.head);

  FrameOutput out = off.forward_frame(state.lang, image_to_tensor(patch), tpls, state.vl_state);
  EXPECT_EQ(out.maps.center.values(), maps.center.values());
  EXPECT_EQ(out.maps.offset.values(), maps.offset.values());
  EXPECT_EQ(out.maps.size.values(), maps.size.values());
}

TEST(Model, DroppedAttributeEncodesAsAbsent) {
  ModelConfig cfg = tiny_model_cfg();
  cfg.sw.drop_attributes = {"app"};
  TrackerModel model(cfg, Vocabulary::standard(), 33);
  AttributePhrases attrs;
  attrs.category = {"circle"};
  attrs.appearance = Phrase{"red"};
  NoGradGuard ng;
  LangFeatures with_drop = model.encode_language(attrs);
  Tensor none_enc = encode_phrase(std::nullopt, model.vocab, model.cfg.enc, model.language);
  EXPECT_EQ(with_drop.f_app.values(), none_enc.values());
}

TEST(Model, TokenModeAttnDiffersFromConcat) {
  SequenceRecord rec = tiny_sequence(17);
  ModelConfig cfg = tiny_model_cfg();
  TrackerModel concat_model(cfg, Vocabulary::standard(), 41);
  cfg.sw.token_mode = "attn";
  TrackerModel attn_model(cfg, Vocabulary::standard(), 41);  // same seed, same weights

  NoGradGuard ng;
  TrackerState s1 = init_tracker(concat_model, rec.frames[0], rec.boxes[0], rec.attrs);
  auto [patch, crop] = crop_search(rec.frames[0], rec.boxes[0], 4.0, 32);
  std::vector<Tensor> tpls;
  for (const Image& t : s1.templates) tpls.push_back(image_to_tensor(t));
  FrameOutput a = concat_model.forward_frame(s1.lang, image_to_tensor(patch), tpls, s1.vl_state);
  FrameOutput b = attn_model.forward_frame(s1.lang, image_to_tensor(patch), tpls, s1.vl_state);
  EXPECT_NE(a.t_vl.values(), b.t_vl.values());
  // Concat mode keeps the rows verbatim.
  Tensor t_lang = build_language_token(a.mod);
  for (long j = 0; j < a.t_vl.cols(); ++j) EXPECT_DOUBLE_EQ(a.t_vl(0, j), t_lang(0, j));
}
