#pragma once

// The token pair [T_lang; T_vi] summarizing the previous frame's modified
// language features and global visual state. The pair is injected into the
// next frame's visual encoding; propagation detaches it, so gradients never
// cross frame boundaries.

#include "vltrack/fgm.hpp"
#include "vltrack/tensor.hpp"

namespace vltrack {

struct VLTokenState {
  Tensor tokens;        // [2 x C] (or fewer rows under ablations)
  long frame_index = 0;
};

// Mean over all 4L rows of the concatenated modified language features.
inline Tensor build_language_token(const ModifiedLangFeatures& mod) {
  return mean_rows(concat_rows({mod.f_cate, mod.f_app_mod, mod.f_act_mod, mod.f_loc_mod}));
}

// Token-axis concatenation, language token first. No mixing.
inline Tensor build_vl_token(const Tensor& t_lang, const Tensor& t_vi) {
  check(t_lang.ndim() == 2 && t_vi.ndim() == 2 && t_lang.rows() == 1 && t_vi.rows() == 1 &&
            t_lang.cols() == t_vi.cols(),
        "build_vl_token: expected two [1 x C] tokens");
  return concat_rows({t_lang, t_vi});
}

// Frame 0 carries the learned initial pair (live, so it receives gradient).
inline VLTokenState initial_state(const Tensor& learned_init) {
  return {learned_init, 0};
}

// Carry this frame's pair into the next frame, truncating the tape.
inline VLTokenState advance(const VLTokenState& state, const Tensor& t_vl) {
  return {t_vl.detach(), state.frame_index + 1};
}

}  // namespace vltrack
