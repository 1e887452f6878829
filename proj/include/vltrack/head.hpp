#pragma once

// Language-conditioned fusion, the center/offset/size prediction head, box
// encoding/decoding against the search crop, and the training losses.

#include <cmath>
#include <utility>
#include <vector>

#include "vltrack/box.hpp"
#include "vltrack/fgm.hpp"
#include "vltrack/tensor.hpp"

namespace vltrack {

struct HeadMaps {
  Tensor center;  // [g x g], values in (0, 1)
  Tensor offset;  // [2 x g x g]; channel 0 = x, channel 1 = y
  Tensor size;    // [2 x g x g]; channel 0 = w, channel 1 = h
};

struct LossWeights {
  double lambda1 = 5.0;  // L1 term
  double lambda2 = 2.0;  // GIoU term
};

struct HeadParams {
  CrossAttnParams fuse_attn;
  Tensor norm_gain, norm_bias;   // layer norm on the fused grid features
  Linear center_in, center_out;  // 9C -> C, 9C -> 1
  Linear offset_in, offset_out;  // 9C -> C, 9C -> 2
  Linear size_in, size_out;      // 9C -> C, 9C -> 2

  HeadParams() = default;
  HeadParams(long c, std::mt19937_64& rng)
      : fuse_attn(c, rng),
        norm_gain(Tensor::full({1, c}, 1.0, true)),
        norm_bias(Tensor::zeros({1, c}, true)),
        center_in(9 * c, c, rng),
        center_out(9 * c, 1, rng),
        offset_in(9 * c, c, rng),
        offset_out(9 * c, 2, rng),
        size_in(9 * c, c, rng),
        size_out(9 * c, 2, rng) {
    // Focal prior: start the center map near 0.01 so the (rare) positives
    // dominate the early gradient; start sizes near 0.25 of the crop.
    center_out.bias.raw()[0] = -4.59;
    size_out.bias.raw()[0] = -1.1;
    size_out.bias.raw()[1] = -1.1;
  }

  void visit(const std::string& p, const ParamVisitor& fn) {
    fuse_attn.visit(p + ".fuse_attn", fn);
    fn(p + ".norm.gain", norm_gain);
    fn(p + ".norm.bias", norm_bias);
    auto lin = [&](const char* name, Linear& l) {
      fn(p + "." + name + ".weight", l.weight);
      fn(p + "." + name + ".bias", l.bias);
    };
    lin("center_in", center_in);
    lin("center_out", center_out);
    lin("offset_in", offset_in);
    lin("offset_out", offset_out);
    lin("size_in", size_in);
    lin("size_out", size_out);
  }
};

// Residual cross attention from search tokens into the concatenated modified
// language features.
inline Tensor fuse(const Tensor& f_search, const ModifiedLangFeatures& mod,
                   const HeadParams& params) {
  Tensor lang = concat_rows({mod.f_cate, mod.f_app_mod, mod.f_act_mod, mod.f_loc_mod});
  return cross_attend(f_search, lang, params.fuse_attn);
}

namespace detail {

// 3x3 same-padding convolution over a [C x g x g] feature map via im2col.
inline Tensor conv3x3(const Tensor& x, const Linear& w) {
  const long g = x.shape()[1];
  Tensor cols = im2col(x, 3);            // [g*g x 9C]
  Tensor y = transpose(w(cols));         // [out x g*g]
  return reshape(y, {y.rows(), g, g});
}

}  // namespace detail

// Three convolutional branches over the reshaped search grid; center and
// size squash to (0,1), offsets to [0,1).
inline HeadMaps predict(const Tensor& grid_feature, const HeadParams& params) {
  check(grid_feature.ndim() == 2, "predict: expected [N_s x C] features");
  const long n = grid_feature.rows(), c = grid_feature.cols();
  const long g = static_cast<long>(std::llround(std::sqrt(static_cast<double>(n))));
  check(g * g == n, "predict: token count must be a perfect square");
  Tensor normed = layer_norm_rows(grid_feature, params.norm_gain, params.norm_bias);
  Tensor grid = reshape(transpose(normed), {c, g, g});

  auto branch = [&](const Linear& w_in, const Linear& w_out) {
    Tensor h = gelu(detail::conv3x3(grid, w_in));
    return sigmoid(detail::conv3x3(h, w_out));
  };
  HeadMaps maps;
  maps.center = reshape(branch(params.center_in, params.center_out), {g, g});
  maps.offset = branch(params.offset_in, params.offset_out);
  maps.size = branch(params.size_in, params.size_out);
  return maps;
}

// Argmax cell of the center map; ties break toward the smallest row-major
// index.
inline std::pair<long, long> argmax_cell(const Tensor& center) {
  long best = 0;
  double mx = center[0];
  for (long i = 1; i < center.numel(); ++i) {
    if (center[i] > mx) {
      mx = center[i];
      best = i;
    }
  }
  const long g = center.shape()[1];
  return {best / g, best % g};  // (row, col)
}

inline double peak_score(const HeadMaps& maps) {
  double mx = maps.center[0];
  for (long i = 1; i < maps.center.numel(); ++i) mx = std::max(mx, maps.center[i]);
  return mx;
}

// Continuous box from the maps: center = (cell + offset) * p inside the
// crop, extents = size * crop side, then mapped back to source coordinates.
inline Box decode_box(const HeadMaps& maps, const CropParams& crop) {
  const long g = maps.center.shape()[1];
  const long p = crop.out / g;
  auto [row, col] = argmax_cell(maps.center);
  const long cell = row * g + col;
  const double off_x = maps.offset[cell];
  const double off_y = maps.offset[g * g + cell];
  const double cx = (static_cast<double>(col) + off_x) * static_cast<double>(p);
  const double cy = (static_cast<double>(row) + off_y) * static_cast<double>(p);
  const double w = maps.size[cell] * static_cast<double>(crop.out);
  const double h = maps.size[g * g + cell] * static_cast<double>(crop.out);
  return crop.to_source({cx - 0.5 * w, cy - 0.5 * h, w, h});
}

// ---------------------------------------------------------------------------
// Training targets

struct BoxTargets {
  std::vector<double> heat;  // [g*g] Gaussian bump, peak exactly 1
  long cell = 0;             // row-major peak index
  double off_x = 0.0, off_y = 0.0;
  double size_w = 0.0, size_h = 0.0;  // normalized by the crop side
};

namespace detail {

// Radius at which a shifted box still overlaps the annotated one by
// `min_overlap` (the usual corner-heatmap bound, smallest of three cases).
inline double gaussian_radius(double height, double width, double min_overlap = 0.7) {
  const double a1 = 1.0, b1 = height + width,
               c1 = width * height * (1.0 - min_overlap) / (1.0 + min_overlap);
  const double r1 = (b1 - std::sqrt(b1 * b1 - 4.0 * a1 * c1)) / (2.0 * a1);
  const double a2 = 4.0, b2 = 2.0 * (height + width),
               c2 = (1.0 - min_overlap) * width * height;
  const double r2 = (b2 - std::sqrt(b2 * b2 - 4.0 * a2 * c2)) / (2.0 * a2);
  const double a3 = 4.0 * min_overlap, b3 = -2.0 * min_overlap * (height + width),
               c3 = (min_overlap - 1.0) * width * height;
  const double r3 = (-b3 + std::sqrt(b3 * b3 - 4.0 * a3 * c3)) / (2.0 * a3);
  return std::min({r1, r2, r3});
}

}  // namespace detail

// Encode a ground-truth box given in crop coordinates into head targets.
// The Gaussian radius follows the overlap bound above with sigma=(2r+1)/6.
inline BoxTargets encode_targets(const Box& box_in_crop, long grid, long crop_size) {
  const double p = static_cast<double>(crop_size) / static_cast<double>(grid);
  const double cx = box_in_crop.cx() / p;
  const double cy = box_in_crop.cy() / p;
  check(cx >= 0.0 && cx < static_cast<double>(grid) && cy >= 0.0 &&
            cy < static_cast<double>(grid),
        "encode_targets: box center outside the grid");
  BoxTargets t;
  const long col = static_cast<long>(cx);
  const long row = static_cast<long>(cy);
  t.cell = row * grid + col;
  t.off_x = cx - static_cast<double>(col);
  t.off_y = cy - static_cast<double>(row);
  t.size_w = box_in_crop.w / static_cast<double>(crop_size);
  t.size_h = box_in_crop.h / static_cast<double>(crop_size);

  t.heat.assign(static_cast<size_t>(grid * grid), 0.0);
  // Radius from the overlap bound; boxes spanning at least ~1.5 cells get a
  // floor of one cell so that jitter does not turn neighbors into hard
  // negatives. Sub-cell boxes keep a degenerate (one-hot) target.
  const double h_cells = box_in_crop.h / p, w_cells = box_in_crop.w / p;
  double radius = std::max(0.0, detail::gaussian_radius(h_cells, w_cells));
  if (std::min(h_cells, w_cells) >= 1.5) radius = std::max(radius, 1.0);
  const long r = static_cast<long>(radius);
  const double sigma = (2.0 * radius + 1.0) / 6.0;
  for (long dy = -r; dy <= r; ++dy)
    for (long dx = -r; dx <= r; ++dx) {
      const long yy = row + dy, xx = col + dx;
      if (yy < 0 || yy >= grid || xx < 0 || xx >= grid) continue;
      const double v =
          std::exp(-(static_cast<double>(dx * dx + dy * dy)) / (2.0 * sigma * sigma));
      auto& cellv = t.heat[static_cast<size_t>(yy * grid + xx)];
      cellv = std::max(cellv, v);
    }
  t.heat[static_cast<size_t>(t.cell)] = 1.0;
  return t;
}

// ---------------------------------------------------------------------------
// Losses

// Penalty-reduced focal loss against a Gaussian-bumped heatmap. Cells with
// target exactly 1 are positives; elsewhere the penalty decays with (1-y)^4.
inline Tensor focal_loss(const Tensor& center_pred, const std::vector<double>& heat) {
  check(center_pred.numel() == static_cast<long>(heat.size()),
        "focal_loss: prediction and target sizes differ");
  const long n = center_pred.numel();
  std::vector<double> pos(heat.size(), 0.0), neg_w(heat.size(), 0.0);
  long n_pos = 0;
  for (size_t i = 0; i < heat.size(); ++i) {
    if (heat[i] == 1.0) {
      pos[i] = 1.0;
      ++n_pos;
    } else {
      const double u = 1.0 - heat[i];
      neg_w[i] = u * u * u * u;
    }
  }
  check(n_pos >= 1, "focal_loss: target has no positive cell");
  Tensor p = reshape(center_pred, {n});
  Tensor one = Tensor::full({n}, 1.0);
  Tensor pos_mask = Tensor::from({n}, std::move(pos));
  Tensor neg_mask = Tensor::from({n}, std::move(neg_w));
  Tensor one_minus_p = sub(one, p);
  Tensor pos_term = mul(pos_mask, mul(mul(one_minus_p, one_minus_p), log(clamp(p, 1e-12, 1.0))));
  Tensor neg_term = mul(neg_mask, mul(mul(p, p), log(clamp(one_minus_p, 1e-12, 1.0))));
  return mul_scalar(sum_all(add(pos_term, neg_term)), -1.0 / static_cast<double>(n_pos));
}

// Mean absolute difference between two normalized (x, y, w, h) vectors.
inline Tensor l1_loss(const Tensor& pred_xywh, const Box& gt_normalized) {
  check(pred_xywh.numel() == 4, "l1_loss: expected 4 coordinates");
  Tensor gt = Tensor::from({4}, {gt_normalized.x, gt_normalized.y, gt_normalized.w,
                                 gt_normalized.h});
  return mean_all(abs(sub(reshape(pred_xywh, {4}), gt)));
}

// Differentiable GIoU of a predicted (x, y, w, h) tensor against a constant
// ground-truth box in the same normalized coordinates.
inline Tensor giou_t(const Tensor& pred_xywh, const Box& gt) {
  check(pred_xywh.numel() == 4, "giou_t: expected 4 coordinates");
  Tensor p = reshape(pred_xywh, {4});
  Tensor ax1 = pick(p, 0), ay1 = pick(p, 1), aw = pick(p, 2), ah = pick(p, 3);
  Tensor ax2 = add(ax1, aw), ay2 = add(ay1, ah);
  auto c = [](double v) { return Tensor::from({1}, {v}); };
  Tensor bx1 = c(gt.x), by1 = c(gt.y), bx2 = c(gt.x + gt.w), by2 = c(gt.y + gt.h);

  Tensor iw = clamp(sub(minimum(ax2, bx2), maximum(ax1, bx1)), 0.0, 1e30);
  Tensor ih = clamp(sub(minimum(ay2, by2), maximum(ay1, by1)), 0.0, 1e30);
  Tensor inter = mul(iw, ih);
  Tensor uni = sub(add(mul(aw, ah), c(gt.w * gt.h)), inter);
  Tensor ew = sub(maximum(ax2, bx2), minimum(ax1, bx1));
  Tensor eh = sub(maximum(ay2, by2), minimum(ay1, by1));
  Tensor enclosure = mul(ew, eh);
  return sub(div(inter, uni), div(sub(enclosure, uni), enclosure));
}

inline Tensor giou_loss(const Tensor& pred_xywh, const Box& gt) {
  return sub(Tensor::from({1}, {1.0}), giou_t(pred_xywh, gt));
}

// Predicted normalized (x, y, w, h) read off the maps at the target cell.
inline Tensor box_at_cell(const HeadMaps& maps, long cell) {
  const long g = maps.center.shape()[1];
  const long row = cell / g, col = cell % g;
  Tensor off_x = pick(maps.offset, cell);
  Tensor off_y = pick(maps.offset, g * g + cell);
  Tensor w = pick(maps.size, cell);
  Tensor h = pick(maps.size, g * g + cell);
  const double inv_g = 1.0 / static_cast<double>(g);
  Tensor cx = mul_scalar(add_scalar(off_x, static_cast<double>(col)), inv_g);
  Tensor cy = mul_scalar(add_scalar(off_y, static_cast<double>(row)), inv_g);
  Tensor x = sub(cx, mul_scalar(w, 0.5));
  Tensor y = sub(cy, mul_scalar(h, 0.5));
  return concat_vec({x, y, w, h});
}

inline Tensor total_loss(const Tensor& l_cls, const Tensor& l_1, const Tensor& l_giou,
                         const LossWeights& w = LossWeights{}) {
  return add(l_cls, add(mul_scalar(l_1, w.lambda1), mul_scalar(l_giou, w.lambda2)));
}

inline double total_loss(double l_cls, double l_1, double l_giou,
                         const LossWeights& w = LossWeights{}) {
  return l_cls + w.lambda1 * l_1 + w.lambda2 * l_giou;
}

// Full per-frame supervision: focal on the heatmap plus weighted L1/GIoU of
// the normalized box at the ground-truth cell.
inline Tensor frame_loss(const HeadMaps& maps, const Box& gt_in_crop, long crop_size,
                         const LossWeights& w = LossWeights{}) {
  const long g = maps.center.shape()[1];
  const BoxTargets t = encode_targets(gt_in_crop, g, crop_size);
  Tensor box = box_at_cell(maps, t.cell);
  const double inv = 1.0 / static_cast<double>(crop_size);
  const Box gt_norm{gt_in_crop.x * inv, gt_in_crop.y * inv, gt_in_crop.w * inv,
                    gt_in_crop.h * inv};
  return total_loss(focal_loss(maps.center, t.heat), l1_loss(box, gt_norm),
                    giou_loss(box, gt_norm), w);
}

}  // namespace vltrack
