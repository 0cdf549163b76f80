#include "rgbt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rgbt/random.hpp"

namespace rgbt {

BoundingBox::BoundingBox(double x_, double y_, double w_, double h_)
    : x(x_), y(y_), w(w_), h(h_) {
  if (!(w > 0.0) || !(h > 0.0)) {
    throw std::invalid_argument("BoundingBox requires positive width and height, got w=" +
                                std::to_string(w_) + " h=" + std::to_string(h_));
  }
}

BoundingBox BoundingBox::from_center(double cx, double cy, double w, double h) {
  return BoundingBox(cx - w * 0.5, cy - h * 0.5, w, h);
}

BoundingBox BoundingBox::clamped_to_frame(double frame_w, double frame_h, double min_size) const {
  double cw = std::clamp(w, std::min(min_size, frame_w), frame_w);
  double ch = std::clamp(h, std::min(min_size, frame_h), frame_h);
  double cx_ = std::clamp(x, 0.0, frame_w - cw);
  double cy_ = std::clamp(y, 0.0, frame_h - ch);
  return BoundingBox(cx_, cy_, cw, ch);
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

double center_distance(const BoundingBox& a, const BoundingBox& b) {
  return std::hypot(a.cx() - b.cx(), a.cy() - b.cy());
}

void ProposalSamplingConfig::validate() const {
  if (count < 1) throw std::invalid_argument("proposal count must be >= 1");
  if (translation_sigma < 0.0 || scale_sigma < 0.0)
    throw std::invalid_argument("proposal sigmas must be >= 0");
  if (!(scale_min < scale_max)) throw std::invalid_argument("scale_min must be < scale_max");
}

namespace {

BoundingBox jittered_box(const BoundingBox& base, Rng& rng, double trans_sigma,
                         double scale_sigma, double scale_min, double scale_max) {
  double m = (base.w + base.h) * 0.5;
  double dx = rng.normal() * trans_sigma * m;
  double dy = rng.normal() * trans_sigma * m;
  double f = std::exp2(rng.normal() * scale_sigma);
  f = std::clamp(f, scale_min, scale_max);
  return BoundingBox::from_center(base.cx() + dx, base.cy() + dy, base.w * f, base.h * f);
}

bool inside_frame(const BoundingBox& b, const std::pair<double, double>& wh) {
  return b.x >= 0.0 && b.y >= 0.0 && b.right() <= wh.first && b.bottom() <= wh.second;
}

}  // namespace

std::vector<BoundingBox> sample_proposals(const BoundingBox& center,
                                          const ProposalSamplingConfig& cfg,
                                          uint64_t rng_seed) {
  cfg.validate();
  Rng rng(rng_seed);
  std::vector<BoundingBox> out;
  out.reserve(cfg.count);
  for (int i = 0; i < cfg.count; ++i) {
    out.push_back(jittered_box(center, rng, cfg.translation_sigma, cfg.scale_sigma,
                               cfg.scale_min, cfg.scale_max));
  }
  return out;
}

TrainingBoxes sample_training_boxes(const BoundingBox& gt, int n_pos, int n_neg,
                                    uint64_t rng_seed, const TrainingSampleConfig& cfg,
                                    std::optional<std::pair<double, double>> frame_size) {
  Rng rng(rng_seed);
  TrainingBoxes out;
  out.positives.reserve(n_pos);
  out.negatives.reserve(n_neg);

  auto draw = [&](bool positive) {
    for (int attempt = 0; attempt < cfg.max_attempts_per_sample; ++attempt) {
      BoundingBox b = positive
          ? jittered_box(gt, rng, cfg.pos_translation_sigma, cfg.pos_scale_sigma, 0.5, 2.0)
          : jittered_box(gt, rng, cfg.neg_translation_sigma, cfg.neg_scale_sigma, 0.3, 3.0);
      if (frame_size && !inside_frame(b, *frame_size)) continue;
      double v = iou(b, gt);
      if (positive ? (v >= cfg.pos_iou_min && v <= cfg.pos_iou_max) : (v < cfg.neg_iou_max)) {
        return b;
      }
    }
    throw SamplingExhaustedError(std::string("sample_training_boxes: attempt budget exceeded for ") +
                                 (positive ? "positive" : "negative") +
                                 " samples; ground truth may be degenerate or too close to the frame border");
  };

  for (int i = 0; i < n_pos; ++i) out.positives.push_back(draw(true));
  for (int i = 0; i < n_neg; ++i) out.negatives.push_back(draw(false));
  return out;
}

}  // namespace rgbt
