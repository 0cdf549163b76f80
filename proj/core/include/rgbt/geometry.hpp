// Bounding-box arithmetic and candidate sampling.
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rgbt/errors.hpp"

namespace rgbt {

/// Axis-aligned box. (x, y) is the top-left corner in continuous pixel
/// coordinates, y grows downward. Width and height must be positive.
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  BoundingBox() = default;
  BoundingBox(double x_, double y_, double w_, double h_);

  double area() const { return w * h; }
  double cx() const { return x + w * 0.5; }
  double cy() const { return y + h * 0.5; }
  double right() const { return x + w; }
  double bottom() const { return y + h; }
  bool valid() const { return w > 0.0 && h > 0.0; }

  /// Recenter at (cx, cy) keeping the size.
  static BoundingBox from_center(double cx, double cy, double w, double h);

  /// Shift/shrink the box so it lies inside a frame of the given size.
  /// Size is clamped first (to at most the frame, at least min_size), then
  /// position. Always yields a valid in-frame box.
  BoundingBox clamped_to_frame(double frame_w, double frame_h, double min_size = 1.0) const;

  bool operator==(const BoundingBox& o) const = default;
};

double iou(const BoundingBox& a, const BoundingBox& b);
double center_distance(const BoundingBox& a, const BoundingBox& b);

/// Local proposal generation around the previous result. Translations are
/// Gaussian with per-axis stddev translation_sigma * mean(w, h); scale is
/// 2^N(0, scale_sigma^2), clamped to [scale_min, scale_max], aspect kept.
struct ProposalSamplingConfig {
  int count = 256;
  double translation_sigma = 0.6;
  double scale_sigma = 0.05;  // log2 units
  double scale_min = 0.7;
  double scale_max = 1.4;

  void validate() const;
};

std::vector<BoundingBox> sample_proposals(const BoundingBox& center,
                                          const ProposalSamplingConfig& cfg,
                                          uint64_t rng_seed);

/// Rejection-sampling controls for first-frame / update training boxes.
/// IoU acceptance bands: positives in [pos_iou_min, pos_iou_max], negatives
/// strictly below neg_iou_max.
struct TrainingSampleConfig {
  double pos_translation_sigma = 0.1;
  double pos_scale_sigma = 0.05;
  double neg_translation_sigma = 1.0;
  double neg_scale_sigma = 0.5;
  double pos_iou_min = 0.7;
  double pos_iou_max = 1.0;
  double neg_iou_max = 0.5;
  int max_attempts_per_sample = 20000;
};

struct TrainingBoxes {
  std::vector<BoundingBox> positives;
  std::vector<BoundingBox> negatives;
};

/// Draws n_pos positives and n_neg negatives around gt. When frame_size
/// (w, h) is given, samples must also lie fully inside the frame; a ground
/// truth hugging the border can then exhaust the attempt budget, which
/// raises SamplingExhaustedError.
TrainingBoxes sample_training_boxes(const BoundingBox& gt, int n_pos, int n_neg,
                                    uint64_t rng_seed,
                                    const TrainingSampleConfig& cfg = {},
                                    std::optional<std::pair<double, double>> frame_size = {});

}  // namespace rgbt
