#pragma once

// Attention heatmaps for the query with the highest interaction logit, in the
// order instance decoder, context aggregator, context extractor, plus the
// predicted human, object and context boxes drawn on the input.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "contexthoi/detector.hpp"
#include "contexthoi/image.hpp"

namespace contexthoi {

// Min-max scaled to [0,1]; a constant map becomes all zeros.
Eigen::VectorXd normalize_heatmap(const Eigen::VectorXd& v);

struct Heatmaps {
  Index query = 0;  // pair / context query index
  Index grid_height = 0;
  Index grid_width = 0;
  // Each [grid_height * grid_width], normalized to [0,1].
  std::array<Eigen::VectorXd, 3> maps;
  static constexpr std::array<const char*, 3> kNames = {"instance_decoder", "context_aggregator",
                                                        "context_extractor"};
};

// The aggregator map rolls each branch's attention over its keys back onto
// the feature grid: instance keys through the instance decoder's cross-
// attention, context keys through the context extractor's, teacher keys are
// grid cells already.
Heatmaps compute_heatmaps(const ModelOutput& out);

// Heat colouring of `map` (grid) blended over `image`.
Image overlay_heatmap(const Image& image, const Eigen::VectorXd& map, Index grid_h, Index grid_w);
Image draw_predictions(const Image& image, const ModelOutput& out, Index query);

// Writes 1_instance_decoder.ppm, 2_context_aggregator.ppm,
// 3_context_extractor.ppm and boxes.ppm; returns the written paths in order.
std::vector<std::filesystem::path> write_visualization(const ContextHoiModel& model, const Image& image,
                                                       const std::filesystem::path& out_dir);

}  // namespace contexthoi
