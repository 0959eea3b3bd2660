#include "contexthoi/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace contexthoi {

namespace {

Rgb heat_colour(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return {std::clamp(1.5 * t, 0.0, 1.0), std::clamp(1.5 * t - 0.5, 0.0, 1.0),
          std::clamp(3.0 * t - 2.0, 0.0, 1.0)};
}

void draw_box(Image& img, const BoxD& b, const Rgb& c) {
  const auto k = b.corners();
  const int x0 = static_cast<int>(std::floor(k[0] * img.width));
  const int y0 = static_cast<int>(std::floor(k[1] * img.height));
  const int x1 = static_cast<int>(std::ceil(k[2] * img.width));
  const int y1 = static_cast<int>(std::ceil(k[3] * img.height));
  img.draw_rect_outline(x0, y0, std::max(x1, x0 + 1), std::max(y1, y0 + 1), c);
}

BoxD row_box(const Matrix& m, Index r) { return BoxD{m(r, 0), m(r, 1), m(r, 2), m(r, 3)}; }

}  // namespace

Eigen::VectorXd normalize_heatmap(const Eigen::VectorXd& v) {
  if (v.size() == 0) return v;
  const double lo = v.minCoeff();
  const double hi = v.maxCoeff();
  if (!(hi > lo)) return Eigen::VectorXd::Zero(v.size());
  return (v.array() - lo) / (hi - lo);
}

Heatmaps compute_heatmaps(const ModelOutput& out) {
  Heatmaps h;
  h.grid_height = out.memory.height;
  h.grid_width = out.memory.width;
  const Index cells = h.grid_height * h.grid_width;

  Index q = 0, cls = 0;
  out.predictions.hoi_logits.value().maxCoeff(&q, &cls);
  h.query = q;

  const Matrix& inst = out.instance.bundle.last_cross_attention;  // [2N_q, HW]
  const Eigen::VectorXd inst_map = 0.5 * (inst.row(2 * q) + inst.row(2 * q + 1)).transpose();
  h.maps[0] = normalize_heatmap(inst_map);

  Eigen::VectorXd ctx_map = Eigen::VectorXd::Zero(cells);
  if (out.context) ctx_map = out.context->bundle.last_cross_attention.row(q).transpose();
  h.maps[2] = normalize_heatmap(ctx_map);

  const auto& agg = out.aggregated.last_cross_attention;
  Eigen::VectorXd rolled = Eigen::VectorXd::Zero(cells);
  if (agg[0].size()) rolled += (agg[0].row(q) * inst).transpose();
  if (out.context && agg[1].size()) rolled += (agg[1].row(q) * out.context->bundle.last_cross_attention).transpose();
  if (agg[2].size() && agg[2].cols() == cells) rolled += agg[2].row(q).transpose();
  h.maps[1] = normalize_heatmap(rolled);
  return h;
}

Image overlay_heatmap(const Image& image, const Eigen::VectorXd& map, Index grid_h, Index grid_w) {
  if (map.size() != grid_h * grid_w) throw std::invalid_argument("overlay_heatmap: grid size mismatch");
  Image out = image;
  for (int y = 0; y < image.height; ++y) {
    const Index gy = std::min<Index>(grid_h - 1, y * grid_h / image.height);
    for (int x = 0; x < image.width; ++x) {
      const Index gx = std::min<Index>(grid_w - 1, x * grid_w / image.width);
      const Rgb hc = heat_colour(map(gy * grid_w + gx));
      const Rgb pc = image.get(x, y);
      out.set(x, y, {0.35 * pc[0] + 0.65 * hc[0], 0.35 * pc[1] + 0.65 * hc[1], 0.35 * pc[2] + 0.65 * hc[2]});
    }
  }
  return out;
}

Image draw_predictions(const Image& image, const ModelOutput& out, Index query) {
  Image img = image;
  draw_box(img, row_box(out.predictions.human_boxes.value(), query), {1.0, 0.0, 0.0});
  draw_box(img, row_box(out.predictions.object_boxes.value(), query), {0.0, 0.3, 1.0});
  if (out.predictions.context_boxes) {
    draw_box(img, row_box(out.predictions.context_boxes->value(), query), {0.0, 1.0, 0.0});
  }
  return img;
}

std::vector<std::filesystem::path> write_visualization(const ContextHoiModel& model, const Image& image,
                                                       const std::filesystem::path& out_dir) {
  ad::NoGradGuard guard;
  const ModelOutput out = model.forward(image);
  const Heatmaps h = compute_heatmaps(out);
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> paths;
  for (size_t i = 0; i < h.maps.size(); ++i) {
    const auto p = out_dir / (std::to_string(i + 1) + "_" + Heatmaps::kNames[i] + ".ppm");
    write_ppm(overlay_heatmap(image, h.maps[i], h.grid_height, h.grid_width), p);
    paths.push_back(p);
  }
  const auto p = out_dir / "boxes.ppm";
  write_ppm(draw_predictions(image, out, h.query), p);
  paths.push_back(p);
  return paths;
}

}  // namespace contexthoi
