#pragma once

// Key-Query-Value spatial attention with top-down controllable queries.
//
// Selection: a heatmap M over pixels from the scaled dot product between a
// per-pixel key map K[D,H,W] and a query vector Q[D]:
//     M = softmax2d(<K(:,u,v), Q> / sqrt(H*W), T)
// The scale uses the spatial extent of K rather than sqrt(D) as in language
// attention; with T fixed the effective sharpness therefore drops as the
// canvas grows.
//
// Extraction: expectations of a learned feature map and of the constant
// coordinate map under M give a_feat and a_coord.

#include <cmath>
#include <utility>
#include <vector>

#include "gal/model.hpp"

namespace gal {

/// Constant [2,H,W] map of normalized pixel coordinates (x then y).
template <typename Scalar>
Tensor<Scalar> coordinate_value(Index height, Index width) {
  return coordinate_grid<Scalar>(height, width);
}

/// Heatmap over K's pixels for query Q at temperature T.
template <typename Scalar>
Var<Scalar> selection(const Var<Scalar>& keys, const Var<Scalar>& query, Scalar temperature) {
  detail::require_rank(keys.shape(), 3, "selection", "keys");
  const auto spatial = static_cast<Scalar>(keys.dim(1) * keys.dim(2));
  return softmax2d(scale(pixel_dot(keys, query), Scalar(1) / std::sqrt(spatial)), temperature);
}

template <typename Scalar>
struct Extraction {
  Var<Scalar> feature;     // [D']
  Var<Scalar> coordinate;  // [2]
};

/// Expected coordinate a_coord under a normalized heatmap. The heatmap must
/// already sum to 1; this is checked, never repaired.
template <typename Scalar>
Var<Scalar> extract_coordinate(const Var<Scalar>& heatmap, const Var<Scalar>& value_coords) {
  detail::require_rank(heatmap.shape(), 2, "extract", "heatmap");
  const double total = heatmap.value().template cast<double>().sum();
  if (std::abs(total - 1.0) > 1e-6) {
    throw ContractError("extract: heatmap sums to " + std::to_string(total) + ", expected 1 within 1e-6");
  }
  if (value_coords.shape().size() != 3 || value_coords.dim(0) != 2) {
    throw DimensionError("extract: coordinate value must be [2,H,W], got " + to_string(value_coords.shape()));
  }
  Var<Scalar> a = spatial_weighted_sum(heatmap, value_coords);
  if (a.value().cwiseAbs().maxCoeff() <= Scalar(1)) return a;
  // A saturated heatmap on the border can overshoot [-1,1] by rounding; the
  // clamp only removes ulps, so its gradient is taken as the identity.
  const int ia = a.id();
  VectorX<Scalar> clamped = a.value().cwiseMax(Scalar(-1)).cwiseMin(Scalar(1));
  return a.graph().record("clamp_unit", a.shape(), std::move(clamped), {ia},
                          [ia](Graph<Scalar>& g, const VectorX<Scalar>& go) { g.grad(ia) += go; });
}

/// Weighted averages of V_feat and V_coord under the heatmap.
template <typename Scalar>
Extraction<Scalar> extract(const Var<Scalar>& heatmap, const Var<Scalar>& value_features,
                           const Var<Scalar>& value_coords) {
  Var<Scalar> coordinate = extract_coordinate(heatmap, value_coords);
  return {spatial_weighted_sum(heatmap, value_features), coordinate};
}

/// Plain-value snapshot of one forward pass, for inspection and overlays.
struct AttentionState {
  std::vector<Tensor<double>> heatmaps;  // per head, [H,W]
  std::vector<Eigen::VectorXd> features;
  std::vector<Point> coords;  // per head, in [-1,1]^2 image-normalized units
  std::vector<Point> predictions_cm;
};

/// The proposed model: FCN1 (three conv layers with coordinate channels) for
/// keys, FCN2 (two conv layers) for feature values, a query bank, and a
/// readout MLP shared by all heads. Each head predicts
///     30 cm * (a_coord + MLP(a_coord [, a_feat])).
template <typename Scalar>
class AttentionModel final : public Model<Scalar> {
 public:
  using Vector = VectorX<Scalar>;
  using Base = Model<Scalar>;

  explicit AttentionModel(ModelConfig config);

  ModelOutput<Scalar> forward(Graph<Scalar>& g, const Tensor<Scalar>& image, const Vector& condition) override;

  Var<Scalar> compute_key(Graph<Scalar>& g, const Var<Scalar>& image);
  Var<Scalar> compute_value(Graph<Scalar>& g, const Var<Scalar>& image);
  /// Base: q_head. Conditioned: MLP(condition) slice for the head.
  /// Combined: q_head + MLP(condition).
  Var<Scalar> make_query(Graph<Scalar>& g, int head, const Var<Scalar>& condition);

  struct HeadResult {
    Var<Scalar> heatmap;
    Extraction<Scalar> extraction;
    Var<Scalar> prediction;  // [2] cm
  };
  std::vector<HeadResult> attend(Graph<Scalar>& g, const Tensor<Scalar>& image, const Vector& condition);

  AttentionState attention_state(const SceneSample& sample) const;

  /// Index of the base-query tensor [heads, D] in the parameter list.
  std::size_t base_query_index() const { return base_queries_; }
  /// Last layer of the condition MLP (exposed for tests that zero it).
  const DenseLayer& condition_output_layer() const { return condition_out_; }

 private:
  ConvLayer key1_, key2_, key3_;
  ConvLayer value1_, value2_;
  std::size_t base_queries_ = 0;
  DenseLayer condition_hidden_, condition_out_;
  DenseLayer readout_hidden_, readout_out_;
};

}  // namespace gal
