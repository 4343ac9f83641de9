#include "gal/attention.hpp"

namespace gal {

namespace {
constexpr std::uint64_t kAttentionInitStream = 0xA77E;
}

template <typename Scalar>
AttentionModel<Scalar>::AttentionModel(ModelConfig config) : Base(std::move(config)) {
  const ModelConfig& c = this->config_;
  Rng rng = Rng::derive(c.init_seed, kAttentionInitStream);
  const Index w = c.trunk_width;
  // He init on the ReLU layers. With the plain fan-in bound the keys start
  // nearly flat across pixels, and some seeds never leave the uniform heatmap.
  key1_ = this->add_conv("key1", 3 + 2, w, 3, 1, 1, rng, Base::kReluGain);
  key2_ = this->add_conv("key2", w + 2, w, 3, 1, 1, rng, Base::kReluGain);
  key3_ = this->add_conv("key3", w + 2, c.key_dim, 3, 1, 1, rng);
  value1_ = this->add_conv("value1", 3, w, 3, 1, 1, rng, Base::kReluGain);
  value2_ = this->add_conv("value2", w, c.value_dim, 3, 1, 1, rng);
  if (c.query_mode != QueryMode::Conditioned) {
    base_queries_ = this->add_param("query.base", {c.heads, c.key_dim}, -1.0, 1.0, rng);
  }
  if (c.query_mode != QueryMode::Base) {
    condition_hidden_ = this->add_dense("query.condition_hidden", c.condition_dim, c.condition_hidden, rng);
    condition_out_ = this->add_dense("query.condition_out", c.condition_hidden, c.heads * c.key_dim, rng);
  }
  readout_hidden_ =
      this->add_dense("readout.hidden", 2 + (c.readout_features ? c.value_dim : 0), c.readout_hidden, rng);
  readout_out_ = this->add_dense("readout.out", c.readout_hidden, 2, rng);
}

// Coordinate channels enter every convolution; the last layer stays linear so
// keys can take either sign against the query.
template <typename Scalar>
Var<Scalar> AttentionModel<Scalar>::compute_key(Graph<Scalar>& g, const Var<Scalar>& image) {
  Var<Scalar> h = relu(this->apply(g, key1_, concat_coords(image)));
  h = relu(this->apply(g, key2_, concat_coords(h)));
  return this->apply(g, key3_, concat_coords(h));
}

template <typename Scalar>
Var<Scalar> AttentionModel<Scalar>::compute_value(Graph<Scalar>& g, const Var<Scalar>& image) {
  return this->apply(g, value2_, relu(this->apply(g, value1_, image)));
}

template <typename Scalar>
Var<Scalar> AttentionModel<Scalar>::make_query(Graph<Scalar>& g, int head, const Var<Scalar>& condition) {
  const ModelConfig& c = this->config_;
  if (head < 0 || head >= c.heads) throw DimensionError("make_query: head index out of range");
  const Index d = c.key_dim;
  Var<Scalar> base;
  if (c.query_mode != QueryMode::Conditioned) {
    base = slice(reshape(this->param(g, base_queries_), {c.heads * d}), head * d, d);
    if (c.query_mode == QueryMode::Base) return base;
  }
  if (!condition.valid()) {
    throw ContractError("make_query: " + std::string(query_mode_name(c.query_mode)) + " queries require a condition");
  }
  const Var<Scalar> hidden = tanh(this->apply(g, condition_hidden_, condition));
  const Var<Scalar> conditioned = slice(this->apply(g, condition_out_, hidden), head * d, d);
  return c.query_mode == QueryMode::Combined ? add(base, conditioned) : conditioned;
}

template <typename Scalar>
auto AttentionModel<Scalar>::attend(Graph<Scalar>& g, const Tensor<Scalar>& image, const Vector& condition)
    -> std::vector<HeadResult> {
  const ModelConfig& c = this->config_;
  const Var<Scalar> img = this->input_image(g, image);
  Var<Scalar> cond;
  if (c.query_mode != QueryMode::Base || c.condition_dim > 0) cond = this->input_condition(g, condition);

  const Var<Scalar> keys = compute_key(g, img);
  const Var<Scalar> values = compute_value(g, img);
  const Var<Scalar> coords = g.constant(coordinate_value<Scalar>(c.height, c.width));
  std::vector<HeadResult> heads;
  for (int n = 0; n < c.heads; ++n) {
    const Var<Scalar> query = make_query(g, n, cond);
    const Var<Scalar> heatmap = selection(keys, query, static_cast<Scalar>(c.temperature));
    Extraction<Scalar> ex = extract(heatmap, values, coords);
    const Var<Scalar> readout_in = c.readout_features ? concat({ex.coordinate, ex.feature}) : ex.coordinate;
    const Var<Scalar> hidden = tanh(this->apply(g, readout_hidden_, readout_in));
    // The MLP refines a_coord rather than replacing it: coordinate embedding
    // and workspace share the [-1,1] normalization.
    const Var<Scalar> normalized = add(ex.coordinate, this->apply(g, readout_out_, hidden));
    heads.push_back({heatmap, ex, this->to_cm(normalized)});
  }
  return heads;
}

template <typename Scalar>
ModelOutput<Scalar> AttentionModel<Scalar>::forward(Graph<Scalar>& g, const Tensor<Scalar>& image,
                                                    const Vector& condition) {
  const auto heads = attend(g, image, condition);
  std::vector<Var<Scalar>> preds;
  for (const auto& h : heads) preds.push_back(h.prediction);
  return {concat(std::span<const Var<Scalar>>(preds)), std::nullopt};
}

template <typename Scalar>
AttentionState AttentionModel<Scalar>::attention_state(const SceneSample& sample) const {
  Graph<Scalar> g(false);
  auto& self = const_cast<AttentionModel&>(*this);
  const auto heads = self.attend(g, sample.image.template cast<Scalar>(), sample.condition.template cast<Scalar>());
  AttentionState st;
  for (const auto& h : heads) {
    st.heatmaps.push_back(h.heatmap.tensor().template cast<double>());
    st.heatmaps.back().requires_grad = false;
    st.features.push_back(h.extraction.feature.value().template cast<double>());
    const auto& a = h.extraction.coordinate.value();
    st.coords.emplace_back(static_cast<double>(a[0]), static_cast<double>(a[1]));
    const auto& p = h.prediction.value();
    st.predictions_cm.emplace_back(static_cast<double>(p[0]), static_cast<double>(p[1]));
  }
  return st;
}

template class AttentionModel<float>;
template class AttentionModel<double>;

}  // namespace gal
