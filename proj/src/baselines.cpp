#include "gal/baselines.hpp"

namespace gal {

namespace {
constexpr std::uint64_t kKeyPointInitStream = 0x4B50;
constexpr std::uint64_t kConvAEInitStream = 0xCAE;
constexpr std::uint64_t kFCNInitStream = 0xFC2;

Index strided_extent(Index n) { return (n + 2 - 3) / 2 + 1; }

template <typename Scalar>
Var<Scalar> with_condition(const Var<Scalar>& features, const Var<Scalar>& condition) {
  return condition.valid() ? concat({features, condition}) : features;
}

template <typename Scalar>
Var<Scalar> squared_error_mean(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Var<Scalar> d = sub(a, b);
  return mean(mul(d, d));
}
}  // namespace

template <typename Scalar>
Var<Scalar> spatial_soft_argmax(const Var<Scalar>& maps, Scalar temperature) {
  detail::require_rank(maps.shape(), 3, "spatial_soft_argmax", "maps");
  Graph<Scalar>& g = maps.graph();
  const Var<Scalar> coords = g.constant(coordinate_value<Scalar>(maps.dim(1), maps.dim(2)));
  std::vector<Var<Scalar>> points;
  for (Index c = 0; c < maps.dim(0); ++c) {
    points.push_back(extract_coordinate(softmax2d(channel(maps, c), temperature), coords));
  }
  return concat(std::span<const Var<Scalar>>(points));
}

template <typename Scalar>
Tensor<Scalar> reconstruction_target(const Tensor<Scalar>& image, Index extent) {
  if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("reconstruction_target: expected [3,H,W] image");
  const Index h = image.dim(1), w = image.dim(2);
  if (extent < 1 || extent > h || extent > w) throw ParameterError("reconstruction_target: extent out of range");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(extent * extent);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(extent * extent);
  for (Index v = 0; v < h; ++v) {
    for (Index u = 0; u < w; ++u) {
      const Index cell = (v * extent / h) * extent + u * extent / w;
      acc[cell] += (static_cast<double>(image.at(0, v, u)) + static_cast<double>(image.at(1, v, u)) +
                    static_cast<double>(image.at(2, v, u))) / 3.0;
      count[cell] += 1.0;
    }
  }
  return Tensor<Scalar>({extent * extent}, acc.cwiseQuotient(count).template cast<Scalar>());
}

// ---------------------------------------------------------------------------

template <typename Scalar>
KeyPointModel<Scalar>::KeyPointModel(ModelConfig config)
    : Model<Scalar>(std::move(config)), with_decoder_(this->config_.kind == ModelKind::DeepSpatialAE) {
  const ModelConfig& c = this->config_;
  Rng rng = Rng::derive(c.init_seed, kKeyPointInitStream);
  const Index w = c.trunk_width;
  conv1_ = this->add_conv("trunk1", 3, w, 3, 1, 1, rng);
  conv2_ = this->add_conv("trunk2", w, w, 3, 1, 1, rng);
  conv3_ = this->add_conv("trunk3", w, c.heads, 3, 1, 1, rng);
  head_hidden_ = this->add_dense("head.hidden", 2 * c.heads + c.condition_dim, c.readout_hidden, rng);
  head_out_ = this->add_dense("head.out", c.readout_hidden, 2 * c.targets, rng);
  if (with_decoder_) {
    decoder_hidden_ = this->add_dense("decoder.hidden", 2 * c.heads, c.decoder_hidden, rng);
    decoder_out_ = this->add_dense("decoder.out", c.decoder_hidden, c.recon_extent * c.recon_extent, rng);
  }
}

template <typename Scalar>
Var<Scalar> KeyPointModel<Scalar>::keypoints(Graph<Scalar>& g, const Var<Scalar>& image) {
  Var<Scalar> h = relu(this->apply(g, conv1_, image));
  h = relu(this->apply(g, conv2_, h));
  return spatial_soft_argmax(this->apply(g, conv3_, h), static_cast<Scalar>(this->config_.temperature));
}

template <typename Scalar>
Var<Scalar> KeyPointModel<Scalar>::reconstruct(Graph<Scalar>& g, const Var<Scalar>& points) {
  if (!with_decoder_) throw ContractError("reconstruct: keypoint model has no decoder");
  return this->apply(g, decoder_out_, tanh(this->apply(g, decoder_hidden_, points)));
}

template <typename Scalar>
ModelOutput<Scalar> KeyPointModel<Scalar>::forward(Graph<Scalar>& g, const Tensor<Scalar>& image,
                                                   const Vector& condition) {
  const Var<Scalar> img = this->input_image(g, image);
  const Var<Scalar> cond = this->input_condition(g, condition);
  const Var<Scalar> points = keypoints(g, img);
  const Var<Scalar> hidden = tanh(this->apply(g, head_hidden_, with_condition(points, cond)));
  ModelOutput<Scalar> out{this->to_cm(this->apply(g, head_out_, hidden)), std::nullopt};
  if (with_decoder_) {
    const Var<Scalar> target = g.constant(reconstruction_target(image, this->config_.recon_extent));
    out.reconstruction_loss = squared_error_mean(reconstruct(g, points), target);
  }
  return out;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
ConvAEModel<Scalar>::ConvAEModel(ModelConfig config) : Model<Scalar>(std::move(config)) {
  const ModelConfig& c = this->config_;
  Rng rng = Rng::derive(c.init_seed, kConvAEInitStream);
  const Index w = c.trunk_width;
  conv1_ = this->add_conv("encoder1", 3, w, 3, 2, 1, rng);
  conv2_ = this->add_conv("encoder2", w, 2 * w, 3, 2, 1, rng);
  conv3_ = this->add_conv("encoder3", 2 * w, 2 * w, 3, 2, 1, rng);
  const Index oh = strided_extent(strided_extent(strided_extent(c.height)));
  const Index ow = strided_extent(strided_extent(strided_extent(c.width)));
  flat_ = 2 * w * oh * ow;
  latent_ = this->add_dense("latent", flat_, c.latent_dim, rng);
  head_hidden_ = this->add_dense("head.hidden", c.latent_dim + c.condition_dim, c.readout_hidden, rng);
  head_out_ = this->add_dense("head.out", c.readout_hidden, 2 * c.targets, rng);
  decoder_hidden_ = this->add_dense("decoder.hidden", c.latent_dim, c.decoder_hidden, rng);
  decoder_out_ = this->add_dense("decoder.out", c.decoder_hidden, c.recon_extent * c.recon_extent, rng);
}

template <typename Scalar>
Var<Scalar> ConvAEModel<Scalar>::encode(Graph<Scalar>& g, const Var<Scalar>& image) {
  Var<Scalar> h = relu(this->apply(g, conv1_, image));
  h = relu(this->apply(g, conv2_, h));
  h = relu(this->apply(g, conv3_, h));
  return tanh(this->apply(g, latent_, reshape(h, {flat_})));
}

template <typename Scalar>
Var<Scalar> ConvAEModel<Scalar>::reconstruct(Graph<Scalar>& g, const Var<Scalar>& latent) {
  return this->apply(g, decoder_out_, tanh(this->apply(g, decoder_hidden_, latent)));
}

template <typename Scalar>
ModelOutput<Scalar> ConvAEModel<Scalar>::forward(Graph<Scalar>& g, const Tensor<Scalar>& image,
                                                 const Vector& condition) {
  const Var<Scalar> img = this->input_image(g, image);
  const Var<Scalar> cond = this->input_condition(g, condition);
  const Var<Scalar> latent = encode(g, img);
  const Var<Scalar> hidden = tanh(this->apply(g, head_hidden_, with_condition(latent, cond)));
  const Var<Scalar> target = g.constant(reconstruction_target(image, this->config_.recon_extent));
  return {this->to_cm(this->apply(g, head_out_, hidden)), squared_error_mean(reconstruct(g, latent), target)};
}

// ---------------------------------------------------------------------------

template <typename Scalar>
PlainFCNModel<Scalar>::PlainFCNModel(ModelConfig config) : Model<Scalar>(std::move(config)) {
  const ModelConfig& c = this->config_;
  Rng rng = Rng::derive(c.init_seed, kFCNInitStream);
  const Index w = c.trunk_width;
  conv1_ = this->add_conv("conv1", 3, w, 3, 1, 1, rng);
  conv2_ = this->add_conv("conv2", w, w, 3, 1, 1, rng);
  conv3_ = this->add_conv("conv3", w, w, 3, 1, 1, rng);
  head_hidden_ = this->add_dense("head.hidden", w + c.condition_dim, c.readout_hidden, rng);
  head_out_ = this->add_dense("head.out", c.readout_hidden, 2 * c.targets, rng);
}

template <typename Scalar>
ModelOutput<Scalar> PlainFCNModel<Scalar>::forward(Graph<Scalar>& g, const Tensor<Scalar>& image,
                                                   const Vector& condition) {
  const Var<Scalar> img = this->input_image(g, image);
  const Var<Scalar> cond = this->input_condition(g, condition);
  Var<Scalar> h = relu(this->apply(g, conv1_, img));
  h = relu(this->apply(g, conv2_, h));
  h = relu(this->apply(g, conv3_, h));
  const Var<Scalar> pooled = spatial_mean(h);
  const Var<Scalar> hidden = tanh(this->apply(g, head_hidden_, with_condition(pooled, cond)));
  return {this->to_cm(this->apply(g, head_out_, hidden)), std::nullopt};
}

#define GAL_INSTANTIATE_BASELINES(S)                                           \
  template Var<S> spatial_soft_argmax<S>(const Var<S>&, S);                    \
  template Tensor<S> reconstruction_target<S>(const Tensor<S>&, Index);        \
  template class KeyPointModel<S>;                                             \
  template class ConvAEModel<S>;                                               \
  template class PlainFCNModel<S>;

GAL_INSTANTIATE_BASELINES(float)
GAL_INSTANTIATE_BASELINES(double)

}  // namespace gal
