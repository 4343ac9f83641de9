#pragma once

#include <vector>

#include "gal/attention.hpp"
#include "gal/model.hpp"

namespace gal {

/// Soft-argmax of each channel of a [q,H,W] map: per-channel softmax2d at
/// temperature T, then the expected coordinate via extract(). Returns q
/// points as a flat [2q] vector.
template <typename Scalar>
Var<Scalar> spatial_soft_argmax(const Var<Scalar>& maps, Scalar temperature);

/// Grayscale box-downsampled reconstruction target, flattened [extent^2].
template <typename Scalar>
Tensor<Scalar> reconstruction_target(const Tensor<Scalar>& image, Index extent);

/// Vanilla FCN (no coordinate channels) + spatial softmax keypoints + MLP.
/// With `with_decoder` it is the deep spatial autoencoder: the keypoints also
/// feed an MLP decoder whose reconstruction error is returned as an auxiliary loss.
template <typename Scalar>
class KeyPointModel final : public Model<Scalar> {
 public:
  using Vector = VectorX<Scalar>;
  explicit KeyPointModel(ModelConfig config);

  ModelOutput<Scalar> forward(Graph<Scalar>& g, const Tensor<Scalar>& image, const Vector& condition) override;

  /// Keypoints [2q] in normalized image coordinates.
  Var<Scalar> keypoints(Graph<Scalar>& g, const Var<Scalar>& image);
  /// Decoder output [recon_extent^2]; only for the autoencoder variant.
  Var<Scalar> reconstruct(Graph<Scalar>& g, const Var<Scalar>& points);
  bool has_decoder() const { return with_decoder_; }

 private:
  bool with_decoder_;
  ConvLayer conv1_, conv2_, conv3_;
  DenseLayer head_hidden_, head_out_;
  DenseLayer decoder_hidden_, decoder_out_;
};

/// Strided conv encoder to a single latent vector, MLP coordinate head and
/// MLP decoder.
template <typename Scalar>
class ConvAEModel final : public Model<Scalar> {
 public:
  using Vector = VectorX<Scalar>;
  explicit ConvAEModel(ModelConfig config);

  ModelOutput<Scalar> forward(Graph<Scalar>& g, const Tensor<Scalar>& image, const Vector& condition) override;

  Var<Scalar> encode(Graph<Scalar>& g, const Var<Scalar>& image);
  Var<Scalar> reconstruct(Graph<Scalar>& g, const Var<Scalar>& latent);

 private:
  ConvLayer conv1_, conv2_, conv3_;
  Index flat_ = 0;
  DenseLayer latent_, head_hidden_, head_out_, decoder_hidden_, decoder_out_;
};

/// Three conv layers, global average pooling and an MLP. No positional input.
template <typename Scalar>
class PlainFCNModel final : public Model<Scalar> {
 public:
  using Vector = VectorX<Scalar>;
  explicit PlainFCNModel(ModelConfig config);

  ModelOutput<Scalar> forward(Graph<Scalar>& g, const Tensor<Scalar>& image, const Vector& condition) override;

 private:
  ConvLayer conv1_, conv2_, conv3_;
  DenseLayer head_hidden_, head_out_;
};

}  // namespace gal
