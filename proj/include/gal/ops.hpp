#pragma once

// Differentiable operations over Graph/Var. Every op validates shapes eagerly,
// computes its forward value, and records a closure that pushes the output
// gradient to whichever inputs need one.

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gal/graph.hpp"

namespace gal {

namespace detail {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

inline void require_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                         ", got " + to_string(s));
  }
}

inline void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

template <typename Scalar>
void require_same_graph(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (&a.graph() != &b.graph()) throw ContractError(std::string(op) + ": operands live on different graphs");
}

}  // namespace detail

/// Linear map of pixel index `i` on an axis of extent `n` onto [-1, 1].
/// A single-pixel axis has no span to normalize over and maps to -1, the
/// start of the range.
inline double normalized_coordinate(Index i, Index n) {
  if (n <= 1) return -1.0;
  return 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0;
}

/// Two-channel Cartesian embedding: channel 0 holds x (column), channel 1 holds y (row).
template <typename Scalar>
Tensor<Scalar> coordinate_grid(Index height, Index width) {
  Tensor<Scalar> grid({2, height, width});
  for (Index v = 0; v < height; ++v) {
    for (Index u = 0; u < width; ++u) {
      grid.at(0, v, u) = static_cast<Scalar>(normalized_coordinate(u, width));
      grid.at(1, v, u) = static_cast<Scalar>(normalized_coordinate(v, height));
    }
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same(a.shape(), b.shape(), "add");
  detail::require_same_graph(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return a.graph().record("add", a.shape(), a.value() + b.value(), {ia, ib},
                          [ia, ib](Graph<Scalar>& g, const VectorX<Scalar>& go) {
                            if (g.needs_grad(ia)) g.grad(ia) += go;
                            if (g.needs_grad(ib)) g.grad(ib) += go;
                          });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same(a.shape(), b.shape(), "sub");
  detail::require_same_graph(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return a.graph().record("sub", a.shape(), a.value() - b.value(), {ia, ib},
                          [ia, ib](Graph<Scalar>& g, const VectorX<Scalar>& go) {
                            if (g.needs_grad(ia)) g.grad(ia) += go;
                            if (g.needs_grad(ib)) g.grad(ib) -= go;
                          });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same(a.shape(), b.shape(), "mul");
  detail::require_same_graph(a, b, "mul");
  const int ia = a.id(), ib = b.id();
  VectorX<Scalar> out = a.value().cwiseProduct(b.value());
  return a.graph().record("mul", a.shape(), std::move(out), {ia, ib},
                          [ia, ib](Graph<Scalar>& g, const VectorX<Scalar>& go) {
                            if (g.needs_grad(ia)) g.grad(ia) += go.cwiseProduct(g.value(ib));
                            if (g.needs_grad(ib)) g.grad(ib) += go.cwiseProduct(g.value(ia));
                          });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar factor) {
  const int ia = a.id();
  return a.graph().record("scale", a.shape(), a.value() * factor, {ia},
                          [ia, factor](Graph<Scalar>& g, const VectorX<Scalar>& go) {
                            g.grad(ia) += go * factor;
                          });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  const int ia = a.id();
  VectorX<Scalar> out = a.value().cwiseMax(Scalar(0));
  return a.graph().record("relu", a.shape(), std::move(out), {ia},
                          [ia](Graph<Scalar>& g, const VectorX<Scalar>& go) {
                            const auto& x = g.value(ia);
                            g.grad(ia) += (x.array() > Scalar(0)).select(go, Scalar(0)).matrix();
                          });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& a) {
  const int ia = a.id();
  VectorX<Scalar> out = a.value().array().tanh().matrix();
  return a.graph().record("tanh", a.shape(), out, {ia},
                          [ia, out](Graph<Scalar>& g, const VectorX<Scalar>& go) {
                            g.grad(ia) += (go.array() * (Scalar(1) - out.array().square())).matrix();
                          });
}

// ---------------------------------------------------------------------------
// Reductions and shape plumbing

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  const int ia = a.id();
  VectorX<Scalar> out(1);
  out[0] = a.value().sum();
  return a.graph().record("sum", {1}, std::move(out), {ia},
                          [ia](Graph<Scalar>& g, const VectorX<Scalar>& go) {
                            g.grad(ia).array() += go[0];
                          });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.size()));
}

/// [C,H,W] -> [C], summing over pixels.
template <typename Scalar>
Var<Scalar> spatial_sum(const Var<Scalar>& a) {
  detail::require_rank(a.shape(), 3, "spatial_sum", "input");
  const Index c = a.dim(0), p = a.dim(1) * a.dim(2);
  const int ia = a.id();
  Eigen::Map<const detail::MatrixX<Scalar>> x(a.value().data(), p, c);
  VectorX<Scalar> out = x.colwise().sum().transpose();
  return a.graph().record("spatial_sum", {c}, std::move(out), {ia},
                          [ia, c, p](Graph<Scalar>& g, const VectorX<Scalar>& go) {
                            Eigen::Map<detail::MatrixX<Scalar>> gx(g.grad(ia).data(), p, c);
                            gx.rowwise() += go.transpose();
                          });
}

/// [C,H,W] -> [C], global average pooling.
template <typename Scalar>
Var<Scalar> spatial_mean(const Var<Scalar>& a) {
  detail::require_rank(a.shape(), 3, "spatial_mean", "input");
  return scale(spatial_sum(a), Scalar(1) / static_cast<Scalar>(a.dim(1) * a.dim(2)));
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  const int ia = a.id();
  return a.graph().record("reshape", std::move(shape), a.value(), {ia},
                          [ia](Graph<Scalar>& g, const VectorX<Scalar>& go) { g.grad(ia) += go; });
}

/// Concatenates along axis 0; trailing extents must agree.
template <typename Scalar>
Var<Scalar> concat(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  const Shape& first = parts.front().shape();
  const Shape tail(first.begin() + 1, first.end());
  Index lead = 0, total = 0;
  std::vector<int> ids;
  std::vector<Index> offsets;
  for (const auto& p : parts) {
    detail::require_same_graph(parts.front(), p, "concat");
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(tail.begin(), tail.end(), s.begin() + 1)) {
      throw DimensionError("concat: incompatible shapes " + to_string(first) + " and " + to_string(s));
    }
    lead += s[0];
    offsets.push_back(total);
    total += p.size();
    ids.push_back(p.id());
  }
  VectorX<Scalar> out(total);
  for (std::size_t i = 0; i < parts.size(); ++i) out.segment(offsets[i], parts[i].size()) = parts[i].value();
  Shape shape = first;
  shape[0] = lead;
  return parts.front().graph().record(
      "concat", std::move(shape), std::move(out), ids,
      [ids, offsets](Graph<Scalar>& g, const VectorX<Scalar>& go) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (!g.needs_grad(ids[i])) continue;
          auto& gi = g.grad(ids[i]);
          gi += go.segment(offsets[i], gi.size());
        }
      });
}

template <typename Scalar>
Var<Scalar> concat(std::initializer_list<Var<Scalar>> parts) {
  std::vector<Var<Scalar>> v(parts);
  return concat(std::span<const Var<Scalar>>(v));
}

/// Contiguous sub-range of a rank-1 tensor.
template <typename Scalar>
Var<Scalar> slice(const Var<Scalar>& a, Index offset, Index length) {
  detail::require_rank(a.shape(), 1, "slice", "input");
  if (offset < 0 || length <= 0 || offset + length > a.size()) {
    throw DimensionError("slice: range [" + std::to_string(offset) + "," + std::to_string(offset + length) +
                         ") outside " + to_string(a.shape()));
  }
  const int ia = a.id();
  return a.graph().record("slice", {length}, a.value().segment(offset, length), {ia},
                          [ia, offset, length](Graph<Scalar>& g, const VectorX<Scalar>& go) {
                            g.grad(ia).segment(offset, length) += go;
                          });
}

/// Channel `c` of a [C,H,W] tensor as [H,W].
template <typename Scalar>
Var<Scalar> channel(const Var<Scalar>& a, Index c) {
  detail::require_rank(a.shape(), 3, "channel", "input");
  if (c < 0 || c >= a.dim(0)) throw DimensionError("channel: index out of range for " + to_string(a.shape()));
  const Index p = a.dim(1) * a.dim(2);
  const int ia = a.id();
  return a.graph().record("channel", {a.dim(1), a.dim(2)}, a.value().segment(c * p, p), {ia},
                          [ia, c, p](Graph<Scalar>& g, const VectorX<Scalar>& go) {
                            g.grad(ia).segment(c * p, p) += go;
                          });
}

// ---------------------------------------------------------------------------
// Layers

/// Affine map weights[M,N] * input[N] + bias[M].
template <typename Scalar>
Var<Scalar> dense(const Var<Scalar>& x, const Var<Scalar>& weights, const Var<Scalar>& bias) {
  detail::require_rank(x.shape(), 1, "dense", "input");
  detail::require_rank(weights.shape(), 2, "dense", "weights");
  detail::require_rank(bias.shape(), 1, "dense", "bias");
  const Index m = weights.dim(0), n = weights.dim(1);
  if (x.dim(0) != n || bias.dim(0) != m) {
    throw DimensionError("dense: input " + to_string(x.shape()) + ", weights " + to_string(weights.shape()) +
                         ", bias " + to_string(bias.shape()) + " do not conform");
  }
  // Row-major [M,N] storage viewed column-major is W^T (N x M).
  Eigen::Map<const detail::MatrixX<Scalar>> wt(weights.value().data(), n, m);
  VectorX<Scalar> out = wt.transpose() * x.value() + bias.value();
  const int ix = x.id(), iw = weights.id(), ib = bias.id();
  return x.graph().record("dense", {m}, std::move(out), {ix, iw, ib},
                          [ix, iw, ib, m, n](Graph<Scalar>& g, const VectorX<Scalar>& go) {
                            if (g.needs_grad(ix)) {
                              Eigen::Map<const detail::MatrixX<Scalar>> wt(g.value(iw).data(), n, m);
                              g.grad(ix).noalias() += wt * go;
                            }
                            if (g.needs_grad(iw)) {
                              Eigen::Map<detail::MatrixX<Scalar>> gwt(g.grad(iw).data(), n, m);
                              gwt.noalias() += g.value(ix) * go.transpose();
                            }
                            if (g.needs_grad(ib)) g.grad(ib) += go;
                          });
}

/// 2-D cross-correlation (no kernel flip) with zero padding.
/// input [C_in,H,W], kernel [C_out,C_in,kH,kW], bias [C_out] -> [C_out,H',W'].
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& input, const Var<Scalar>& kernel, const Var<Scalar>& bias, Index stride = 1,
                   Index padding = 0) {
  using Matrix = detail::MatrixX<Scalar>;
  detail::require_rank(input.shape(), 3, "conv2d", "input");
  detail::require_rank(kernel.shape(), 4, "conv2d", "kernel");
  detail::require_rank(bias.shape(), 1, "conv2d", "bias");
  if (stride < 1) throw ParameterError("conv2d: stride must be positive");
  if (padding < 0) throw ParameterError("conv2d: padding must be non-negative");
  const Index cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const Index cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != cin) {
    throw DimensionError("conv2d: kernel " + to_string(kernel.shape()) + " expects " +
                         std::to_string(kernel.dim(1)) + " input channels but input is " + to_string(input.shape()));
  }
  if (bias.dim(0) != cout) {
    throw DimensionError("conv2d: bias " + to_string(bias.shape()) + " does not match kernel " +
                         to_string(kernel.shape()));
  }
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    throw DimensionError("conv2d: kernel " + to_string(kernel.shape()) + " exceeds padded input " +
                         to_string(input.shape()));
  }
  const Index oh = (h + 2 * padding - kh) / stride + 1;
  const Index ow = (w + 2 * padding - kw) / stride + 1;
  const Index p = oh * ow, ck = cin * kh * kw;

  // colT(p, (c,i,j)) = padded input at (c, y*stride+i-pad, x*stride+j-pad).
  Matrix colt = Matrix::Zero(p, ck);
  const Scalar* x = input.value().data();
  for (Index c = 0; c < cin; ++c) {
    for (Index i = 0; i < kh; ++i) {
      for (Index j = 0; j < kw; ++j) {
        Scalar* col = colt.col((c * kh + i) * kw + j).data();
        for (Index y = 0; y < oh; ++y) {
          const Index iy = y * stride + i - padding;
          if (iy < 0 || iy >= h) continue;
          const Scalar* row = x + (c * h + iy) * w;
          for (Index xo = 0; xo < ow; ++xo) {
            const Index ix = xo * stride + j - padding;
            if (ix >= 0 && ix < w) col[y * ow + xo] = row[ix];
          }
        }
      }
    }
  }
  Eigen::Map<const Matrix> kt(kernel.value().data(), ck, cout);
  VectorX<Scalar> out(p * cout);
  Eigen::Map<Matrix> outt(out.data(), p, cout);
  outt.noalias() = colt * kt;
  outt.rowwise() += bias.value().transpose();

  const int ii = input.id(), ik = kernel.id(), ib = bias.id();
  return input.graph().record(
      "conv2d", {cout, oh, ow}, std::move(out), {ii, ik, ib},
      [=, colt = std::move(colt)](Graph<Scalar>& g, const VectorX<Scalar>& go) {
        Eigen::Map<const Matrix> got(go.data(), p, cout);
        if (g.needs_grad(ik)) {
          Eigen::Map<Matrix> gkt(g.grad(ik).data(), ck, cout);
          gkt.noalias() += colt.transpose() * got;
        }
        if (g.needs_grad(ib)) g.grad(ib) += got.colwise().sum().transpose();
        if (g.needs_grad(ii)) {
          Eigen::Map<const Matrix> kt(g.value(ik).data(), ck, cout);
          const Matrix gcol = got * kt.transpose();
          Scalar* gx = g.grad(ii).data();
          for (Index c = 0; c < cin; ++c) {
            for (Index i = 0; i < kh; ++i) {
              for (Index j = 0; j < kw; ++j) {
                const Scalar* col = gcol.col((c * kh + i) * kw + j).data();
                for (Index y = 0; y < oh; ++y) {
                  const Index iy = y * stride + i - padding;
                  if (iy < 0 || iy >= h) continue;
                  Scalar* row = gx + (c * h + iy) * w;
                  for (Index xo = 0; xo < ow; ++xo) {
                    const Index ix = xo * stride + j - padding;
                    if (ix >= 0 && ix < w) row[ix] += col[y * ow + xo];
                  }
                }
              }
            }
          }
        }
      });
}

/// Appends x and y coordinate channels (see coordinate_grid). Only the
/// original channels carry gradient.
template <typename Scalar>
Var<Scalar> concat_coords(const Var<Scalar>& input) {
  detail::require_rank(input.shape(), 3, "concat_coords", "input");
  const Index c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const Tensor<Scalar> grid = coordinate_grid<Scalar>(h, w);
  VectorX<Scalar> out(input.size() + grid.size());
  out << input.value(), grid.data;
  const int ii = input.id();
  const Index n = input.size();
  return input.graph().record("concat_coords", {c + 2, h, w}, std::move(out), {ii},
                              [ii, n](Graph<Scalar>& g, const VectorX<Scalar>& go) {
                                g.grad(ii) += go.head(n);
                              });
}

/// Max-shifted softmax over all pixels of scores[H,W] / temperature.
/// The normalizer is accumulated in double so 32-bit heatmaps still sum to 1
/// within 1e-6.
template <typename Scalar>
Var<Scalar> softmax2d(const Var<Scalar>& scores, Scalar temperature) {
  detail::require_rank(scores.shape(), 2, "softmax2d", "scores");
  if (!(temperature > Scalar(0))) {
    throw ParameterError("softmax2d: temperature must be positive, got " + std::to_string(temperature));
  }
  const auto& s = scores.value();
  const double t = static_cast<double>(temperature);
  const double shift = static_cast<double>(s.maxCoeff()) / t;
  Eigen::VectorXd e(s.size());
  for (Index i = 0; i < s.size(); ++i) e[i] = std::exp(static_cast<double>(s[i]) / t - shift);
  const double z = e.sum();
  VectorX<Scalar> out = (e / z).template cast<Scalar>();
  const int is = scores.id();
  return scores.graph().record("softmax2d", scores.shape(), out, {is},
                               [is, out, temperature](Graph<Scalar>& g, const VectorX<Scalar>& go) {
                                 const Scalar dot = go.dot(out);
                                 g.grad(is) += (out.array() * (go.array() - dot) / temperature).matrix();
                               });
}

/// Per-pixel inner product of features[D,H,W] with query[D] -> [H,W].
template <typename Scalar>
Var<Scalar> pixel_dot(const Var<Scalar>& features, const Var<Scalar>& query) {
  using Matrix = detail::MatrixX<Scalar>;
  detail::require_rank(features.shape(), 3, "pixel_dot", "features");
  detail::require_rank(query.shape(), 1, "pixel_dot", "query");
  const Index d = features.dim(0), h = features.dim(1), w = features.dim(2), p = h * w;
  if (query.dim(0) != d) {
    throw DimensionError("pixel_dot: features " + to_string(features.shape()) + " vs query " +
                         to_string(query.shape()));
  }
  Eigen::Map<const Matrix> f(features.value().data(), p, d);
  VectorX<Scalar> out = f * query.value();
  const int iff = features.id(), iq = query.id();
  return features.graph().record("pixel_dot", {h, w}, std::move(out), {iff, iq},
                                 [iff, iq, p, d](Graph<Scalar>& g, const VectorX<Scalar>& go) {
                                   if (g.needs_grad(iff)) {
                                     Eigen::Map<Matrix> gf(g.grad(iff).data(), p, d);
                                     gf.noalias() += go * g.value(iq).transpose();
                                   }
                                   if (g.needs_grad(iq)) {
                                     Eigen::Map<const Matrix> f(g.value(iff).data(), p, d);
                                     g.grad(iq).noalias() += f.transpose() * go;
                                   }
                                 });
}

/// Expectation of values[C,H,W] under weights[H,W]: out(c) = sum_p w(p) v(c,p).
template <typename Scalar>
Var<Scalar> spatial_weighted_sum(const Var<Scalar>& weights, const Var<Scalar>& values) {
  using Matrix = detail::MatrixX<Scalar>;
  detail::require_rank(weights.shape(), 2, "spatial_weighted_sum", "weights");
  detail::require_rank(values.shape(), 3, "spatial_weighted_sum", "values");
  const Index c = values.dim(0), p = values.dim(1) * values.dim(2);
  if (values.dim(1) != weights.dim(0) || values.dim(2) != weights.dim(1)) {
    throw DimensionError("spatial_weighted_sum: weights " + to_string(weights.shape()) + " vs values " +
                         to_string(values.shape()));
  }
  Eigen::Map<const Matrix> v(values.value().data(), p, c);
  VectorX<Scalar> out = v.transpose() * weights.value();
  const int iw = weights.id(), iv = values.id();
  return weights.graph().record("spatial_weighted_sum", {c}, std::move(out), {iw, iv},
                                [iw, iv, p, c](Graph<Scalar>& g, const VectorX<Scalar>& go) {
                                  if (g.needs_grad(iw)) {
                                    Eigen::Map<const Matrix> v(g.value(iv).data(), p, c);
                                    g.grad(iw).noalias() += v * go;
                                  }
                                  if (g.needs_grad(iv)) {
                                    Eigen::Map<Matrix> gv(g.grad(iv).data(), p, c);
                                    gv.noalias() += g.value(iw) * go.transpose();
                                  }
                                });
}

}  // namespace gal
