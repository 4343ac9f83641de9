#pragma once

// Independent reference implementations used by the tests. These deliberately
// use plain loops over std::vector and never call into the library's ops.

#include <cmath>
#include <vector>

#include "gal/random.hpp"
#include "gal/scene.hpp"
#include "gal/tensor.hpp"

namespace gal::test {

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.data[i] = rng.uniform(lo, hi);
  return t;
}

/// Six nested loops over output channel, output pixel, input channel and kernel taps.
inline std::vector<double> naive_conv2d(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>& b,
                                        Index stride, Index pad, Index& oh, Index& ow) {
  const Index cin = x.shape[0], h = x.shape[1], w = x.shape[2];
  const Index cout = k.shape[0], kh = k.shape[2], kw = k.shape[3];
  oh = (h + 2 * pad - kh) / stride + 1;
  ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(cout * oh * ow));
  for (Index co = 0; co < cout; ++co) {
    for (Index y = 0; y < oh; ++y) {
      for (Index xo = 0; xo < ow; ++xo) {
        double acc = b.data[co];
        for (Index ci = 0; ci < cin; ++ci) {
          for (Index i = 0; i < kh; ++i) {
            for (Index j = 0; j < kw; ++j) {
              const Index iy = y * stride + i - pad, ix = xo * stride + j - pad;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += k.data[((co * cin + ci) * kh + i) * kw + j] * x.data[(ci * h + iy) * w + ix];
            }
          }
        }
        out[static_cast<std::size_t>((co * oh + y) * ow + xo)] = acc;
      }
    }
  }
  return out;
}

inline double coord_formula(Index i, Index n) { return n == 1 ? -1.0 : 2.0 * static_cast<double>(i) / (n - 1) - 1.0; }

/// exp-normalize of s / t over all entries, computed directly.
inline std::vector<double> naive_softmax(const std::vector<double>& s, double t) {
  double mx = s[0];
  for (double v : s) mx = std::max(mx, v);
  std::vector<double> e(s.size());
  double z = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) z += (e[i] = std::exp((s[i] - mx) / t));
  for (double& v : e) v /= z;
  return e;
}

/// Heatmap from per-pixel dot products, scaled by 1/sqrt(H*W).
inline std::vector<double> naive_selection(const Tensor<double>& keys, const std::vector<double>& query, double t) {
  const Index d = keys.shape[0], h = keys.shape[1], w = keys.shape[2];
  std::vector<double> scores(static_cast<std::size_t>(h * w));
  for (Index v = 0; v < h; ++v) {
    for (Index u = 0; u < w; ++u) {
      double acc = 0.0;
      for (Index c = 0; c < d; ++c) acc += keys.data[(c * h + v) * w + u] * query[static_cast<std::size_t>(c)];
      scores[static_cast<std::size_t>(v * w + u)] = acc / std::sqrt(static_cast<double>(h * w));
    }
  }
  return naive_softmax(scores, t);
}

/// Double loop over (u, v) accumulating weight * value per channel.
inline std::vector<double> naive_expectation(const std::vector<double>& weights, const Tensor<double>& values) {
  const Index c = values.shape[0], h = values.shape[1], w = values.shape[2];
  std::vector<double> out(static_cast<std::size_t>(c), 0.0);
  for (Index u = 0; u < w; ++u) {
    for (Index v = 0; v < h; ++v) {
      for (Index k = 0; k < c; ++k) {
        out[static_cast<std::size_t>(k)] += weights[static_cast<std::size_t>(v * w + u)] * values.data[(k * h + v) * w + u];
      }
    }
  }
  return out;
}

/// Expected (x, y) of a normalized heatmap against the [-1,1] coordinate formula.
inline std::pair<double, double> naive_soft_argmax(const std::vector<double>& weights, Index h, Index w) {
  double x = 0.0, y = 0.0;
  for (Index u = 0; u < w; ++u) {
    for (Index v = 0; v < h; ++v) {
      x += weights[static_cast<std::size_t>(v * w + u)] * coord_formula(u, w);
      y += weights[static_cast<std::size_t>(v * w + u)] * coord_formula(v, h);
    }
  }
  return {x, y};
}

/// Centroid (column, row) of pixels exactly matching `color`, restricted to
/// columns in [u_lo, u_hi].
inline std::pair<double, double> color_centroid(const Tensor<float>& image, const Eigen::Vector3f& color,
                                                Index u_lo = 0, Index u_hi = -1) {
  const Index h = image.shape[1], w = image.shape[2];
  if (u_hi < 0) u_hi = w - 1;
  double su = 0.0, sv = 0.0, n = 0.0;
  for (Index v = 0; v < h; ++v) {
    for (Index u = u_lo; u <= u_hi; ++u) {
      if (image.at(0, v, u) == color[0] && image.at(1, v, u) == color[1] && image.at(2, v, u) == color[2]) {
        su += static_cast<double>(u);
        sv += static_cast<double>(v);
        n += 1.0;
      }
    }
  }
  if (n == 0.0) return {-1e9, -1e9};
  return {su / n, sv / n};
}

/// Centroid of pixels matching `color` whose centers lie within `radius`
/// pixels of (cu, cv).
inline std::pair<double, double> color_centroid_near(const Tensor<float>& image, const Eigen::Vector3f& color,
                                                     double cu, double cv, double radius) {
  const Index h = image.shape[1], w = image.shape[2];
  double su = 0.0, sv = 0.0, n = 0.0;
  for (Index v = 0; v < h; ++v) {
    for (Index u = 0; u < w; ++u) {
      if (std::hypot(static_cast<double>(u) - cu, static_cast<double>(v) - cv) > radius) continue;
      if (image.at(0, v, u) == color[0] && image.at(1, v, u) == color[1] && image.at(2, v, u) == color[2]) {
        su += static_cast<double>(u);
        sv += static_cast<double>(v);
        n += 1.0;
      }
    }
  }
  if (n == 0.0) return {-1e9, -1e9};
  return {su / n, sv / n};
}

}  // namespace gal::test
