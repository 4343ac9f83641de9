#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gal/graph.hpp"

namespace gal {

/// Builds a scalar on a fresh graph. Tensors under test must enter through
/// `Graph::leaf` so that backward reaches them.
template <typename Scalar>
using TensorProgram = std::function<Var<Scalar>(Graph<Scalar>&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  Index worst_element = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t elements_checked = 0;
  /// Elements that only agreed after refining the step (a kink inside the stencil).
  std::size_t refined = 0;
};

template <typename Scalar>
Scalar evaluate_program(const TensorProgram<Scalar>& fn) {
  Graph<Scalar> g;
  return fn(g).value()[0];
}

/// Gradients smaller than this are compared in absolute terms. Central
/// differences at step 1e-5 carry O(1e-11) truncation error, so relative
/// error on entries near 1e-9 is meaningless.
inline constexpr double kGradCheckFloor = 1e-6;

/// Compares reverse-mode gradients against central differences over every
/// element of every tensor in `inputs`. Relative error per element is
/// |a - n| / max(|a|, |n|, kGradCheckFloor).
///
/// A ReLU pre-activation crossing zero inside the stencil makes the central
/// difference average two slopes. Elements above `refine_above` are therefore
/// re-measured at step/10 and step/100 and keep their smallest error; a wrong
/// analytic gradient disagrees at every step.
template <typename Scalar>
GradCheckReport grad_check_report(const TensorProgram<Scalar>& fn, std::span<Tensor<Scalar>* const> inputs,
                                  double step = 1e-5, double refine_above = 1e-4) {
  for (auto* t : inputs) {
    t->requires_grad = true;
    t->zero_grad();
  }
  {
    Graph<Scalar> g;
    g.backward(fn(g));
  }
  // Forward-only evaluations below skip recording backward closures.
  for (auto* t : inputs) t->requires_grad = false;
  GradCheckReport report;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor<Scalar>& t = *inputs[ti];
    const VectorX<Scalar> analytic = t.grad ? *t.grad : VectorX<Scalar>::Zero(t.size());
    for (Index i = 0; i < t.size(); ++i) {
      const Scalar saved = t.data[i];
      auto central = [&](double hh) {
        t.data[i] = saved + static_cast<Scalar>(hh);
        const double up = static_cast<double>(evaluate_program(fn));
        t.data[i] = saved - static_cast<Scalar>(hh);
        const double down = static_cast<double>(evaluate_program(fn));
        t.data[i] = saved;
        return (up - down) / (2.0 * hh);
      };
      const double a = static_cast<double>(analytic[i]);
      auto rel_error = [a](double numeric) {
        return std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      };
      double numeric = central(step);
      double rel = rel_error(numeric);
      if (rel > refine_above) {
        for (double hh : {step / 10.0, step / 100.0}) {
          const double n2 = central(hh);
          if (rel_error(n2) < rel) numeric = n2, rel = rel_error(n2);
        }
        if (rel <= refine_above) ++report.refined;
      }
      ++report.elements_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = ti;
        report.worst_element = i;
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
    }
  }
  for (auto* t : inputs) t->requires_grad = true;
  return report;
}

template <typename Scalar>
double grad_check(const TensorProgram<Scalar>& fn, std::span<Tensor<Scalar>* const> inputs, double step = 1e-5) {
  return grad_check_report(fn, inputs, step).max_rel_error;
}

template <typename Scalar>
double grad_check(const TensorProgram<Scalar>& fn, std::vector<Tensor<Scalar>*> inputs, double step = 1e-5) {
  return grad_check(fn, std::span<Tensor<Scalar>* const>(inputs), step);
}

}  // namespace gal
