#include "gal/verification.hpp"

#include <chrono>

#include "gal/baselines.hpp"
#include "gal/gradcheck.hpp"
#include "gal/training.hpp"

namespace gal {

namespace {

using G = Graph<double>;
using V = Var<double>;

Tensor<double> random_tensor(Shape shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.data[i] = rng.uniform(-1.0, 1.0);
  return t;
}

template <typename F>
GradCheckEntry timed(std::string name, F&& run) {
  const auto start = std::chrono::steady_clock::now();
  GradCheckEntry e;
  e.name = std::move(name);
  const GradCheckReport r = run();
  e.max_rel_error = r.max_rel_error;
  e.elements = r.elements_checked;
  e.refined = r.refined;
  e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return e;
}

// Ours runs a conditioned task so the condition MLP is covered; the keypoint
// models run the multi-target task.
Task miniature_task(ModelKind kind) {
  switch (kind) {
    case ModelKind::Ours:
    case ModelKind::ConvAE:
    case ModelKind::PlainFCN:
      return Task::SelectedType;
    default:
      return Task::MultipleObject;
  }
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed,
                                                const std::function<void(const GradCheckEntry&)>& on_entry) {
  std::vector<GradCheckEntry> out;
  auto record = [&](GradCheckEntry e) {
    if (on_entry) on_entry(e);
    out.push_back(std::move(e));
  };

  Rng rng(seed);
  Tensor<double> a = random_tensor({3, 4, 4}, rng), b = random_tensor({3, 4, 4}, rng);
  Tensor<double> q = random_tensor({3}, rng), k = random_tensor({2, 3, 3, 3}, rng), kb = random_tensor({2}, rng);
  Tensor<double> w = random_tensor({5, 6}, rng), wb = random_tensor({5}, rng), r = random_tensor({6}, rng);
  Tensor<double> t = random_tensor({6}, rng);
  const std::vector<Tensor<double>*> inputs{&a, &b, &q, &k, &kb, &w, &wb, &r, &t};

  const std::vector<std::pair<std::string, TensorProgram<double>>> ops = {
      {"add", [&](G& g) { V y = add(g.leaf(a), g.leaf(b)); return sum(mul(y, y)); }},
      {"sub", [&](G& g) { V y = sub(g.leaf(a), g.leaf(b)); return sum(mul(y, y)); }},
      {"mul", [&](G& g) { return sum(mul(g.leaf(a), g.leaf(b))); }},
      {"scale", [&](G& g) { V y = scale(g.leaf(a), 1.7); return sum(mul(y, y)); }},
      {"relu", [&](G& g) { return sum(mul(relu(g.leaf(a)), g.leaf(b))); }},
      {"tanh", [&](G& g) { return sum(mul(tanh(g.leaf(a)), g.leaf(b))); }},
      {"sum", [&](G& g) { V y = sum(g.leaf(a)); return mul(y, y); }},
      {"mean", [&](G& g) { V y = g.leaf(a); return mean(mul(y, y)); }},
      {"spatial_sum", [&](G& g) { V y = spatial_sum(g.leaf(a)); return sum(mul(y, y)); }},
      {"spatial_mean", [&](G& g) { V y = spatial_mean(g.leaf(a)); return sum(mul(y, y)); }},
      {"concat", [&](G& g) { V y = concat({g.leaf(a), g.leaf(b)}); return sum(mul(y, y)); }},
      {"reshape", [&](G& g) { return sum(mul(reshape(g.leaf(a), {48}), reshape(g.leaf(b), {48}))); }},
      {"slice", [&](G& g) { return sum(mul(slice(reshape(g.leaf(a), {48}), 5, 6), g.leaf(r))); }},
      {"channel", [&](G& g) { V y = channel(g.leaf(a), 1); return sum(mul(y, y)); }},
      {"concat_coords", [&](G& g) { V y = concat_coords(g.leaf(a)); return mean(mul(y, y)); }},
      {"conv2d", [&](G& g) { V y = conv2d(g.leaf(a), g.leaf(k), g.leaf(kb), 1, 1); return mean(mul(y, y)); }},
      {"conv2d_stride2", [&](G& g) { V y = conv2d(g.leaf(a), g.leaf(k), g.leaf(kb), 2, 0); return mean(mul(y, y)); }},
      {"dense", [&](G& g) { V y = dense(g.leaf(r), g.leaf(w), g.leaf(wb)); return sum(mul(y, y)); }},
      {"softmax2d", [&](G& g) { return sum(mul(softmax2d(channel(g.leaf(a), 0), 0.5), channel(g.leaf(b), 0))); }},
      {"pixel_dot", [&](G& g) { V y = pixel_dot(g.leaf(a), g.leaf(q)); return sum(mul(y, y)); }},
      {"spatial_weighted_sum",
       [&](G& g) { V y = spatial_weighted_sum(channel(g.leaf(b), 2), g.leaf(a)); return sum(mul(y, y)); }},
      {"spatial_soft_argmax", [&](G& g) { return sum(mul(spatial_soft_argmax(g.leaf(a), 0.5), g.leaf(t))); }},
      {"mse_loss", [&](G& g) { return mse_loss(scale(g.leaf(r), 30.0), scale(g.leaf(t), 30.0)); }},
  };
  for (const auto& [name, fn] : ops) {
    record(timed("op/" + name, [&] { return grad_check_report<double>(fn, std::span<Tensor<double>* const>(inputs)); }));
  }

  const Canvas canvas{16, 16};
  for (ModelKind kind : kAllModelKinds) {
    const Task task = miniature_task(kind);
    const auto ds = generate_dataset(TaskConfig::of(task), 1, seed, canvas);
    const SceneSample& s = ds.samples[0];
    const auto model = make_model<double>(ModelConfig::for_task(kind, task, canvas, seed));
    VectorX<double> target(2 * static_cast<Index>(s.targets.size()));
    for (std::size_t i = 0; i < s.targets.size(); ++i) target.segment<2>(2 * static_cast<Index>(i)) = s.targets[i];
    const Tensor<double> image = s.image.cast<double>();
    const VectorX<double> cond = s.condition.cast<double>();
    const double recon_weight = TrainConfig{}.reconstruction_weight;
    TensorProgram<double> fn = [&](G& g) {
      const auto o = model->forward(g, image, cond);
      V loss = mse_loss(o.coords_cm, g.constant({target.size()}, target));
      if (o.reconstruction_loss) loss = add(loss, scale(*o.reconstruction_loss, recon_weight));
      return loss;
    };
    std::vector<Tensor<double>*> params;
    for (auto& p : model->parameters()) params.push_back(&p);
    record(timed("model/" + std::string(model_name(kind)) + "/" + std::string(task_name(task)),
                 [&] { return grad_check_report<double>(fn, std::span<Tensor<double>* const>(params)); }));
  }
  return out;
}

}  // namespace gal
