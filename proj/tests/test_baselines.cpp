#include <gtest/gtest.h>

#include "gal/baselines.hpp"
#include "gal/gradcheck.hpp"
#include "gal/training.hpp"
#include "oracles.hpp"

namespace gal {
namespace {

using test::random_tensor;
using G = Graph<double>;
using V = Var<double>;

ModelConfig mini(ModelKind kind, Task task, Index extent = 16) {
  ModelConfig c = ModelConfig::for_task(kind, task, Canvas{extent, extent}, 5);
  return c;
}

TEST(SoftArgmax, DominantActivationPicksPixel) {
  Tensor<double> maps({1, 5, 7}, 0.0);
  maps.data[1 * 7 + 6] = 1e4;  // v=1, u=6
  G g;
  const V p = spatial_soft_argmax(g.constant(maps), 0.1);
  EXPECT_DOUBLE_EQ(p.value()[0], 1.0);
  EXPECT_DOUBLE_EQ(p.value()[1], -0.5);
}

TEST(SoftArgmax, UniformChannelAtCenter) {
  Tensor<double> maps({2, 5, 5}, 3.0);
  G g;
  const V p = spatial_soft_argmax(g.constant(maps), 0.1);
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(p.value()[i], 0.0, 1e-15);
}

TEST(SoftArgmax, MatchesDoubleLoopOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Index q = 1 + static_cast<Index>(rng.below(4));
    const Index h = 1 + static_cast<Index>(rng.below(9)), w = 1 + static_cast<Index>(rng.below(9));
    const double t = rng.uniform(0.05, 1.0);
    Tensor<double> maps = random_tensor({q, h, w}, rng, -2, 2);
    G g;
    const V p = spatial_soft_argmax(g.constant(maps), t);
    ASSERT_EQ(p.shape(), (Shape{2 * q}));
    for (Index c = 0; c < q; ++c) {
      const std::vector<double> scores(maps.data.data() + c * h * w, maps.data.data() + (c + 1) * h * w);
      const auto [x, y] = test::naive_soft_argmax(test::naive_softmax(scores, t), h, w);
      EXPECT_NEAR(p.value()[2 * c], x, 1e-10);
      EXPECT_NEAR(p.value()[2 * c + 1], y, 1e-10);
    }
  }
}

TEST(SoftArgmax, IdenticalToAttentionExtraction) {
  Rng rng(2);
  Tensor<double> maps = random_tensor({1, 6, 6}, rng);
  G g;
  const V p = spatial_soft_argmax(g.constant(maps), 0.3);
  const V m = softmax2d(channel(g.constant(maps), 0), 0.3);
  const V a = extract_coordinate(m, g.constant(coordinate_value<double>(6, 6)));
  EXPECT_EQ(p.value(), a.value());
}

TEST(ReconstructionTarget, GrayscaleBoxAverage) {
  Tensor<double> img({3, 4, 4}, 0.0);
  for (Index v = 0; v < 4; ++v) {
    for (Index u = 0; u < 4; ++u) {
      img.data[v * 4 + u] = 0.3;
      img.data[16 + v * 4 + u] = u < 2 ? 0.6 : 0.0;
      img.data[32 + v * 4 + u] = 0.9;
    }
  }
  const Tensor<double> t = reconstruction_target(img, 2);
  ASSERT_EQ(t.shape, (Shape{4}));
  EXPECT_NEAR(t.data[0], 0.6, 1e-12);
  EXPECT_NEAR(t.data[1], 0.4, 1e-12);
  EXPECT_NEAR(t.data[2], 0.6, 1e-12);
  EXPECT_NEAR(t.data[3], 0.4, 1e-12);
}

TEST(KeyPoint, ChannelCountsFollowVariant) {
  KeyPointModel<double> kmin(mini(ModelKind::KeyPointMin, Task::MultipleObject));
  KeyPointModel<double> k16(mini(ModelKind::KeyPoint16, Task::MultipleObject));
  G g;
  const Tensor<double> img({3, 16, 16}, 0.5);
  EXPECT_EQ(kmin.keypoints(g, g.constant(img)).shape(), (Shape{6}));
  EXPECT_EQ(k16.keypoints(g, g.constant(img)).shape(), (Shape{32}));
  EXPECT_FALSE(kmin.has_decoder());
}

TEST(KeyPoint, PointsInsideUnitSquare) {
  KeyPointModel<double> model(mini(ModelKind::KeyPoint16, Task::SingleObject));
  const auto ds = generate_dataset(TaskConfig::of(Task::SingleObject), 3, 1, Canvas{16, 16});
  for (const auto& s : ds.samples) {
    G g;
    const V p = model.keypoints(g, g.constant(s.image.cast<double>()));
    EXPECT_LE(p.value().cwiseAbs().maxCoeff(), 1.0);
  }
}

TEST(DeepSpatialAE, ReconstructionShapeAndLoss) {
  ModelConfig c = mini(ModelKind::DeepSpatialAE, Task::SingleObject);
  KeyPointModel<double> model(c);
  ASSERT_TRUE(model.has_decoder());
  EXPECT_EQ(c.heads, 16);
  G g;
  const Tensor<double> img({3, 16, 16}, 0.5);
  const V points = model.keypoints(g, g.constant(img));
  EXPECT_EQ(model.reconstruct(g, points).shape(), (Shape{c.recon_extent * c.recon_extent}));
  const auto out = model.forward(g, img, {});
  ASSERT_TRUE(out.reconstruction_loss.has_value());
  EXPECT_EQ(out.reconstruction_loss->shape(), (Shape{1}));
}

TEST(ConvAE, LatentAndReconstructionShapes) {
  ModelConfig c = mini(ModelKind::ConvAE, Task::SelectedType);
  ConvAEModel<double> model(c);
  G g;
  const Tensor<double> img({3, 16, 16}, 0.2);
  const V z = model.encode(g, g.constant(img));
  EXPECT_EQ(z.shape(), (Shape{c.latent_dim}));
  EXPECT_LE(z.value().cwiseAbs().maxCoeff(), 1.0);
  EXPECT_EQ(model.reconstruct(g, z).shape(), (Shape{c.recon_extent * c.recon_extent}));
  const auto out = model.forward(g, img, Eigen::Vector3d(0, 0, 1));
  EXPECT_EQ(out.coords_cm.shape(), (Shape{2}));
  EXPECT_TRUE(out.reconstruction_loss.has_value());
}

TEST(PlainFCN, OutputShapePerTask) {
  for (Task t : {Task::SingleObject, Task::MultipleObject, Task::SelectedType, Task::SelectedPosition}) {
    PlainFCNModel<double> model(mini(ModelKind::PlainFCN, t));
    const auto task = TaskConfig::of(t);
    const auto ds = generate_dataset(task, 1, 2, Canvas{16, 16});
    G g;
    const auto out = model.forward(g, ds.samples[0].image.cast<double>(), ds.samples[0].condition.cast<double>());
    EXPECT_EQ(out.coords_cm.shape(), (Shape{2 * task.targets}));
    EXPECT_FALSE(out.reconstruction_loss.has_value());
  }
}

TEST(Baselines, ConditionWidthChecked) {
  KeyPointModel<double> model(mini(ModelKind::KeyPointMin, Task::SelectedPosition));
  G g;
  EXPECT_THROW(model.forward(g, Tensor<double>({3, 16, 16}), Eigen::Vector3d(1, 0, 0)), DimensionError);
}

TEST(Baselines, FactoryBuildsEveryKind) {
  for (ModelKind kind : kAllModelKinds) {
    const auto model = make_model<double>(mini(kind, Task::SelectedType));
    EXPECT_EQ(model->config().kind, kind);
    EXPECT_GT(model->parameter_count(), 0);
    EXPECT_EQ(parse_model(model_name(kind)), kind);
  }
}

// 100 Adam steps on the reconstruction term alone, constant image.
template <typename M>
void expect_reconstruction_improves(M& model) {
  const Tensor<double> img({3, 16, 16}, 0.7);
  auto recon_loss = [&](Graph<double>& g) { return *model.forward(g, img, {}).reconstruction_loss; };
  const double before = evaluate_program<double>(recon_loss);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  auto state = fresh_trainer_state(model.parameters());
  for (int step = 0; step < 100; ++step) {
    model.zero_grad();
    Graph<double> g;
    g.backward(recon_loss(g));
    optimizer_step(model.parameters(), state, cfg);
  }
  const double after = evaluate_program<double>(recon_loss);
  EXPECT_LT(after, before);
}

TEST(DeepSpatialAE, ReconstructionLossDecreases) {
  KeyPointModel<double> model(mini(ModelKind::DeepSpatialAE, Task::SingleObject));
  expect_reconstruction_improves(model);
}

TEST(ConvAE, ReconstructionLossDecreases) {
  ConvAEModel<double> model(mini(ModelKind::ConvAE, Task::SingleObject));
  expect_reconstruction_improves(model);
}

// Forward + task loss (+ weighted reconstruction) for each baseline on a 16x16 miniature.
class BaselineGradCheck : public ::testing::TestWithParam<ModelKind> {};

TEST_P(BaselineGradCheck, CombinedLossOnMiniature) {
  const Task task = GetParam() == ModelKind::KeyPointMin ? Task::SelectedPosition : Task::MultipleObject;
  const auto ds = generate_dataset(TaskConfig::of(task), 1, 3, Canvas{16, 16});
  const auto model = make_model<double>(mini(GetParam(), task));
  const auto& s = ds.samples[0];
  Eigen::VectorXd target(2 * static_cast<Index>(s.targets.size()));
  for (std::size_t i = 0; i < s.targets.size(); ++i) target.segment<2>(2 * static_cast<Index>(i)) = s.targets[i];
  const Tensor<double> image = s.image.cast<double>();
  const Eigen::VectorXd cond = s.condition.cast<double>();
  auto fn = [&](G& g) {
    const auto out = model->forward(g, image, cond);
    V loss = mse_loss(out.coords_cm, g.constant({target.size()}, target));
    if (out.reconstruction_loss) loss = add(loss, scale(*out.reconstruction_loss, 0.1));
    return loss;
  };
  std::vector<Tensor<double>*> params;
  for (auto& p : model->parameters()) params.push_back(&p);
  const auto report = grad_check_report<double>(fn, std::span<Tensor<double>* const>(params));
  EXPECT_LE(report.max_rel_error, 1e-4) << model->parameter_names()[report.worst_tensor] << "["
                                        << report.worst_element << "] analytic " << report.analytic_at_worst
                                        << " numeric " << report.numeric_at_worst;
}

INSTANTIATE_TEST_SUITE_P(Kinds, BaselineGradCheck,
                         ::testing::Values(ModelKind::KeyPointMin, ModelKind::DeepSpatialAE, ModelKind::ConvAE,
                                           ModelKind::PlainFCN),
                         [](const auto& info) {
                           std::string n(model_name(info.param));
                           for (char& ch : n) ch = ch == '-' ? '_' : ch;
                           return n;
                         });

}  // namespace
}  // namespace gal
