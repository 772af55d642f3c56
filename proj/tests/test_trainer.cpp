#include "cip/benchmark.hpp"
#include "cip/serialize.hpp"
#include "cip/trainer.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <vector>

using cip::MatrixXd;
using cip::TrainConfig;
using cip::VectorXd;

namespace {

cip::Dataset tiny_dataset(std::uint64_t seed, int classes = 3) {
  cip::SyntheticSpec spec;
  spec.num_classes = classes;
  spec.objects_per_class = 6;
  spec.views_per_object = 4;
  spec.input_dim = 8;
  spec.class_separation = 3.0;
  spec.view_noise_std = 0.3;
  spec.object_noise_std = 0.3;
  spec.seed = seed;
  return cip::generate(spec);
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 16;
  cfg.hidden_dims = {12};
  cfg.embedding_dim = 4;
  cfg.init = cip::InitScheme::he;
  cfg.momentum = 0.0;
  cfg.lr0 = 0.01;
  cfg.seed = 9;
  return cfg;
}

}  // namespace

TEST(LrSchedule, DropsByFactorAtEpochTwenty) {
  TrainConfig cfg;
  EXPECT_DOUBLE_EQ(cip::lr_at(0, cfg), 0.01);
  EXPECT_DOUBLE_EQ(cip::lr_at(19, cfg), 0.01);
  EXPECT_DOUBLE_EQ(cip::lr_at(20, cfg), 0.002);
  EXPECT_DOUBLE_EQ(cip::lr_at(29, cfg), 0.002);
  EXPECT_THROW(cip::lr_at(30, cfg), std::out_of_range);
  EXPECT_THROW(cip::lr_at(-1, cfg), std::out_of_range);
}

TEST(SgdUpdate, PlainStep) {
  VectorXd theta(2), v = VectorXd::Zero(2), g(2);
  theta << 1, -2;
  g << 0.5, 4;
  cip::sgd_update(theta, v, g, {0.1, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(theta(0), 1 - 0.05);
  EXPECT_DOUBLE_EQ(theta(1), -2 - 0.4);
}

TEST(SgdUpdate, ZeroGradientZeroVelocityLeavesState) {
  VectorXd theta(3), v = VectorXd::Zero(3);
  theta << 1, 2, 3;
  const VectorXd before = theta;
  cip::sgd_update(theta, v, VectorXd::Zero(3), {0.5, 0.9, 0.0});
  EXPECT_EQ(theta, before);
  EXPECT_EQ(v, VectorXd::Zero(3));
}

TEST(SgdUpdate, MomentumUnrolls) {
  VectorXd theta = VectorXd::Zero(1), v = VectorXd::Zero(1), g = VectorXd::Ones(1);
  cip::sgd_update(theta, v, g, {1.0, 0.5, 0.0});
  EXPECT_DOUBLE_EQ(theta(0), -1.0);
  cip::sgd_update(theta, v, g, {1.0, 0.5, 0.0});
  EXPECT_DOUBLE_EQ(theta(0), -2.5);
  cip::sgd_update(theta, v, g, {1.0, 0.5, 0.0});
  EXPECT_DOUBLE_EQ(theta(0), -4.25);
}

TEST(SgdUpdate, WeightDecayShrinks) {
  VectorXd theta = VectorXd::Constant(1, 2.0), v = VectorXd::Zero(1);
  cip::sgd_update(theta, v, VectorXd::Zero(1), {0.1, 0.0, 0.5});
  EXPECT_DOUBLE_EQ(theta(0), 2.0 - 0.1 * 0.5 * 2.0);
}

TEST(SgdStep, CenterlinesSkipWeightDecay) {
  TrainConfig cfg = tiny_config();
  cfg.weight_decay = 0.1;
  auto state = cip::init_state(cfg, 8, 3);
  cip::Gradients zero;
  for (const auto& p : state.model.encoder.params())
    zero.encoder.push_back({MatrixXd::Zero(p.weights.rows(), p.weights.cols()),
                            VectorXd::Zero(p.bias.size())});
  zero.centerlines = MatrixXd::Zero(4, 3);
  zero.classifier_weights = MatrixXd::Zero(3, 4);
  zero.classifier_bias = VectorXd::Zero(3);
  zero.center_points = MatrixXd::Zero(4, 3);
  const MatrixXd centers = state.model.bank.centers();
  const MatrixXd w0 = state.model.encoder.params()[0].weights;
  cip::sgd_step(state, zero, cfg, 0.5, 0.5);
  EXPECT_EQ(state.model.bank.centers(), centers);
  EXPECT_TRUE(state.model.encoder.params()[0].weights.isApprox(w0 * (1 - 0.05), 1e-14));

  zero.centerlines(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(cip::sgd_step(state, zero, cfg, 0.5, 0.5), cip::NonFiniteGradient);
}

TEST(InitState, ShapesAndValidation) {
  TrainConfig cfg = tiny_config();
  auto state = cip::init_state(cfg, 8, 3);
  EXPECT_EQ(state.model.encoder.spec().layer_dims, (std::vector<int>{8, 12, 4}));
  EXPECT_EQ(state.model.bank.centers().rows(), 4);
  EXPECT_EQ(state.model.bank.centers().cols(), 3);
  EXPECT_EQ(state.epoch, 0);
  EXPECT_THROW(cip::init_state(cfg, 8, 1), std::invalid_argument);
  cfg.batch_size = 0;
  EXPECT_THROW(cip::init_state(cfg, 8, 3), std::invalid_argument);
}

TEST(Train, DeterministicForFixedSeed) {
  const auto data = tiny_dataset(1);
  const auto a = cip::train(data, tiny_config());
  const auto b = cip::train(data, tiny_config());
  ASSERT_FALSE(a.divergence);
  ASSERT_EQ(a.state.history.size(), 4u);
  for (std::size_t i = 0; i < a.state.history.size(); ++i)
    EXPECT_EQ(a.state.history[i].total, b.state.history[i].total);
  EXPECT_EQ(a.state.model.encoder.flatten(), b.state.model.encoder.flatten());
}

TEST(Train, ResumeMatchesStraightRun) {
  const auto data = tiny_dataset(2);
  TrainConfig cfg = tiny_config();
  cfg.momentum = 0.5;
  const auto straight = cip::train(data, cfg);
  TrainConfig half = cfg;
  half.epochs = 2;
  auto first = cip::train(data, half);
  const auto resumed = cip::train(first.state, data, cfg);
  EXPECT_EQ(resumed.state.model.encoder.flatten(), straight.state.model.encoder.flatten());
  EXPECT_EQ(resumed.state.model.bank.centers(), straight.state.model.bank.centers());
  EXPECT_EQ(resumed.state.history.size(), 4u);
}

TEST(Train, SoftmaxOnlyLeavesCenterlinesUntouched) {
  const auto data = tiny_dataset(3);
  TrainConfig cfg = tiny_config();
  cfg.loss = cip::loss_preset("softmax");
  cfg.weight_decay = 0.01;
  const auto init = cip::init_state(cfg, data.input_dim(), data.num_classes());
  const auto result = cip::train(data, cfg);
  EXPECT_EQ(result.state.model.bank.centers(), init.model.bank.centers());
  EXPECT_NE(result.state.model.classifier.weights, init.model.classifier.weights);
}

TEST(Train, SingleClassLossDecreases) {
  cip::Dataset one = tiny_dataset(4, 2);
  std::vector<cip::ViewRecord> records;
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < one.size(); ++i)
    if (one.records()[i].label == 1) {
      records.push_back(one.records()[i]);
      keep.push_back(static_cast<Eigen::Index>(i));
    }
  cip::Dataset data(records, one.inputs()(Eigen::all, keep));
  ASSERT_EQ(data.num_classes(), 1);

  TrainConfig cfg = tiny_config();
  cfg.epochs = 5;
  cfg.loss = cip::loss_preset("cip+softmax");
  auto state = cip::init_state(cfg, data.input_dim(), 2);
  const auto result = cip::train(state, data, cfg);
  ASSERT_FALSE(result.divergence);
  const auto& h = result.state.history;
  ASSERT_EQ(h.size(), 5u);
  EXPECT_LT(h.back().total, h.front().total);
}

TEST(Train, RejectsMismatchedData) {
  const auto data = tiny_dataset(5);
  TrainConfig cfg = tiny_config();
  auto state = cip::init_state(cfg, data.input_dim() + 1, 3);
  EXPECT_THROW(cip::train(state, data, cfg), cip::DimensionError);
  auto small = cip::init_state(cfg, data.input_dim(), 2);
  EXPECT_THROW(cip::train(small, data, cfg), std::invalid_argument);
}

TEST(Train, ClusterOnlyIsFlaggedAsDivergent) {
  const auto data = cip::split(cip::generate(cip::standard_benchmark_data(0)), 0.5, 0)
                        .subset(cip::Split::train);
  const auto result = cip::train(data, cip::standard_benchmark_train(0, "cluster"));
  ASSERT_TRUE(result.divergence.has_value());
  EXPECT_LT(result.divergence->epoch, 30);
  EXPECT_FALSE(result.divergence->reason.empty());
  EXPECT_EQ(result.state.history.size(), static_cast<std::size_t>(result.divergence->epoch) + 1);
}

TEST(Train, NormBoundFlagsBlowUp) {
  const auto data = tiny_dataset(6);
  TrainConfig cfg = tiny_config();
  cfg.max_centerline_norm = 1e-6;
  const auto result = cip::train(data, cfg);
  ASSERT_TRUE(result.divergence.has_value());
  EXPECT_EQ(result.divergence->epoch, 0);
  EXPECT_NE(result.divergence->reason.find("norm"), std::string::npos);
  EXPECT_EQ(result.state.epoch, 0);
}

TEST(Train, CipRunShowsLrDropAtEpochTwenty) {
  const auto data = cip::generate(cip::geometry_benchmark_data(0));
  const auto result = cip::train(data, cip::geometry_benchmark_train(0));
  ASSERT_EQ(result.state.history.size(), 30u);
  EXPECT_DOUBLE_EQ(result.state.history[19].lr, 0.01);
  EXPECT_DOUBLE_EQ(result.state.history[20].lr, 0.002);
  for (const auto& r : result.state.history) EXPECT_TRUE(std::isfinite(r.total));
}

TEST(Train, EvalEveryLogsTestMap) {
  const auto data = cip::split(tiny_dataset(7), 0.5, 1);
  TrainConfig cfg = tiny_config();
  cfg.eval_every = 2;
  const auto train_set = data.subset(cip::Split::train);
  const auto test_set = data.subset(cip::Split::test);
  const auto result = cip::train(train_set, cfg, &test_set);
  const auto& h = result.state.history;
  EXPECT_FALSE(h[0].test_map);
  ASSERT_TRUE(h[1].test_map);
  EXPECT_GE(*h[1].test_map, 0.0);
  EXPECT_LE(*h[1].test_map, 1.0);
  EXPECT_TRUE(h[3].test_map);
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto data = tiny_dataset(8);
  TrainConfig cfg = tiny_config();
  cfg.momentum = 0.9;
  const auto result = cip::train(data, cfg);
  const auto path = std::filesystem::temp_directory_path() / "cip_test_checkpoint.json";
  cip::save_checkpoint(result.state, path);
  const auto loaded = cip::load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(cip::checkpoint_to_json(loaded), cip::checkpoint_to_json(result.state));
  EXPECT_EQ(loaded.model.encoder.flatten(), result.state.model.encoder.flatten());
  EXPECT_EQ(loaded.velocity.centerlines, result.state.velocity.centerlines);
}

TEST(Checkpoint, RejectsForeignJson) {
  EXPECT_THROW(cip::checkpoint_from_json(nlohmann::json{{"format", "other"}}), std::runtime_error);
  auto j = nlohmann::json{{"format", "cip-checkpoint"}, {"version", 99}};
  EXPECT_THROW(cip::checkpoint_from_json(j), std::runtime_error);
}

TEST(Retrieval, PoolByObjectAveragesViews) {
  const auto data = tiny_dataset(9);
  MatrixXd emb = MatrixXd::Zero(2, static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i)
    emb(0, static_cast<Eigen::Index>(i)) = data.records()[i].view_index;
  const auto pooled = cip::pool_by_object(emb, data);
  EXPECT_EQ(pooled.descriptors.cols(), 3 * 6);
  for (Eigen::Index j = 0; j < pooled.descriptors.cols(); ++j) {
    EXPECT_DOUBLE_EQ(pooled.descriptors(0, j), 1.5);
    EXPECT_EQ(pooled.view_counts[static_cast<std::size_t>(j)], 4);
  }
  EXPECT_THROW(cip::pool_by_object(MatrixXd::Zero(2, 3), data), std::invalid_argument);
}
