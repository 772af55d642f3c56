#include "cip/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

namespace cip {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(lr0 > 0)) throw std::invalid_argument("lr0 must be > 0");
  if (lr_drop_epoch < 1) throw std::invalid_argument("lr_drop_epoch must be >= 1");
  if (!(lr_drop_factor > 0)) throw std::invalid_argument("lr_drop_factor must be > 0");
  if (!(momentum >= 0) || !(weight_decay >= 0))
    throw std::invalid_argument("momentum and weight_decay must be >= 0");
  if (!(centerline_lr >= 0)) throw std::invalid_argument("centerline_lr must be >= 0");
  if (!(center_point_lr >= 0)) throw std::invalid_argument("center_point_lr must be >= 0");
  if (embedding_dim < 1) throw std::invalid_argument("embedding_dim must be >= 1");
  for (int h : hidden_dims)
    if (h < 1) throw std::invalid_argument("hidden layer widths must be >= 1");
  if (!(init_std > 0) || !(centerline_init_std > 0))
    throw std::invalid_argument("init stds must be > 0");
  if (!(max_centerline_norm > 0)) throw std::invalid_argument("max_centerline_norm must be > 0");
  if (!(collapse_cosine > -1)) throw std::invalid_argument("collapse_cosine must be > -1");
  if (eval_every < 0) throw std::invalid_argument("eval_every must be >= 0");
  loss.validate();
}

MlpSpec TrainConfig::encoder_spec(int input_dim) const {
  std::vector<int> dims{input_dim};
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(embedding_dim);
  return MlpSpec::make(std::move(dims), Activation::relu, final_activation);
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(cfg.epochs) + ")");
  }
  return epoch >= cfg.lr_drop_epoch ? cfg.lr0 / cfg.lr_drop_factor : cfg.lr0;
}

bool Gradients::all_finite() const {
  for (const auto& layer : encoder)
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) return false;
  return centerlines.allFinite() && classifier_weights.allFinite() &&
         classifier_bias.allFinite() && center_points.allFinite();
}

namespace {

MlpParams<double> zeros_like(const MlpParams<double>& params) {
  MlpParams<double> out;
  for (const auto& p : params)
    out.push_back({MatrixXd::Zero(p.weights.rows(), p.weights.cols()),
                   VectorXd::Zero(p.bias.size())});
  return out;
}

template <typename Rng>
MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

double max_column_norm(const MatrixXd& m) {
  return m.cols() == 0 ? 0.0 : m.colwise().norm().maxCoeff();
}

double max_offdiag_cosine(const MatrixXd& centers) {
  double best = -1.0;
  for (Eigen::Index a = 0; a < centers.cols(); ++a) {
    for (Eigen::Index b = a + 1; b < centers.cols(); ++b) {
      const double na = centers.col(a).norm();
      const double nb = centers.col(b).norm();
      if (na == 0 || nb == 0) continue;
      best = std::max(best, centers.col(a).dot(centers.col(b)) / (na * nb));
    }
  }
  return best;
}

}  // namespace

TrainState init_state(const TrainConfig& cfg, int input_dim, int num_classes) {
  cfg.validate();
  if (num_classes < 2) throw std::invalid_argument("training needs at least 2 classes");
  std::mt19937_64 rng(cfg.seed);
  const MlpSpec spec = cfg.encoder_spec(input_dim);
  TrainState state;
  state.model.encoder = cfg.init == InitScheme::he ? Mlp<double>::he(spec, rng)
                                                   : Mlp<double>::gaussian(spec, cfg.init_std, rng);
  state.model.bank =
      CenterlineBank<double>::gaussian(cfg.embedding_dim, num_classes, cfg.centerline_init_std, rng);
  const double clf_std =
      cfg.init == InitScheme::he ? std::sqrt(1.0 / cfg.embedding_dim) : cfg.init_std;
  state.model.classifier.weights = gaussian_matrix(num_classes, cfg.embedding_dim, clf_std, rng);
  state.model.classifier.bias = VectorXd::Zero(num_classes);
  state.model.center_points = MatrixXd::Zero(cfg.embedding_dim, num_classes);

  state.velocity.encoder = zeros_like(state.model.encoder.params());
  state.velocity.centerlines = MatrixXd::Zero(cfg.embedding_dim, num_classes);
  state.velocity.classifier_weights = MatrixXd::Zero(num_classes, cfg.embedding_dim);
  state.velocity.classifier_bias = VectorXd::Zero(num_classes);
  state.velocity.center_points = MatrixXd::Zero(cfg.embedding_dim, num_classes);
  return state;
}

void sgd_step(TrainState& state, const Gradients& grads, const TrainConfig& cfg, double lr,
              double centerline_lr) {
  if (!grads.all_finite()) throw NonFiniteGradient("sgd_step: non-finite gradient");
  const SgdHyper main{lr, cfg.momentum, cfg.weight_decay};
  auto& params = state.model.encoder.params();
  for (std::size_t l = 0; l < params.size(); ++l) {
    sgd_update(params[l].weights, state.velocity.encoder[l].weights, grads.encoder[l].weights, main);
    sgd_update(params[l].bias, state.velocity.encoder[l].bias, grads.encoder[l].bias, main);
  }
  sgd_update(state.model.classifier.weights, state.velocity.classifier_weights,
             grads.classifier_weights, main);
  sgd_update(state.model.classifier.bias, state.velocity.classifier_bias, grads.classifier_bias,
             main);
  const SgdHyper centerline{centerline_lr, cfg.momentum, 0.0};
  sgd_update(state.model.bank.centers(), state.velocity.centerlines, grads.centerlines, centerline);
  const SgdHyper points{cfg.center_point_lr, 0.0, 0.0};
  sgd_update(state.model.center_points, state.velocity.center_points, grads.center_points, points);
}

BatchResult compute_batch(const Model& model, const Eigen::Ref<const MatrixXd>& inputs,
                          std::span<const int> labels, const LossConfig& loss) {
  MlpCache<double> cache;
  const MatrixXd features = model.encoder.forward(inputs, &cache);
  const LabeledBatch<double> batch{features, labels};

  ObjectiveParams<double> params;
  if (loss.uses_centerlines()) params.bank = &model.bank;
  if (loss.use_softmax) params.classifier = &model.classifier;
  if (loss.use_center) params.center_points = &model.center_points;

  BatchResult out;
  out.report = evaluate_objective(batch, params, loss);
  auto back = model.encoder.backward(cache, out.report.feature_grads);
  out.grads.encoder = std::move(back.param_grads);

  const auto n = model.bank.dim();
  const auto k = model.bank.num_classes();
  out.grads.centerlines =
      loss.uses_centerlines() ? out.report.center_grads : MatrixXd::Zero(n, k);
  if (loss.use_softmax) {
    out.grads.classifier_weights = out.report.classifier_weight_grad;
    out.grads.classifier_bias = out.report.classifier_bias_grad;
  } else {
    out.grads.classifier_weights = MatrixXd::Zero(model.classifier.weights.rows(),
                                                  model.classifier.weights.cols());
    out.grads.classifier_bias = VectorXd::Zero(model.classifier.bias.size());
  }
  out.grads.center_points =
      loss.use_center ? out.report.center_point_grads
                      : MatrixXd::Zero(model.center_points.rows(), model.center_points.cols());
  return out;
}

TrainResult train(const Dataset& train_set, const TrainConfig& cfg, const Dataset* eval_set) {
  if (train_set.empty()) throw std::invalid_argument("train: empty dataset");
  return train(init_state(cfg, train_set.input_dim(), train_set.num_classes()), train_set, cfg,
               eval_set);
}

TrainResult train(TrainState state, const Dataset& train_set, const TrainConfig& cfg,
                  const Dataset* eval_set) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty dataset");
  if (train_set.input_dim() != state.model.encoder.spec().input_dim())
    throw DimensionError("train: dataset input dim does not match encoder");
  if (train_set.num_classes() > state.model.bank.num_classes())
    throw std::invalid_argument("train: dataset has more classes than the model");

  const auto labels = train_set.class_indices();
  const auto count = static_cast<Eigen::Index>(train_set.size());
  const bool tracks_centerlines = cfg.loss.uses_centerlines();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(count));
  MatrixXd batch_inputs;
  std::vector<int> batch_labels;

  for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    TrainState last_good = state;
    const double lr = lr_at(epoch, cfg);
    const double centerline_lr =
        cfg.centerline_lr > 0 ? cfg.centerline_lr * (lr / cfg.lr0) : lr;

    // Per-epoch stream so resumed runs see the same permutations.
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x5eedu};
    std::mt19937_64 perm_rng(seq);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), perm_rng);

    EpochRecord record;
    record.epoch = epoch;
    record.lr = lr;
    int batches = 0;
    for (Eigen::Index start = 0; start < count; start += cfg.batch_size) {
      const Eigen::Index m = std::min<Eigen::Index>(cfg.batch_size, count - start);
      const auto cols = std::span(order).subspan(static_cast<std::size_t>(start),
                                                 static_cast<std::size_t>(m));
      batch_inputs = train_set.inputs()(Eigen::all, cols);
      batch_labels.clear();
      for (auto c : cols) batch_labels.push_back(labels[static_cast<std::size_t>(c)]);

      BatchResult result = compute_batch(state.model, batch_inputs, batch_labels, cfg.loss);
      if (!std::isfinite(result.report.total) || !result.grads.all_finite()) {
        last_good.history = state.history;
        return {std::move(last_good),
                Divergence{epoch, "non-finite loss or gradient at epoch " + std::to_string(epoch) +
                                      ", batch " + std::to_string(batches)}};
      }
      record.total += result.report.total;
      for (const auto& [name, value] : result.report.per_term) record.terms[name] += value;
      sgd_step(state, result.grads, cfg, lr, centerline_lr);
      ++batches;
    }
    record.total /= batches;
    for (auto& [name, value] : record.terms) value /= batches;
    record.max_centerline_norm = max_column_norm(state.model.bank.centers());
    record.max_centerline_cosine = max_offdiag_cosine(state.model.bank.centers());

    std::string reason;
    if (tracks_centerlines) {
      if (!std::isfinite(record.max_centerline_norm) ||
          record.max_centerline_norm > cfg.max_centerline_norm) {
        reason = "centerline norm " + std::to_string(record.max_centerline_norm) +
                 " exceeds bound " + std::to_string(cfg.max_centerline_norm);
      } else if (cfg.collapse_cosine < 1 && record.max_centerline_cosine > cfg.collapse_cosine) {
        reason = "centerlines collapsed: max cosine " +
                 std::to_string(record.max_centerline_cosine) + " above " +
                 std::to_string(cfg.collapse_cosine);
      }
    }
    if (!reason.empty()) {
      last_good.history = state.history;
      last_good.history.push_back(record);
      return {std::move(last_good),
              Divergence{epoch, reason + " at epoch " + std::to_string(epoch)}};
    }

    if (eval_set && cfg.eval_every > 0 &&
        ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs)) {
      record.test_map = evaluate_retrieval(state.model, *eval_set).micro.map;
    }
    state.history.push_back(record);
    state.epoch = epoch + 1;
  }
  return {std::move(state), std::nullopt};
}

MatrixXd embed(const Mlp<double>& encoder, const Dataset& dataset) {
  return encoder.forward(dataset.inputs());
}

PooledDescriptors pool_by_object(const MatrixXd& view_embeddings, const Dataset& dataset) {
  if (view_embeddings.cols() != static_cast<Eigen::Index>(dataset.size()))
    throw std::invalid_argument("pool_by_object: embedding count does not match dataset");
  PooledDescriptors out;
  std::unordered_map<int, std::size_t> slot;
  std::vector<std::vector<Eigen::Index>> members;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset.records()[i];
    auto [it, inserted] = slot.emplace(r.object_id, members.size());
    if (inserted) {
      members.emplace_back();
      out.object_ids.push_back(r.object_id);
      out.labels.push_back(r.label - 1);
    }
    members[it->second].push_back(static_cast<Eigen::Index>(i));
  }
  out.descriptors.resize(view_embeddings.rows(), static_cast<Eigen::Index>(members.size()));
  for (std::size_t o = 0; o < members.size(); ++o) {
    const MatrixXd views = view_embeddings(Eigen::all, members[o]);
    auto pooled = mean_pool(views);
    out.descriptors.col(static_cast<Eigen::Index>(o)) = pooled.components;
    out.view_counts.push_back(pooled.source_view_count);
  }
  return out;
}

EvaluationSummary evaluate_retrieval(const Model& model, const Dataset& dataset,
                                     const EvalOptions& options) {
  const auto pooled = pool_by_object(embed(model.encoder, dataset), dataset);
  return evaluate(rank(pooled.descriptors, pooled.labels), options);
}

}  // namespace cip
