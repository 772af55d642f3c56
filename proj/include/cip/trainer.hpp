#ifndef CIP_TRAINER_HPP
#define CIP_TRAINER_HPP

#include "cip/data.hpp"
#include "cip/encoder.hpp"
#include "cip/eval.hpp"
#include "cip/losses.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cip {

enum class InitScheme { gaussian, he };

struct TrainConfig {
  int batch_size = 100;
  int epochs = 30;
  double lr0 = 0.01;
  int lr_drop_epoch = 20;
  double lr_drop_factor = 5.0;
  double momentum = 0.9;
  double weight_decay = 2e-4;
  double centerline_lr = 0.0;  // 0: same as the encoder rate
  double center_point_lr = 0.5;
  std::uint64_t seed = 1;
  LossConfig loss;

  // Encoder
  std::vector<int> hidden_dims{64};
  int embedding_dim = 16;
  Activation final_activation = Activation::identity;
  InitScheme init = InitScheme::gaussian;
  double init_std = 0.01;
  double centerline_init_std = 0.01;

  // Divergence detector. Collapse fires when two centerlines exceed this
  // cosine; values >= 1 switch it off.
  double max_centerline_norm = 1e3;
  double collapse_cosine = 0.95;

  int eval_every = 0;  // epochs between test-set evaluations; 0 disables

  void validate() const;
  MlpSpec encoder_spec(int input_dim) const;
};

/// lr0 / lr_drop_factor once epoch >= lr_drop_epoch.
double lr_at(int epoch, const TrainConfig& cfg);

struct Model {
  Mlp<double> encoder;
  CenterlineBank<double> bank;
  LinearClassifier<double> classifier;
  MatrixXd center_points;  // centers for the center-loss baseline
};

/// Momentum buffers mirroring every trainable tensor of the model.
struct Velocity {
  MlpParams<double> encoder;
  MatrixXd centerlines;
  MatrixXd classifier_weights;
  VectorXd classifier_bias;
  MatrixXd center_points;
};

struct Gradients {
  MlpParams<double> encoder;
  MatrixXd centerlines;
  MatrixXd classifier_weights;
  VectorXd classifier_bias;
  MatrixXd center_points;

  bool all_finite() const;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double total = 0;                     // mean over batches
  std::map<std::string, double> terms;  // mean over batches, unweighted
  double max_centerline_norm = 0;
  double max_centerline_cosine = 0;
  std::optional<double> test_map;
};

struct TrainState {
  Model model;
  Velocity velocity;
  int epoch = 0;  // epochs completed
  std::vector<EpochRecord> history;
};

struct SgdHyper {
  double lr = 0;
  double momentum = 0;
  double weight_decay = 0;
};

/// v <- momentum * v - lr * (g + weight_decay * theta); theta <- theta + v.
template <typename DerivedP, typename DerivedV, typename DerivedG>
void sgd_update(Eigen::MatrixBase<DerivedP>& theta, Eigen::MatrixBase<DerivedV>& velocity,
                const Eigen::MatrixBase<DerivedG>& grad, const SgdHyper& h) {
  velocity = h.momentum * velocity - h.lr * (grad + h.weight_decay * theta);
  theta += velocity;
}

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One optimizer step over every tensor. Centerlines use `centerline_lr`
/// and no weight decay. Throws NonFiniteGradient before touching the state.
void sgd_step(TrainState& state, const Gradients& grads, const TrainConfig& cfg, double lr,
              double centerline_lr);

/// Fresh model and zeroed velocities from the config seed.
TrainState init_state(const TrainConfig& cfg, int input_dim, int num_classes);

/// Loss report plus backpropagated gradients for one batch of views.
struct BatchResult {
  LossReport<double> report;
  Gradients grads;
};

BatchResult compute_batch(const Model& model, const Eigen::Ref<const MatrixXd>& inputs,
                          std::span<const int> labels, const LossConfig& loss);

struct Divergence {
  int epoch = 0;
  std::string reason;
};

struct TrainResult {
  TrainState state;  // last good state when diverged
  std::optional<Divergence> divergence;
};

/// Mini-batch SGD over the view records of `train_set`. When `eval_set` is
/// given and cfg.eval_every > 0, test MAP is logged in the history.
TrainResult train(const Dataset& train_set, const TrainConfig& cfg,
                  const Dataset* eval_set = nullptr);

/// Continues an existing state for the remaining epochs.
TrainResult train(TrainState state, const Dataset& train_set, const TrainConfig& cfg,
                  const Dataset* eval_set = nullptr);

// Embedding and retrieval helpers.

MatrixXd embed(const Mlp<double>& encoder, const Dataset& dataset);

struct PooledDescriptors {
  MatrixXd descriptors;  // n x objects
  std::vector<int> object_ids;
  std::vector<int> labels;  // 0-based
  std::vector<int> view_counts;
};

PooledDescriptors pool_by_object(const MatrixXd& view_embeddings, const Dataset& dataset);

/// Embeds, mean-pools per object, and runs leave-one-out retrieval.
EvaluationSummary evaluate_retrieval(const Model& model, const Dataset& dataset,
                                     const EvalOptions& options = {});

}  // namespace cip

#endif  // CIP_TRAINER_HPP
