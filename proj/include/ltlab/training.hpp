#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "ltlab/classifier.hpp"
#include "ltlab/data.hpp"
#include "ltlab/losses.hpp"

namespace ltlab {

enum class Sampler { Shuffle, ClassBalanced };

struct TrainConfig {
  int epochs = 20;
  int batch_size = 64;
  double lr0 = 0.1;
  double weight_decay = 0.0;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  Sampler sampler = Sampler::Shuffle;
  std::optional<double> maxnorm;  // projection radius, off when empty
  double cosine_scale = kDefaultCosineScale;
  Head head = Head::Linear;
};

void validate(const TrainConfig& cfg);

struct OptimizerState {
  Eigen::MatrixXd vel_weights;
  Eigen::VectorXd vel_bias;
  Eigen::VectorXd vel_scale;
  long step = 0;
};

OptimizerState make_optimizer_state(const ClassifierParams& params);

struct EpochRecord {
  double train_loss = 0.0;
  double lr = 0.0;
  std::optional<double> eval_acc;
};

using TrainHistory = std::vector<EpochRecord>;

// lr0 * (1 + cos(pi * step / total)) / 2: anneals from lr0 to zero.
double cosine_lr(long step, long total_steps, double lr0);

// Class-uniform oversampling: picks a class uniformly, then one of its
// members uniformly with replacement. Realizes per-sample weight ~ 1/n_i.
std::vector<int> balanced_sample_indices(
    const ClassStats& stats, const std::vector<std::vector<int>>& per_class,
    int epoch_len, std::uint64_t seed);

// v <- momentum*v + grad + wd*param; param <- param - lr*v.
// Weight decay touches W only, never bias or LWS scales.
void sgd_step(ClassifierParams& params, const LossGrads& grads,
              OptimizerState& opt, double lr, double weight_decay,
              double momentum);

struct TrainResult {
  ClassifierParams params;
  TrainHistory history;
};

// Seeded SGD retraining of the classifier head on frozen features.
// LWS runs two phases: W,b first (scales pinned at 1), then scales only.
TrainResult train_classifier(const FeatureDataset& train, const LossSpec& spec,
                             const TrainConfig& cfg,
                             const FeatureDataset* eval_set = nullptr,
                             const ClassifierParams* init = nullptr);

// Fraction of eval rows whose argmax logit matches the label, in percent.
double top1_accuracy(const ClassifierParams& params, const FeatureDataset& ds,
                     double cosine_scale = kDefaultCosineScale);

// Compares analytic gradients against central finite differences of the
// scalar loss over random instances; returns the worst relative error.
double gradcheck(const LossSpec& spec, Head head, int num_classes, int dim,
                 int trials, double step_h, std::uint64_t seed = 12345);

std::string history_csv(const TrainHistory& history);
Sampler parse_sampler(const std::string& name);

}  // namespace ltlab
