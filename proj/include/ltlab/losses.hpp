#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "ltlab/classifier.hpp"
#include "ltlab/data.hpp"

namespace ltlab {

enum class LossMethod {
  CE,
  LORT,
  Focal,
  ClassBalancedCE,
  ClassBalancedBCE,
  LDAM,
  BalancedSoftmax,
};

// One retraining method with its hyperparameters. ldam_c left empty means
// "calibrate so the smallest class gets margin 0.5 on the training set".
struct LossSpec {
  LossMethod method = LossMethod::CE;
  double delta = 0.0;   // retargeted-label smooth value, in [0, 1)
  double gamma = 1.0;   // focal exponent (default 1) / LDAM exponent (0.25)
  double beta = 0.9999; // class-balanced effective-number parameter, [0, 1)
  std::optional<double> ldam_c;
  bool use_resampling = false;
};

void validate(const LossSpec& spec);
LossSpec make_loss_spec(LossMethod method);
LossMethod parse_loss_method(const std::string& token);
const char* loss_method_name(LossMethod method);

// Soft label vector: nonnegative, sums to one.
using TargetDistribution = Eigen::VectorXd;

// probs[y] = 1 - delta + delta/K, probs[i != y] = delta/K. delta = 0 is the
// one-hot label.
TargetDistribution lort_targets(int num_classes, int label, double delta);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// -sum_i target_i * ln softmax(z)_i via max-shifted log-sum-exp.
double soft_ce_loss(const Eigen::VectorXd& logits,
                    const TargetDistribution& target);

// softmax(z) - target; sums to zero.
Eigen::VectorXd soft_ce_grad(const Eigen::VectorXd& logits,
                             const TargetDistribution& target);

double focal_weight(double p_true, double gamma);

// Effective-number weight (1 - beta) / (1 - beta^n); beta^n goes through
// exp(n ln beta) so large n cannot underflow in a pow loop.
double cb_weight(int n_true, double beta);

struct LossGrads {
  double loss = 0.0;
  Eigen::MatrixXd weights;  // dL/dW, K x D
  Eigen::VectorXd bias;     // dL/db, K
  Eigen::VectorXd scale;    // dL/dc, K
};

// Full per-sample pipeline: forward logits, method-specific logit transform
// and target, re-weighting, analytic backprop through the active head.
LossGrads per_sample_loss_and_grad(const LossSpec& spec,
                                   const ClassifierParams& params,
                                   const ClassStats& stats,
                                   const Eigen::VectorXd& x, int label,
                                   double cosine_scale = kDefaultCosineScale);

// Resolves the LDAM margin constant against the training counts:
// explicit value if set, else 0.5 * n_min^gamma.
double resolve_ldam_c(const LossSpec& spec, const ClassStats& stats);

}  // namespace ltlab
