#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ltlab/metrics.hpp"
#include "ltlab/training.hpp"

namespace ltlab {

// Monte Carlo setup for the class-wise logit perturbation model
// z'_i = z_i + xi_i * r_i * L_i with xi ~ Normal(0, xi_std).
struct PerturbationSpec {
  double xi_std = 0.5;
  long trials = 100000;
  std::uint64_t seed = 0;
  bool shared_xi = false;  // one xi draw for all classes instead of per class
};

// Hessian of softmax cross-entropy w.r.t. the bias at probability vector s:
// H_ii = s_i (1 - s_i), H_ij = -s_i s_j.
Eigen::MatrixXd bias_hessian(const Eigen::VectorXd& probs);

// Minimum of x H x^T over random unit directions; >= -1e-12*K certifies
// positive semi-definiteness numerically.
double psd_check(const Eigen::MatrixXd& hessian, int trials,
                 std::uint64_t seed);

// Adds the same epsilon to every weight row of a linear head and reports the
// largest softmax probability change over the dataset (zero in exact math).
double shift_invariance_check(const ClassifierParams& params,
                              const FeatureDataset& ds,
                              const Eigen::VectorXd& epsilon);

struct PerturbationResult {
  Eigen::VectorXd ratios;  // E[s'_i] / E[s_i] per class
  double spread = 0.0;     // (max - min) / mean of the ratios
};

// Averages softmax over perturbed copies of the base logits rows.
PerturbationResult perturbation_sim(const Eigen::VectorXd& magnitude,
                                    const Eigen::VectorXd& reg_std,
                                    const PerturbationSpec& pspec,
                                    const Eigen::MatrixXd& base_logits);

// Monte Carlo estimate of E[e^Delta] for Delta ~ Normal(0, sigma^2); the
// closed form is e^{sigma^2/2}.
double lognormal_mean_estimate(double sigma, long trials, std::uint64_t seed);

struct SweepCell {
  double delta = 0.0;
  double lr = 0.0;
  double weight_decay = 0.0;
  std::string method;
  std::optional<GroupAccuracy> accuracy;  // empty when the run diverged
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::uint64_t seed = 0;
};

// One retargeted-loss training run per smooth value.
SweepResult delta_sweep(const FeatureDataset& train,
                        const FeatureDataset& eval,
                        const std::vector<double>& deltas,
                        const TrainConfig& cfg, int jobs = 1);

// Cartesian learning-rate x weight-decay grid under a fixed epoch budget.
SweepResult lr_wd_grid(const FeatureDataset& train, const FeatureDataset& eval,
                       const std::vector<double>& lrs,
                       const std::vector<double>& wds, const TrainConfig& cfg,
                       const LossSpec& spec, int jobs = 1);

// One full retraining method: loss plus head, projection and inference-time
// adjustment, so every unified-formulation row is expressible.
struct MethodSpec {
  std::string name;
  LossSpec loss;
  Head head = Head::Linear;
  PosthocSpec posthoc;
  std::optional<double> maxnorm;
};

MethodSpec parse_method_token(const std::string& token);

struct MethodRow {
  MethodSpec spec;
  GroupAccuracy accuracy;
  MetricsReport report;
};

// Shared frozen features, one retrained head per method.
std::vector<MethodRow> method_comparison(const FeatureDataset& train,
                                         const FeatureDataset& eval,
                                         const std::vector<MethodSpec>& specs,
                                         const TrainConfig& cfg, int jobs = 1);

std::string delta_sweep_csv(const SweepResult& result);
std::string grid_csv(const SweepResult& result);
std::string comparison_csv(const std::vector<MethodRow>& rows);

}  // namespace ltlab
