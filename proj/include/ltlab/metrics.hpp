#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "ltlab/classifier.hpp"
#include "ltlab/data.hpp"

namespace ltlab {

// Per-class logit statistics over an evaluation set: positives are samples
// whose true label is the class, negatives are everyone else's logits for
// that class. Standard deviations are population form (divide by n).
struct LogitsStats {
  Eigen::VectorXd pos_mean;
  Eigen::VectorXd neg_mean;
  Eigen::VectorXd pos_std;
  Eigen::VectorXd neg_std;
  std::vector<long> pos_count;
  std::vector<long> neg_count;
};

constexpr double kMagnitudeTolerance = 1e-9;

struct GroupAccuracy {
  double all = 0.0;
  std::optional<double> many;
  std::optional<double> medium;
  std::optional<double> few;
};

struct MetricsReport {
  Eigen::VectorXd magnitude;              // L
  Eigen::VectorXd magnitude_regularized;  // 1-norm regularized L
  Eigen::VectorXd reg_std;                // r = pos std / L
  Eigen::VectorXd reg_std_neg;            // variant using the negative std
  Eigen::VectorXd weight_norms;
  GroupAccuracy accuracy;
  ClassStats stats;
};

LogitsStats collect_logits_stats(const ClassifierParams& params,
                                 const PosthocSpec& posthoc,
                                 const FeatureDataset& eval,
                                 const ClassStats& stats,
                                 double cosine_scale = kDefaultCosineScale);

// L_i = E[z_Pi] - E[z_Ni], the positive/negative mean logit gap per class.
Eigen::VectorXd logits_magnitude(const LogitsStats& ls);

// r_i = sigma_i / L_i; classes with |L_i| <= tolerance are undefined.
Eigen::VectorXd regularized_std(const LogitsStats& ls,
                                const Eigen::VectorXd& magnitude,
                                double tolerance = kMagnitudeTolerance);

// Scales L so the mean absolute value is one (1-norm = K), making curves
// comparable across methods that differ only in overall logit scale.
Eigen::VectorXd l1_regularize_magnitude(const Eigen::VectorXd& magnitude);

GroupAccuracy group_accuracy(const ClassifierParams& params,
                             const PosthocSpec& posthoc,
                             const FeatureDataset& eval,
                             const ClassStats& stats,
                             double cosine_scale = kDefaultCosineScale);

Eigen::VectorXd weight_norms(const ClassifierParams& params);

MetricsReport compute_metrics(const ClassifierParams& params,
                              const PosthocSpec& posthoc,
                              const FeatureDataset& eval,
                              const ClassStats& stats,
                              double cosine_scale = kDefaultCosineScale);

// Means over consecutive bins of bin_size classes (Fig-style curves).
Eigen::VectorXd bin_means(const Eigen::VectorXd& values, int bin_size = 10);

std::string metrics_csv(const MetricsReport& report);
std::string metrics_binned_csv(const MetricsReport& report, int bin_size = 10);
std::string metrics_keyvalue(const MetricsReport& report);

}  // namespace ltlab
