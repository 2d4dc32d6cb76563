#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ltlab/errors.hpp"

namespace ltlab {

enum class Split { Train, Test };
enum class Group { Many, Medium, Few };

constexpr int kDefaultManyThreshold = 100;
constexpr int kDefaultFewThreshold = 20;

// Fixed feature vectors with integer labels: the frozen-backbone output the
// classifier retraining stage consumes. Immutable after construction.
struct FeatureDataset {
  Eigen::MatrixXd features;  // N x D
  std::vector<int> labels;   // values in [0, K)
  Split split = Split::Train;
  int num_classes = 0;

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
};

// Validates invariants (label range, finiteness, N >= K on train splits).
FeatureDataset make_dataset(Eigen::MatrixXd features, std::vector<int> labels,
                            Split split, int num_classes);

struct ClassStats {
  std::vector<int> counts;    // n_i, one per class, all positive
  double imbalance_ratio = 1.0;  // max(counts) / min(counts)
  std::vector<Group> groups;

  int num_classes() const { return static_cast<int>(counts.size()); }
  int min_count() const;
};

struct SyntheticSpec {
  int num_classes = 10;
  int dim = 8;
  int n_max = 100;
  double imbalance_ratio = 10.0;
  int test_per_class = 20;
  double class_separation = 3.0;  // distance scale between cluster means
  double within_std = 1.0;        // isotropic cluster standard deviation
  std::uint64_t seed = 0;
};

void validate(const SyntheticSpec& spec);

// counts[i] = round(n_max * IR^(-i/(K-1))), round-half-even, clamped to >= 1.
std::vector<int> exponential_profile(int num_classes, int n_max,
                                     double imbalance_ratio);

struct DatasetPair {
  FeatureDataset train;
  FeatureDataset test;
};

// Seeded Gaussian clusters: one mean direction per class scaled by
// class_separation, isotropic within_std noise. Train counts follow the
// exponential profile; the test split is balanced at test_per_class.
DatasetPair generate_synthetic(const SyntheticSpec& spec);

// LTFEAT v1 text format.
FeatureDataset load_features(const std::string& path);
void save_features(const FeatureDataset& ds, const std::string& path);
std::string serialize_features(const FeatureDataset& ds);

// Optional sidecar manifest ("<path>.manifest", key=value) overriding the
// Many/Few thresholds.
struct Manifest {
  std::optional<int> many_threshold;
  std::optional<int> few_threshold;
};
Manifest load_manifest(const std::string& feature_path);

// Per-class counts, imbalance ratio and Many/Medium/Few assignment.
// Group boundaries: count > many_threshold -> Many, count < few_threshold ->
// Few, otherwise Medium (boundary counts are Medium).
ClassStats class_stats(const FeatureDataset& ds,
                       int many_threshold = kDefaultManyThreshold,
                       int few_threshold = kDefaultFewThreshold);

ClassStats stats_from_counts(std::vector<int> counts,
                             int many_threshold = kDefaultManyThreshold,
                             int few_threshold = kDefaultFewThreshold);

const char* group_name(Group g);

}  // namespace ltlab
