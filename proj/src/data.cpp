#include "ltlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ltlab/format.hpp"
#include "ltlab/rng.hpp"

namespace ltlab {

FeatureDataset make_dataset(Eigen::MatrixXd features, std::vector<int> labels,
                            Split split, int num_classes) {
  if (num_classes < 2)
    throw InvalidArgumentError("dataset needs K >= 2 classes");
  if (features.cols() < 1)
    throw InvalidArgumentError("dataset needs D >= 1 feature dimensions");
  if (features.rows() != static_cast<Eigen::Index>(labels.size()))
    throw InvalidArgumentError("feature rows and label count disagree");
  if (split == Split::Train && features.rows() < num_classes)
    throw InvalidDatasetError("train split needs N >= K samples");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw InvalidDatasetError("label out of range at row " +
                                std::to_string(i));
  }
  if (!features.allFinite())
    throw InvalidDatasetError("non-finite feature entry");
  return FeatureDataset{std::move(features), std::move(labels), split,
                        num_classes};
}

int ClassStats::min_count() const {
  return *std::min_element(counts.begin(), counts.end());
}

void validate(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw InvalidArgumentError("K must be >= 2");
  if (spec.dim < 1) throw InvalidArgumentError("D must be >= 1");
  if (spec.n_max < 1) throw InvalidArgumentError("n_max must be >= 1");
  if (spec.imbalance_ratio < 1.0)
    throw InvalidArgumentError("imbalance ratio must be >= 1");
  if (spec.test_per_class < 1)
    throw InvalidArgumentError("test_per_class must be >= 1");
  if (!(spec.class_separation > 0.0))
    throw InvalidArgumentError("class_separation must be > 0");
  if (!(spec.within_std > 0.0))
    throw InvalidArgumentError("within_std must be > 0");
}

std::vector<int> exponential_profile(int num_classes, int n_max,
                                     double imbalance_ratio) {
  if (num_classes < 2) throw InvalidArgumentError("K must be >= 2");
  if (n_max < 1) throw InvalidArgumentError("n_max must be >= 1");
  if (imbalance_ratio < 1.0)
    throw InvalidArgumentError("imbalance ratio must be >= 1");
  std::vector<int> counts(num_classes);
  for (int i = 0; i < num_classes; ++i) {
    const double exponent =
        -static_cast<double>(i) / static_cast<double>(num_classes - 1);
    const double value = n_max * std::pow(imbalance_ratio, exponent);
    // nearbyint under the default FP environment is round-half-to-even
    counts[i] = std::max(1, static_cast<int>(std::nearbyint(value)));
  }
  return counts;
}

namespace {

// Class means sit at class_separation times seeded near-unit directions;
// nearly orthogonal in moderate dimension, which keeps separability tunable
// through the single separation knob.
Eigen::MatrixXd class_means(const SyntheticSpec& spec, Rng& rng) {
  Eigen::MatrixXd means(spec.num_classes, spec.dim);
  for (int k = 0; k < spec.num_classes; ++k) {
    for (int d = 0; d < spec.dim; ++d) means(k, d) = rng.normal();
    const double norm = means.row(k).norm();
    if (norm > 0.0) means.row(k) /= norm;
    means.row(k) *= spec.class_separation;
  }
  return means;
}

FeatureDataset sample_split(const SyntheticSpec& spec,
                            const Eigen::MatrixXd& means,
                            const std::vector<int>& counts, Split split,
                            Rng& rng) {
  Eigen::Index total = 0;
  for (const int c : counts) total += c;
  Eigen::MatrixXd features(total, spec.dim);
  std::vector<int> labels(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (int k = 0; k < spec.num_classes; ++k) {
    for (int s = 0; s < counts[k]; ++s, ++row) {
      for (int d = 0; d < spec.dim; ++d)
        features(row, d) = means(k, d) + spec.within_std * rng.normal();
      labels[static_cast<std::size_t>(row)] = k;
    }
  }
  return make_dataset(std::move(features), std::move(labels), split,
                      spec.num_classes);
}

}  // namespace

DatasetPair generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  Rng rng(derive_seed(spec.seed, "synthetic"));
  const Eigen::MatrixXd means = class_means(spec, rng);
  const std::vector<int> train_counts =
      exponential_profile(spec.num_classes, spec.n_max, spec.imbalance_ratio);
  const std::vector<int> test_counts(spec.num_classes, spec.test_per_class);
  DatasetPair pair{
      sample_split(spec, means, train_counts, Split::Train, rng),
      sample_split(spec, means, test_counts, Split::Test, rng)};
  return pair;
}

std::string serialize_features(const FeatureDataset& ds) {
  std::string out;
  out += "LTFEAT v1 N=" + std::to_string(ds.rows()) +
         " D=" + std::to_string(ds.dim()) +
         " K=" + std::to_string(ds.num_classes) +
         " SPLIT=" + (ds.split == Split::Train ? "train" : "test") + "\n";
  for (Eigen::Index i = 0; i < ds.rows(); ++i) {
    for (Eigen::Index d = 0; d < ds.dim(); ++d) {
      out += format_exact(ds.features(i, d));
      out += ' ';
    }
    out += std::to_string(ds.labels[static_cast<std::size_t>(i)]);
    out += '\n';
  }
  return out;
}

void save_features(const FeatureDataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IngestionError("cannot open " + path + " for writing");
  f << serialize_features(ds);
}

FeatureDataset load_features(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IngestionError("cannot open " + path);
  std::string header;
  if (!std::getline(f, header))
    throw IngestionError(path + ": missing header");
  long n = -1, d = -1, k = -1;
  std::string split_tag;
  {
    const auto tokens = split_ws(header);
    if (tokens.size() != 6 || tokens[0] != "LTFEAT" || tokens[1] != "v1")
      throw IngestionError(path + ": bad header, expected LTFEAT v1");
    for (std::size_t t = 2; t < tokens.size(); ++t) {
      const auto eq = tokens[t].find('=');
      if (eq == std::string::npos)
        throw IngestionError(path + ": bad header field " + tokens[t]);
      const std::string key = tokens[t].substr(0, eq);
      const std::string value = tokens[t].substr(eq + 1);
      try {
        if (key == "N") n = std::stol(value);
        else if (key == "D") d = std::stol(value);
        else if (key == "K") k = std::stol(value);
        else if (key == "SPLIT") split_tag = value;
        else throw IngestionError(path + ": unknown header key " + key);
      } catch (const std::logic_error&) {
        throw IngestionError(path + ": bad header value for " + key);
      }
    }
  }
  if (n < 0 || d < 1 || k < 2)
    throw IngestionError(path + ": invalid header dimensions");
  if (split_tag != "train" && split_tag != "test")
    throw IngestionError(path + ": SPLIT must be train or test");

  Eigen::MatrixXd features(n, d);
  std::vector<int> labels(static_cast<std::size_t>(n));
  std::string line;
  for (long i = 0; i < n; ++i) {
    if (!std::getline(f, line))
      throw IngestionError(path + ": truncated at row " + std::to_string(i));
    const auto tokens = split_ws(line);
    if (tokens.size() != static_cast<std::size_t>(d) + 1)
      throw IngestionError(path + ": row " + std::to_string(i) + " has " +
                           std::to_string(tokens.size()) + " fields, want " +
                           std::to_string(d + 1));
    for (long j = 0; j < d; ++j) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tokens[static_cast<std::size_t>(j)], &used);
      } catch (const std::logic_error&) {
        throw IngestionError(path + ": row " + std::to_string(i) +
                             ": bad float '" +
                             tokens[static_cast<std::size_t>(j)] + "'");
      }
      if (used != tokens[static_cast<std::size_t>(j)].size())
        throw IngestionError(path + ": row " + std::to_string(i) +
                             ": trailing junk in float");
      if (!std::isfinite(v))
        throw IngestionError(path + ": row " + std::to_string(i) +
                             ": non-finite value");
      features(i, j) = v;
    }
    try {
      labels[static_cast<std::size_t>(i)] = std::stoi(tokens.back());
    } catch (const std::logic_error&) {
      throw IngestionError(path + ": row " + std::to_string(i) +
                           ": bad label '" + tokens.back() + "'");
    }
    if (labels[static_cast<std::size_t>(i)] < 0 ||
        labels[static_cast<std::size_t>(i)] >= k)
      throw IngestionError(path + ": row " + std::to_string(i) + ": label " +
                           tokens.back() + " out of range for K=" +
                           std::to_string(k));
  }
  return make_dataset(std::move(features), std::move(labels),
                      split_tag == "train" ? Split::Train : Split::Test,
                      static_cast<int>(k));
}

Manifest load_manifest(const std::string& feature_path) {
  Manifest m;
  std::ifstream f(feature_path + ".manifest");
  if (!f) return m;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IngestionError(feature_path + ".manifest: line " +
                           std::to_string(lineno) + " is not key=value");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "many_threshold") m.many_threshold = std::stoi(value);
      else if (key == "few_threshold") m.few_threshold = std::stoi(value);
      else
        throw IngestionError(feature_path + ".manifest: unknown key " + key);
    } catch (const std::logic_error&) {
      throw IngestionError(feature_path + ".manifest: bad value for " + key);
    }
  }
  return m;
}

ClassStats class_stats(const FeatureDataset& ds, int many_threshold,
                       int few_threshold) {
  std::vector<int> counts(static_cast<std::size_t>(ds.num_classes), 0);
  for (const int y : ds.labels) ++counts[static_cast<std::size_t>(y)];
  for (int k = 0; k < ds.num_classes; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0)
      throw InvalidDatasetError("class " + std::to_string(k) +
                                " has no samples");
  }
  return stats_from_counts(std::move(counts), many_threshold, few_threshold);
}

ClassStats stats_from_counts(std::vector<int> counts, int many_threshold,
                             int few_threshold) {
  if (many_threshold <= few_threshold)
    throw InvalidArgumentError("many_threshold must exceed few_threshold");
  if (counts.empty()) throw InvalidArgumentError("empty counts");
  for (const int c : counts)
    if (c < 1) throw InvalidDatasetError("class counts must be positive");
  ClassStats stats;
  stats.counts = std::move(counts);
  const auto [lo, hi] =
      std::minmax_element(stats.counts.begin(), stats.counts.end());
  stats.imbalance_ratio = static_cast<double>(*hi) / static_cast<double>(*lo);
  stats.groups.reserve(stats.counts.size());
  for (const int c : stats.counts) {
    if (c > many_threshold) stats.groups.push_back(Group::Many);
    else if (c < few_threshold) stats.groups.push_back(Group::Few);
    else stats.groups.push_back(Group::Medium);
  }
  return stats;
}

const char* group_name(Group g) {
  switch (g) {
    case Group::Many: return "Many";
    case Group::Medium: return "Medium";
    case Group::Few: return "Few";
  }
  return "?";
}

}  // namespace ltlab
