#include "ltlab/metrics.hpp"

#include <cmath>

#include "ltlab/format.hpp"

namespace ltlab {

LogitsStats collect_logits_stats(const ClassifierParams& params,
                                 const PosthocSpec& posthoc,
                                 const FeatureDataset& eval,
                                 const ClassStats& stats,
                                 double cosine_scale) {
  const int k = params.num_classes();
  const Eigen::Index n = eval.rows();
  if (n == 0) throw InvalidDatasetError("empty eval set");

  Eigen::MatrixXd logits(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd x = eval.features.row(i).transpose();
    logits.row(i) =
        posthoc_adjust(params, forward_logits(params, x, cosine_scale),
                       posthoc, stats, x)
            .transpose();
  }

  LogitsStats ls;
  ls.pos_mean.resize(k);
  ls.neg_mean.resize(k);
  ls.pos_std.resize(k);
  ls.neg_std.resize(k);
  ls.pos_count.resize(static_cast<std::size_t>(k));
  ls.neg_count.resize(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    double pos_sum = 0.0, neg_sum = 0.0;
    long pos_n = 0, neg_n = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (eval.labels[static_cast<std::size_t>(i)] == c) {
        pos_sum += logits(i, c);
        ++pos_n;
      } else {
        neg_sum += logits(i, c);
        ++neg_n;
      }
    }
    if (pos_n == 0)
      throw MetricUndefinedError("class " + std::to_string(c) +
                                 " has no positives in the eval set");
    ls.pos_mean(c) = pos_sum / static_cast<double>(pos_n);
    ls.neg_mean(c) = neg_n > 0 ? neg_sum / static_cast<double>(neg_n) : 0.0;
    double pos_sq = 0.0, neg_sq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = logits(i, c);
      if (eval.labels[static_cast<std::size_t>(i)] == c)
        pos_sq += (v - ls.pos_mean(c)) * (v - ls.pos_mean(c));
      else
        neg_sq += (v - ls.neg_mean(c)) * (v - ls.neg_mean(c));
    }
    ls.pos_std(c) = std::sqrt(pos_sq / static_cast<double>(pos_n));
    ls.neg_std(c) =
        neg_n > 0 ? std::sqrt(neg_sq / static_cast<double>(neg_n)) : 0.0;
    ls.pos_count[static_cast<std::size_t>(c)] = pos_n;
    ls.neg_count[static_cast<std::size_t>(c)] = neg_n;
  }
  return ls;
}

Eigen::VectorXd logits_magnitude(const LogitsStats& ls) {
  return ls.pos_mean - ls.neg_mean;
}

Eigen::VectorXd regularized_std(const LogitsStats& ls,
                                const Eigen::VectorXd& magnitude,
                                double tolerance) {
  Eigen::VectorXd r(magnitude.size());
  for (Eigen::Index i = 0; i < magnitude.size(); ++i) {
    if (std::abs(magnitude(i)) <= tolerance)
      throw MetricUndefinedError("magnitude of class " + std::to_string(i) +
                                 " is below tolerance; r undefined");
    r(i) = ls.pos_std(i) / magnitude(i);
  }
  return r;
}

Eigen::VectorXd l1_regularize_magnitude(const Eigen::VectorXd& magnitude) {
  const double norm1 = magnitude.array().abs().sum();
  if (norm1 <= 0.0)
    throw InvalidArgumentError("all-zero magnitude cannot be regularized");
  return magnitude * (static_cast<double>(magnitude.size()) / norm1);
}

GroupAccuracy group_accuracy(const ClassifierParams& params,
                             const PosthocSpec& posthoc,
                             const FeatureDataset& eval,
                             const ClassStats& stats, double cosine_scale) {
  if (eval.rows() == 0) throw InvalidDatasetError("empty eval set");
  long correct_all = 0;
  long total_group[3] = {0, 0, 0};
  long correct_group[3] = {0, 0, 0};
  for (Eigen::Index i = 0; i < eval.rows(); ++i) {
    const Eigen::VectorXd x = eval.features.row(i).transpose();
    const int pred = predict(
        posthoc_adjust(params, forward_logits(params, x, cosine_scale),
                       posthoc, stats, x));
    const int label = eval.labels[static_cast<std::size_t>(i)];
    const int g = static_cast<int>(stats.groups[static_cast<std::size_t>(label)]);
    ++total_group[g];
    if (pred == label) {
      ++correct_all;
      ++correct_group[g];
    }
  }
  const auto pct = [](long num, long den) {
    return 100.0 * static_cast<double>(num) / static_cast<double>(den);
  };
  GroupAccuracy acc;
  acc.all = pct(correct_all, eval.rows());
  if (total_group[0] > 0) acc.many = pct(correct_group[0], total_group[0]);
  if (total_group[1] > 0) acc.medium = pct(correct_group[1], total_group[1]);
  if (total_group[2] > 0) acc.few = pct(correct_group[2], total_group[2]);
  return acc;
}

Eigen::VectorXd weight_norms(const ClassifierParams& params) {
  return params.weights.rowwise().norm();
}

MetricsReport compute_metrics(const ClassifierParams& params,
                              const PosthocSpec& posthoc,
                              const FeatureDataset& eval,
                              const ClassStats& stats, double cosine_scale) {
  const LogitsStats ls =
      collect_logits_stats(params, posthoc, eval, stats, cosine_scale);
  MetricsReport report;
  report.magnitude = logits_magnitude(ls);
  report.magnitude_regularized = l1_regularize_magnitude(report.magnitude);
  report.reg_std = regularized_std(ls, report.magnitude);
  Eigen::VectorXd r_neg(report.magnitude.size());
  for (Eigen::Index i = 0; i < r_neg.size(); ++i)
    r_neg(i) = ls.neg_std(i) / report.magnitude(i);
  report.reg_std_neg = r_neg;
  report.weight_norms = weight_norms(params);
  report.accuracy = group_accuracy(params, posthoc, eval, stats, cosine_scale);
  report.stats = stats;
  return report;
}

Eigen::VectorXd bin_means(const Eigen::VectorXd& values, int bin_size) {
  if (bin_size < 1) throw InvalidArgumentError("bin_size must be >= 1");
  const Eigen::Index bins = (values.size() + bin_size - 1) / bin_size;
  Eigen::VectorXd out(bins);
  for (Eigen::Index b = 0; b < bins; ++b) {
    const Eigen::Index lo = b * bin_size;
    const Eigen::Index hi = std::min<Eigen::Index>(lo + bin_size, values.size());
    out(b) = values.segment(lo, hi - lo).mean();
  }
  return out;
}

std::string metrics_csv(const MetricsReport& report) {
  std::string out = "class,count,group,L,L_reg,r,weight_norm\n";
  for (Eigen::Index i = 0; i < report.magnitude.size(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    out += std::to_string(i) + ',' + std::to_string(report.stats.counts[idx]) +
           ',' + group_name(report.stats.groups[idx]) + ',' +
           format_short(report.magnitude(i)) + ',' +
           format_short(report.magnitude_regularized(i)) + ',' +
           format_short(report.reg_std(i)) + ',' +
           format_short(report.weight_norms(i)) + '\n';
  }
  return out;
}

std::string metrics_binned_csv(const MetricsReport& report, int bin_size) {
  const Eigen::VectorXd l_bins =
      bin_means(report.magnitude_regularized, bin_size);
  const Eigen::VectorXd r_bins = bin_means(report.reg_std, bin_size);
  std::string out = "bin,class_lo,class_hi,L_reg_mean,r_mean\n";
  for (Eigen::Index b = 0; b < l_bins.size(); ++b) {
    const Eigen::Index lo = b * bin_size;
    const Eigen::Index hi = std::min<Eigen::Index>(
        lo + bin_size - 1, report.magnitude.size() - 1);
    out += std::to_string(b) + ',' + std::to_string(lo) + ',' +
           std::to_string(hi) + ',' + format_short(l_bins(b)) + ',' +
           format_short(r_bins(b)) + '\n';
  }
  return out;
}

namespace {

std::string acc_or_absent(const std::optional<double>& v) {
  return v ? format_short(*v) : std::string("absent");
}

}  // namespace

std::string metrics_keyvalue(const MetricsReport& report) {
  std::string out;
  out += "acc_all=" + format_short(report.accuracy.all) + '\n';
  out += "acc_many=" + acc_or_absent(report.accuracy.many) + '\n';
  out += "acc_medium=" + acc_or_absent(report.accuracy.medium) + '\n';
  out += "acc_few=" + acc_or_absent(report.accuracy.few) + '\n';
  out += "imbalance_ratio=" + format_short(report.stats.imbalance_ratio) + '\n';
  const auto vec_line = [&out](const char* key, const Eigen::VectorXd& v) {
    out += key;
    out += '=';
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (i) out += ' ';
      out += format_short(v(i));
    }
    out += '\n';
  };
  vec_line("L", report.magnitude);
  vec_line("L_reg", report.magnitude_regularized);
  vec_line("r", report.reg_std);
  vec_line("r_neg", report.reg_std_neg);
  vec_line("weight_norm", report.weight_norms);
  return out;
}

}  // namespace ltlab
