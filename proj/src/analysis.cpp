#include "ltlab/analysis.hpp"

#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <thread>

#include "ltlab/format.hpp"
#include "ltlab/rng.hpp"

namespace ltlab {

Eigen::MatrixXd bias_hessian(const Eigen::VectorXd& probs) {
  const Eigen::Index k = probs.size();
  if (k < 2) throw InvalidArgumentError("need at least two classes");
  if ((probs.array() <= 0.0).any())
    throw InvalidArgumentError("probabilities must be strictly positive");
  if (std::abs(probs.sum() - 1.0) > 1e-9)
    throw InvalidArgumentError("probabilities must sum to one");
  Eigen::MatrixXd h = -probs * probs.transpose();
  h.diagonal() = probs.array() * (1.0 - probs.array());
  return h;
}

double psd_check(const Eigen::MatrixXd& hessian, int trials,
                 std::uint64_t seed) {
  if (hessian.rows() != hessian.cols())
    throw InvalidArgumentError("Hessian must be square");
  if (trials < 1) throw InvalidArgumentError("trials must be >= 1");
  Rng rng(seed);
  const Eigen::Index k = hessian.rows();
  double min_form = std::numeric_limits<double>::infinity();
  Eigen::VectorXd x(k);
  for (int t = 0; t < trials; ++t) {
    for (Eigen::Index i = 0; i < k; ++i) x(i) = rng.normal();
    const double norm = x.norm();
    if (norm == 0.0) continue;
    x /= norm;
    min_form = std::min(min_form, x.dot(hessian * x));
  }
  return min_form;
}

double shift_invariance_check(const ClassifierParams& params,
                              const FeatureDataset& ds,
                              const Eigen::VectorXd& epsilon) {
  if (params.head != Head::Linear)
    throw InvalidArgumentError("shift invariance holds for the linear head");
  if (epsilon.size() != params.weights.cols())
    throw InvalidArgumentError("epsilon dimension mismatch");
  ClassifierParams shifted = params;
  shifted.weights.rowwise() += epsilon.transpose();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < ds.rows(); ++i) {
    const Eigen::VectorXd x = ds.features.row(i).transpose();
    const Eigen::VectorXd s0 = softmax(forward_logits(params, x, 1.0));
    const Eigen::VectorXd s1 = softmax(forward_logits(shifted, x, 1.0));
    worst = std::max(worst, (s0 - s1).cwiseAbs().maxCoeff());
  }
  return worst;
}

PerturbationResult perturbation_sim(const Eigen::VectorXd& magnitude,
                                    const Eigen::VectorXd& reg_std,
                                    const PerturbationSpec& pspec,
                                    const Eigen::MatrixXd& base_logits) {
  if (pspec.trials < 1) throw InvalidArgumentError("trials must be >= 1");
  if (!(pspec.xi_std >= 0.0))
    throw InvalidArgumentError("xi_std must be >= 0");
  const Eigen::Index k = base_logits.cols();
  if (magnitude.size() != k || reg_std.size() != k)
    throw InvalidArgumentError("magnitude/reg_std length mismatch");
  if (base_logits.rows() == 0)
    throw InvalidArgumentError("need at least one base logits row");

  const Eigen::VectorXd delta_scale =
      reg_std.cwiseProduct(magnitude);  // sigma(z_i) = r_i * L_i
  Rng rng(derive_seed(pspec.seed, "perturbation"));

  // Base and perturbed means share one trial loop (common random numbers),
  // so xi_std = 0 yields bitwise-identical sums and ratios of exactly one.
  Eigen::VectorXd base_mean = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd perturbed_mean = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd z(k);
  for (long t = 0; t < pspec.trials; ++t) {
    const Eigen::Index row =
        static_cast<Eigen::Index>(t % base_logits.rows());
    const double shared = pspec.shared_xi ? rng.normal(0.0, pspec.xi_std) : 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
      const double xi =
          pspec.shared_xi ? shared : rng.normal(0.0, pspec.xi_std);
      z(i) = base_logits(row, i) + xi * delta_scale(i);
    }
    base_mean += softmax(base_logits.row(row).transpose());
    perturbed_mean += softmax(z);
  }
  base_mean /= static_cast<double>(pspec.trials);
  perturbed_mean /= static_cast<double>(pspec.trials);

  PerturbationResult result;
  result.ratios = perturbed_mean.cwiseQuotient(base_mean);
  const double mean_ratio = result.ratios.mean();
  result.spread =
      (result.ratios.maxCoeff() - result.ratios.minCoeff()) / mean_ratio;
  return result;
}

double lognormal_mean_estimate(double sigma, long trials, std::uint64_t seed) {
  if (trials < 1) throw InvalidArgumentError("trials must be >= 1");
  Rng rng(derive_seed(seed, "lognormal"));
  double sum = 0.0;
  for (long t = 0; t < trials; ++t) sum += std::exp(rng.normal(0.0, sigma));
  return sum / static_cast<double>(trials);
}

namespace {

// Runs cells[0..n) with fn, optionally on a small thread pool. Each cell is
// seeded independently so the outcome is identical for any jobs value.
void parallel_cells(std::size_t n, int jobs,
                    const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const std::size_t workers = std::min(static_cast<std::size_t>(jobs), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::optional<GroupAccuracy> train_and_eval(const FeatureDataset& train,
                                            const FeatureDataset& eval,
                                            const LossSpec& spec,
                                            const TrainConfig& cfg) {
  try {
    const TrainResult result = train_classifier(train, spec, cfg);
    const ClassStats stats = class_stats(train);
    return group_accuracy(result.params, PosthocSpec{}, eval, stats,
                          cfg.cosine_scale);
  } catch (const DivergenceError&) {
    return std::nullopt;
  }
}

}  // namespace

SweepResult delta_sweep(const FeatureDataset& train,
                        const FeatureDataset& eval,
                        const std::vector<double>& deltas,
                        const TrainConfig& cfg, int jobs) {
  for (const double d : deltas)
    if (!(d >= 0.0 && d < 1.0))
      throw InvalidArgumentError("deltas must lie in [0, 1)");
  SweepResult result;
  result.seed = cfg.seed;
  result.cells.resize(deltas.size());
  parallel_cells(deltas.size(), jobs, [&](std::size_t i) {
    LossSpec spec = make_loss_spec(LossMethod::LORT);
    spec.delta = deltas[i];
    TrainConfig cell_cfg = cfg;
    cell_cfg.seed =
        derive_seed(cfg.seed, "delta=" + format_exact(deltas[i]));
    SweepCell cell;
    cell.delta = deltas[i];
    cell.lr = cfg.lr0;
    cell.weight_decay = cfg.weight_decay;
    cell.accuracy = train_and_eval(train, eval, spec, cell_cfg);
    result.cells[i] = std::move(cell);
  });
  return result;
}

SweepResult lr_wd_grid(const FeatureDataset& train, const FeatureDataset& eval,
                       const std::vector<double>& lrs,
                       const std::vector<double>& wds, const TrainConfig& cfg,
                       const LossSpec& spec, int jobs) {
  if (lrs.empty() || wds.empty())
    throw InvalidArgumentError("grid axes must be non-empty");
  SweepResult result;
  result.seed = cfg.seed;
  result.cells.resize(lrs.size() * wds.size());
  parallel_cells(result.cells.size(), jobs, [&](std::size_t i) {
    const double lr = lrs[i / wds.size()];
    const double wd = wds[i % wds.size()];
    TrainConfig cell_cfg = cfg;
    cell_cfg.lr0 = lr;
    cell_cfg.weight_decay = wd;
    // cell key, not axis position: permuting the axes cannot change seeds
    cell_cfg.seed = derive_seed(
        cfg.seed, "lr=" + format_exact(lr) + ";wd=" + format_exact(wd));
    SweepCell cell;
    cell.lr = lr;
    cell.weight_decay = wd;
    cell.method = loss_method_name(spec.method);
    cell.accuracy = train_and_eval(train, eval, spec, cell_cfg);
    result.cells[i] = std::move(cell);
  });
  return result;
}

MethodSpec parse_method_token(const std::string& token) {
  MethodSpec m;
  m.name = token;
  if (token == "cosine") {
    m.loss = make_loss_spec(LossMethod::CE);
    m.head = Head::Cosine;
  } else if (token == "lws") {
    m.loss = make_loss_spec(LossMethod::CE);
    m.head = Head::LWS;
  } else if (token == "rs") {
    m.loss = make_loss_spec(LossMethod::CE);
    m.loss.use_resampling = true;
  } else if (token == "maxnorm") {
    m.loss = make_loss_spec(LossMethod::CE);
    m.maxnorm = kDefaultMaxNormRadius;
  } else if (token == "tau-norm") {
    m.loss = make_loss_spec(LossMethod::CE);
    m.posthoc = PosthocSpec{PosthocKind::TauNorm, 1.0};
  } else if (token == "logit-adjust") {
    m.loss = make_loss_spec(LossMethod::CE);
    m.posthoc = PosthocSpec{PosthocKind::LogitAdjust, 1.0};
  } else {
    m.loss = make_loss_spec(parse_loss_method(token));
  }
  return m;
}

std::vector<MethodRow> method_comparison(const FeatureDataset& train,
                                         const FeatureDataset& eval,
                                         const std::vector<MethodSpec>& specs,
                                         const TrainConfig& cfg, int jobs) {
  const ClassStats stats = class_stats(train);
  std::vector<MethodRow> rows(specs.size());
  parallel_cells(specs.size(), jobs, [&](std::size_t i) {
    const MethodSpec& m = specs[i];
    TrainConfig cell_cfg = cfg;
    cell_cfg.head = m.head;
    cell_cfg.maxnorm = m.maxnorm;
    cell_cfg.seed = derive_seed(cfg.seed, "method=" + m.name);
    const TrainResult result = train_classifier(train, m.loss, cell_cfg);
    MethodRow row;
    row.spec = m;
    row.report = compute_metrics(result.params, m.posthoc, eval, stats,
                                 cfg.cosine_scale);
    row.accuracy = row.report.accuracy;
    rows[i] = std::move(row);
  });
  return rows;
}

namespace {

std::string acc_fields(const std::optional<GroupAccuracy>& acc) {
  if (!acc) return ",,,";
  const auto opt = [](const std::optional<double>& v) {
    return v ? format_short(*v) : std::string();
  };
  return format_short(acc->all) + ',' + opt(acc->many) + ',' +
         opt(acc->medium) + ',' + opt(acc->few);
}

}  // namespace

std::string delta_sweep_csv(const SweepResult& result) {
  std::string out = "delta,acc_all,acc_many,acc_medium,acc_few\n";
  for (const auto& cell : result.cells)
    out += format_short(cell.delta) + ',' + acc_fields(cell.accuracy) + '\n';
  return out;
}

std::string grid_csv(const SweepResult& result) {
  std::string out = "lr,wd,acc_all,acc_many,acc_medium,acc_few\n";
  for (const auto& cell : result.cells)
    out += format_short(cell.lr) + ',' + format_short(cell.weight_decay) +
           ',' + acc_fields(cell.accuracy) + '\n';
  return out;
}

std::string comparison_csv(const std::vector<MethodRow>& rows) {
  std::string out = "method,acc_all,acc_many,acc_medium,acc_few\n";
  for (const auto& row : rows)
    out += row.spec.name + ',' + acc_fields(row.accuracy) + '\n';
  return out;
}

}  // namespace ltlab
