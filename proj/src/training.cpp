#include "ltlab/training.hpp"

#include <cmath>
#include <numeric>

#include "ltlab/format.hpp"
#include "ltlab/rng.hpp"

namespace ltlab {

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw InvalidArgumentError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw InvalidArgumentError("batch_size must be >= 1");
  if (!(cfg.lr0 > 0.0) || !std::isfinite(cfg.lr0))
    throw InvalidArgumentError("lr0 must be finite and > 0");
  if (!(cfg.weight_decay >= 0.0) || !std::isfinite(cfg.weight_decay))
    throw InvalidArgumentError("weight_decay must be finite and >= 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw InvalidArgumentError("momentum must lie in [0, 1)");
  if (cfg.maxnorm && !(*cfg.maxnorm > 0.0))
    throw InvalidArgumentError("maxnorm radius must be > 0");
  if (!(cfg.cosine_scale > 0.0))
    throw InvalidArgumentError("cosine_scale must be > 0");
}

OptimizerState make_optimizer_state(const ClassifierParams& params) {
  OptimizerState opt;
  opt.vel_weights =
      Eigen::MatrixXd::Zero(params.weights.rows(), params.weights.cols());
  opt.vel_bias = Eigen::VectorXd::Zero(params.bias.size());
  opt.vel_scale = Eigen::VectorXd::Zero(params.scale.size());
  return opt;
}

double cosine_lr(long step, long total_steps, double lr0) {
  if (total_steps < 1) throw InvalidArgumentError("total_steps must be >= 1");
  if (step < 0 || step > total_steps)
    throw InvalidArgumentError("step must lie in [0, total_steps]");
  const double phase = 3.141592653589793238462643383279502884 *
                       static_cast<double>(step) /
                       static_cast<double>(total_steps);
  return lr0 * (1.0 + std::cos(phase)) / 2.0;
}

std::vector<int> balanced_sample_indices(
    const ClassStats& stats, const std::vector<std::vector<int>>& per_class,
    int epoch_len, std::uint64_t seed) {
  const std::size_t k = per_class.size();
  if (k != stats.counts.size())
    throw InvalidArgumentError("per-class lists and stats disagree");
  for (const auto& members : per_class)
    if (members.empty()) throw InvalidDatasetError("empty class in sampler");
  Rng rng(seed);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(epoch_len));
  for (int i = 0; i < epoch_len; ++i) {
    const auto& members = per_class[rng.uniform_index(k)];
    out.push_back(members[rng.uniform_index(members.size())]);
  }
  return out;
}

void sgd_step(ClassifierParams& params, const LossGrads& grads,
              OptimizerState& opt, double lr, double weight_decay,
              double momentum) {
  if (!grads.weights.allFinite() || !grads.bias.allFinite() ||
      !grads.scale.allFinite())
    throw DivergenceError("non-finite gradient at optimizer step " +
                              std::to_string(opt.step),
                          -1);
  opt.vel_weights = momentum * opt.vel_weights + grads.weights +
                    weight_decay * params.weights;
  opt.vel_bias = momentum * opt.vel_bias + grads.bias;
  opt.vel_scale = momentum * opt.vel_scale + grads.scale;
  params.weights -= lr * opt.vel_weights;
  params.bias -= lr * opt.vel_bias;
  params.scale -= lr * opt.vel_scale;
  ++opt.step;
}

namespace {

ClassifierParams init_params(int num_classes, int dim, Head head, Rng& rng) {
  Eigen::MatrixXd w(num_classes, dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      w(i, j) = rng.uniform(-bound, bound);
  return make_params(std::move(w), Eigen::VectorXd::Zero(num_classes),
                     Eigen::VectorXd::Ones(num_classes), head);
}

std::vector<std::vector<int>> per_class_indices(const FeatureDataset& ds) {
  std::vector<std::vector<int>> lists(
      static_cast<std::size_t>(ds.num_classes));
  for (Eigen::Index i = 0; i < ds.rows(); ++i)
    lists[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])]
        .push_back(static_cast<int>(i));
  return lists;
}

std::vector<int> shuffled_indices(Eigen::Index n, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  // Fisher-Yates by hand; std::shuffle is not seed-stable across toolchains
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
  return idx;
}

// Which parameter blocks the current phase updates.
struct UpdateMask {
  bool weights = true;
  bool bias = true;
  bool scale = false;
};

void run_phase(ClassifierParams& params, const FeatureDataset& train,
               const ClassStats& stats,
               const std::vector<std::vector<int>>& per_class,
               const LossSpec& spec, const TrainConfig& cfg,
               const UpdateMask& mask, int phase_epochs,
               const FeatureDataset* eval_set, Rng& rng,
               TrainHistory& history) {
  if (phase_epochs < 1) return;
  const Eigen::Index n = train.rows();
  const long steps_per_epoch =
      (n + cfg.batch_size - 1) / cfg.batch_size;
  const long total_steps = steps_per_epoch * phase_epochs;
  const bool balanced = cfg.sampler == Sampler::ClassBalanced ||
                        spec.use_resampling;

  OptimizerState opt = make_optimizer_state(params);
  long global_step = 0;
  for (int epoch = 0; epoch < phase_epochs; ++epoch) {
    const std::vector<int> order =
        balanced ? balanced_sample_indices(stats, per_class,
                                           static_cast<int>(n), rng.bits())
                 : shuffled_indices(n, rng);
    double epoch_loss = 0.0;
    const double epoch_lr = cosine_lr(global_step, total_steps, cfg.lr0);
    for (long b = 0; b < steps_per_epoch; ++b, ++global_step) {
      const std::size_t lo = static_cast<std::size_t>(b) *
                             static_cast<std::size_t>(cfg.batch_size);
      const std::size_t hi =
          std::min(lo + static_cast<std::size_t>(cfg.batch_size),
                   order.size());
      LossGrads batch;
      batch.weights = Eigen::MatrixXd::Zero(params.weights.rows(),
                                            params.weights.cols());
      batch.bias = Eigen::VectorXd::Zero(params.bias.size());
      batch.scale = Eigen::VectorXd::Zero(params.scale.size());
      for (std::size_t s = lo; s < hi; ++s) {
        const int row = order[s];
        LossGrads g;
        try {
          g = per_sample_loss_and_grad(
              spec, params, stats, train.features.row(row).transpose(),
              train.labels[static_cast<std::size_t>(row)], cfg.cosine_scale);
        } catch (const NumericalDomainError& e) {
          // parameters blew past the float range: report as divergence
          throw DivergenceError(
              std::string("training diverged (") + e.what() +
                  "); last good epoch " +
                  std::to_string(static_cast<int>(history.size()) - 1),
              static_cast<int>(history.size()) - 1);
        }
        batch.loss += g.loss;
        batch.weights += g.weights;
        batch.bias += g.bias;
        batch.scale += g.scale;
      }
      const double inv = 1.0 / static_cast<double>(hi - lo);
      batch.loss *= inv;
      batch.weights *= inv;
      batch.bias *= inv;
      batch.scale *= inv;
      if (!std::isfinite(batch.loss))
        throw DivergenceError(
            "training loss diverged; last good epoch " +
                std::to_string(static_cast<int>(history.size()) - 1),
            static_cast<int>(history.size()) - 1);
      if (!mask.weights) batch.weights.setZero();
      if (!mask.bias) batch.bias.setZero();
      if (!mask.scale) batch.scale.setZero();
      const double lr = cosine_lr(global_step, total_steps, cfg.lr0);
      sgd_step(params, batch, opt, lr,
               mask.weights ? cfg.weight_decay : 0.0, cfg.momentum);
      if (cfg.maxnorm) maxnorm_project(params, *cfg.maxnorm);
      epoch_loss += batch.loss * static_cast<double>(hi - lo);
    }
    EpochRecord rec;
    rec.train_loss = epoch_loss / static_cast<double>(n);
    rec.lr = epoch_lr;
    if (eval_set)
      rec.eval_acc = top1_accuracy(params, *eval_set, cfg.cosine_scale);
    history.push_back(rec);
  }
}

}  // namespace

TrainResult train_classifier(const FeatureDataset& train, const LossSpec& spec,
                             const TrainConfig& cfg,
                             const FeatureDataset* eval_set,
                             const ClassifierParams* init) {
  validate(cfg);
  validate(spec);
  if (eval_set && eval_set->dim() != train.dim())
    throw InvalidArgumentError("train/eval dimensions disagree");
  const ClassStats stats = class_stats(train);
  const auto per_class = per_class_indices(train);

  Rng rng(cfg.seed);
  ClassifierParams params =
      init ? *init
           : init_params(train.num_classes, static_cast<int>(train.dim()),
                         cfg.head, rng);
  if (params.weights.cols() != train.dim())
    throw InvalidArgumentError("init params dimension mismatch");

  TrainHistory history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));
  if (params.head == Head::LWS) {
    // Base classifier first, then freeze W,b and fit the per-class scales.
    const int phase1 = (cfg.epochs + 1) / 2;
    const int phase2 = cfg.epochs - phase1;
    run_phase(params, train, stats, per_class, spec, cfg,
              UpdateMask{true, true, false}, phase1, eval_set, rng, history);
    run_phase(params, train, stats, per_class, spec, cfg,
              UpdateMask{false, false, true}, phase2, eval_set, rng, history);
  } else {
    run_phase(params, train, stats, per_class, spec, cfg,
              UpdateMask{true, true, false}, cfg.epochs, eval_set, rng,
              history);
  }
  return TrainResult{std::move(params), std::move(history)};
}

double top1_accuracy(const ClassifierParams& params, const FeatureDataset& ds,
                     double cosine_scale) {
  if (ds.rows() == 0) throw InvalidDatasetError("empty eval set");
  long correct = 0;
  for (Eigen::Index i = 0; i < ds.rows(); ++i) {
    const int pred = predict(
        forward_logits(params, ds.features.row(i).transpose(), cosine_scale));
    if (pred == ds.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) /
         static_cast<double>(ds.rows());
}

double gradcheck(const LossSpec& spec, Head head, int num_classes, int dim,
                 int trials, double step_h, std::uint64_t seed) {
  if (trials < 1) throw InvalidArgumentError("trials must be >= 1");
  Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    Eigen::MatrixXd w(num_classes, dim);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        w(i, j) = rng.uniform(-1.0, 1.0);
    Eigen::VectorXd b(num_classes), c(num_classes);
    for (int i = 0; i < num_classes; ++i) {
      b(i) = rng.uniform(-0.5, 0.5);
      c(i) = rng.uniform(0.5, 1.5);
    }
    ClassifierParams params = make_params(w, b, c, head);
    Eigen::VectorXd x(dim);
    for (int j = 0; j < dim; ++j) x(j) = rng.uniform(-1.0, 1.0);
    const int label = static_cast<int>(rng.uniform_index(num_classes));
    std::vector<int> counts(static_cast<std::size_t>(num_classes));
    for (auto& n : counts) n = 1 + static_cast<int>(rng.uniform_index(200));
    const ClassStats stats = stats_from_counts(counts);
    const double scale = 4.0;  // keep cosine logits in a trainable range

    const LossGrads analytic =
        per_sample_loss_and_grad(spec, params, stats, x, label, scale);
    const auto loss_at = [&](ClassifierParams& p) {
      return per_sample_loss_and_grad(spec, p, stats, x, label, scale).loss;
    };
    const auto check = [&](double* slot, double analytic_value) {
      const double saved = *slot;
      *slot = saved + step_h;
      const double up = loss_at(params);
      *slot = saved - step_h;
      const double down = loss_at(params);
      *slot = saved;
      const double fd = (up - down) / (2.0 * step_h);
      const double rel = std::abs(analytic_value - fd) /
                         std::max(1.0, std::max(std::abs(analytic_value),
                                                std::abs(fd)));
      worst = std::max(worst, rel);
    };
    for (Eigen::Index i = 0; i < params.weights.rows(); ++i)
      for (Eigen::Index j = 0; j < params.weights.cols(); ++j)
        check(&params.weights(i, j), analytic.weights(i, j));
    for (Eigen::Index i = 0; i < params.bias.size(); ++i)
      check(&params.bias(i), analytic.bias(i));
    for (Eigen::Index i = 0; i < params.scale.size(); ++i)
      check(&params.scale(i), analytic.scale(i));
  }
  return worst;
}

std::string history_csv(const TrainHistory& history) {
  std::string out = "epoch,loss,lr,eval_acc\n";
  for (std::size_t e = 0; e < history.size(); ++e) {
    out += std::to_string(e) + ',' + format_short(history[e].train_loss) +
           ',' + format_short(history[e].lr) + ',';
    if (history[e].eval_acc) out += format_short(*history[e].eval_acc);
    out += '\n';
  }
  return out;
}

Sampler parse_sampler(const std::string& name) {
  if (name == "shuffle") return Sampler::Shuffle;
  if (name == "class-balanced") return Sampler::ClassBalanced;
  throw InvalidArgumentError("unknown sampler '" + name + "'");
}

}  // namespace ltlab
