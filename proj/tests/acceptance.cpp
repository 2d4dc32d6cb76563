// Acceptance suite: one numbered check per line, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "ltlab/analysis.hpp"
#include "ltlab/cli.hpp"
#include "ltlab/metrics.hpp"
#include "ltlab/rng.hpp"
#include "ltlab/training.hpp"

using namespace ltlab;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int id, bool pass, const std::string& summary,
            const std::string& detail) {
  if (!pass) ++g_failures;
  std::printf("criterion %2d [%s] %s (%s)\n", id, pass ? "PASS" : "FAIL",
              summary.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// ------------------------------------------------------------ benchmark runs

// The standard synthetic benchmark: K=20, D=16, n_max=500, IR=100,
// 50 test samples per class, moderate separation, five seeds.
SyntheticSpec benchmark_spec(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_classes = 20;
  spec.dim = 16;
  spec.n_max = 500;
  spec.imbalance_ratio = 100.0;
  spec.test_per_class = 50;
  spec.class_separation = 2.5;
  spec.within_std = 1.0;
  spec.seed = seed;
  return spec;
}

TrainConfig benchmark_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 64;
  cfg.lr0 = 0.3;
  cfg.weight_decay = 0.0;
  cfg.momentum = 0.9;
  cfg.seed = seed;
  return cfg;
}

struct BenchCell {
  GroupAccuracy accuracy;
  double lreg_bin_spread = 0.0;
  double seconds = 0.0;
  std::string checkpoint;
};

BenchCell run_cell(const DatasetPair& data, double delta, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  LossSpec spec = delta == 0.0 ? make_loss_spec(LossMethod::CE)
                               : make_loss_spec(LossMethod::LORT);
  spec.delta = delta;
  const TrainResult result =
      train_classifier(data.train, spec, benchmark_config(seed));
  const ClassStats stats = class_stats(data.train);
  const MetricsReport metrics =
      compute_metrics(result.params, PosthocSpec{}, data.test, stats);
  BenchCell cell;
  cell.accuracy = metrics.accuracy;
  const Eigen::VectorXd bins = bin_means(metrics.magnitude_regularized, 10);
  cell.lreg_bin_spread = bins.maxCoeff() - bins.minCoeff();
  cell.checkpoint = serialize_checkpoint(result.params);
  cell.seconds = std::chrono::duration<double>(
                     std::chrono::steady_clock::now() - start)
                     .count();
  return cell;
}

// ----------------------------------------------------------------- criteria

void criterion_1_gradients() {
  const LossMethod methods[] = {
      LossMethod::CE,   LossMethod::LORT,
      LossMethod::Focal, LossMethod::ClassBalancedCE,
      LossMethod::ClassBalancedBCE, LossMethod::LDAM,
      LossMethod::BalancedSoftmax};
  const Head heads[] = {Head::Linear, Head::Cosine, Head::LWS};
  const std::pair<int, int> dims[] = {{2, 2}, {3, 2}, {5, 4}, {8, 8}, {10, 6}};
  double worst = 0.0;
  std::string worst_name = "-";
  for (const auto method : methods) {
    for (const auto head : heads) {
      int cell = 0;
      for (const auto& [k, d] : dims) {
        // 5 cells x 20 trials = 100 instances per (method, head)
        const double err =
            gradcheck(make_loss_spec(method), head, k, d, 20, 1e-5,
                      derive_seed(1234, std::string(loss_method_name(method)) +
                                            head_name(head) +
                                            std::to_string(cell++)));
        if (err > worst) {
          worst = err;
          worst_name = std::string(loss_method_name(method)) + "/" +
                       head_name(head);
        }
      }
    }
  }
  report(1, worst <= 1e-6,
         "analytic gradients match central finite differences for every "
         "loss and head",
         "max rel err " + fmt(worst) + " at " + worst_name + ", tol 1e-6");
}

void criterion_2_hessian() {
  Rng rng(555);
  double min_form = std::numeric_limits<double>::infinity();
  double worst_ones = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int k = 2 + static_cast<int>(rng.uniform_index(49));
    Eigen::VectorXd s(k);
    for (int i = 0; i < k; ++i) s(i) = -std::log(1.0 - rng.uniform01());
    s /= s.sum();
    const Eigen::MatrixXd h = bias_hessian(s);
    min_form = std::min(min_form, psd_check(h, 1000, rng.bits()) / k);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);
    worst_ones = std::max(worst_ones, std::abs(ones.dot(h * ones)) / k);
  }
  report(2, min_form >= -1e-12 && worst_ones <= 1e-15,
         "bias Hessian is numerically PSD with an exact zero along all-ones",
         "min form/K " + fmt(min_form) + " (tol -1e-12), all-ones |form|/K " +
             fmt(worst_ones) + " (tol 1e-15)");
}

void criterion_3_row_shift() {
  SyntheticSpec spec;
  spec.num_classes = 10;
  spec.dim = 8;
  spec.n_max = 80;
  spec.imbalance_ratio = 10.0;
  spec.test_per_class = 20;
  spec.seed = 77;
  const DatasetPair data = generate_synthetic(spec);
  Rng rng(88);
  Eigen::MatrixXd w(10, 8);
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-1, 1);
  Eigen::VectorXd b(10);
  for (int i = 0; i < 10; ++i) b(i) = rng.uniform(-0.5, 0.5);
  const ClassifierParams params =
      make_params(w, b, Eigen::VectorXd::Ones(10), Head::Linear);
  Eigen::VectorXd eps(8);
  for (int j = 0; j < 8; ++j) eps(j) = rng.normal();
  eps *= 10.0 / eps.norm();

  const double prob_change = shift_invariance_check(params, data.test, eps);
  ClassifierParams shifted = params;
  shifted.weights.rowwise() += eps.transpose();
  const Eigen::VectorXd delta =
      (weight_norms(shifted) - weight_norms(params)).cwiseAbs();
  const bool norms_theta = delta.minCoeff() >= 10.0 / 4.0 &&
                           delta.maxCoeff() <= 2.0 * 10.0;
  report(3, prob_change <= 1e-12 && norms_theta,
         "a common row shift of norm 10 moves no probability but moves "
         "every weight norm",
         "max prob change " + fmt(prob_change) + " (tol 1e-12), norm changes "
         "in [" + fmt(delta.minCoeff()) + ", " + fmt(delta.maxCoeff()) + "]");
}

void criterion_4_perturbation() {
  const double est = lognormal_mean_estimate(0.5, 1000000, 4242);
  const double expected = std::exp(0.125);
  const double rel = std::abs(est - expected) / expected;

  PerturbationSpec pspec;
  pspec.xi_std = 0.5;
  pspec.trials = 1000000;
  pspec.seed = 4243;
  const int k = 10;
  const PerturbationResult balanced = perturbation_sim(
      Eigen::VectorXd::Ones(k), Eigen::VectorXd::Constant(k, 0.5), pspec,
      Eigen::MatrixXd::Zero(1, k));
  report(4, rel <= 0.01 && balanced.spread <= 0.02,
         "normal-perturbation algebra: lognormal mean and balanced ratio "
         "consistency",
         "E[e^D] rel dev " + fmt(rel) + " (tol 0.01), balanced spread " +
             fmt(balanced.spread) + " (tol 0.02)");
}

void criterion_5_targets() {
  double worst_sum = 0.0;
  bool margins_ok = true;
  for (const double delta : {0.0, 0.2, 0.5, 0.9, 0.98, 0.99}) {
    for (const int k : {2, 5, 20}) {
      const TargetDistribution t = lort_targets(k, k / 2, delta);
      worst_sum = std::max(worst_sum, std::abs(t.sum() - 1.0));
      for (int i = 0; i < k; ++i)
        if (i != k / 2 && !(t(k / 2) > t(i))) margins_ok = false;
    }
  }

  SyntheticSpec spec;
  spec.num_classes = 4;
  spec.dim = 5;
  spec.n_max = 40;
  spec.imbalance_ratio = 8.0;
  spec.seed = 3;
  const DatasetPair data = generate_synthetic(spec);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 16;
  cfg.seed = 19;
  LossSpec lort0 = make_loss_spec(LossMethod::LORT);
  lort0.delta = 0.0;
  const std::string ce = serialize_checkpoint(
      train_classifier(data.train, make_loss_spec(LossMethod::CE), cfg)
          .params);
  const std::string zero = serialize_checkpoint(
      train_classifier(data.train, lort0, cfg).params);
  report(5, worst_sum <= 1e-12 && margins_ok && ce == zero,
         "retargeted labels stay normalized with a strict positive margin; "
         "zero smooth value trains bitwise like CE",
         "max |sum-1| " + fmt(worst_sum) + ", margins " +
             (margins_ok ? "strict" : "VIOLATED") + ", checkpoints " +
             (ce == zero ? "identical" : "DIFFER"));
}

void criterion_6_reductions() {
  Rng rng(606);
  const ClassStats eq = stats_from_counts({37, 37, 37, 37, 37, 37});
  double worst = 0.0;
  bool preds_ok = true;
  for (int t = 0; t < 200; ++t) {
    Eigen::MatrixXd w(6, 4);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-1, 1);
    Eigen::VectorXd b(6);
    for (int i = 0; i < 6; ++i) b(i) = rng.uniform(-0.5, 0.5);
    const ClassifierParams p =
        make_params(w, b, Eigen::VectorXd::Ones(6), Head::Linear);
    Eigen::VectorXd x(4);
    for (int j = 0; j < 4; ++j) x(j) = rng.uniform(-1, 1);
    const int y = static_cast<int>(rng.uniform_index(6));
    const Eigen::VectorXd z = forward_logits(p, x);
    const double ce_loss =
        per_sample_loss_and_grad(make_loss_spec(LossMethod::CE), p, eq, x, y)
            .loss;

    // tau-norm at tau=0 against the biasless vanilla forward
    const Eigen::VectorXd h_tau =
        posthoc_adjust(p, z, {PosthocKind::TauNorm, 0.0}, eq, x);
    const Eigen::VectorXd wx = p.weights * x;
    worst = std::max(worst, (h_tau - wx).cwiseAbs().maxCoeff());
    if (predict(h_tau) != predict(wx)) preds_ok = false;

    // logit adjust at tau=0
    const Eigen::VectorXd h_la =
        posthoc_adjust(p, z, {PosthocKind::LogitAdjust, 0.0}, eq, x);
    worst = std::max(worst, (h_la - z).cwiseAbs().maxCoeff());
    if (predict(h_la) != predict(z)) preds_ok = false;

    // balanced softmax with equal counts
    const LossGrads bs = per_sample_loss_and_grad(
        make_loss_spec(LossMethod::BalancedSoftmax), p, eq, x, y);
    worst = std::max(worst, std::abs(bs.loss - ce_loss));
    if (predict(apply_balanced_softmax_offset(z, eq)) != predict(z))
      preds_ok = false;

    // focal at gamma=0
    LossSpec focal = make_loss_spec(LossMethod::Focal);
    focal.gamma = 0.0;
    worst = std::max(
        worst,
        std::abs(per_sample_loss_and_grad(focal, p, eq, x, y).loss - ce_loss));

    // class-balanced at beta=0
    LossSpec cb = make_loss_spec(LossMethod::ClassBalancedCE);
    cb.beta = 0.0;
    worst = std::max(
        worst,
        std::abs(per_sample_loss_and_grad(cb, p, eq, x, y).loss - ce_loss));
  }
  report(6, worst <= 1e-12 && preds_ok,
         "neutral settings of every method collapse onto the vanilla path",
         "max deviation " + fmt(worst) + " (tol 1e-12), predictions " +
             (preds_ok ? "exact" : "DIFFER"));
}

struct BenchmarkTable {
  std::vector<BenchCell> ce, lort90, lort98;
  double max_run_seconds = 0.0;
  double total_seconds = 0.0;
};

BenchmarkTable run_benchmark() {
  const auto start = std::chrono::steady_clock::now();
  BenchmarkTable table;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const DatasetPair data = generate_synthetic(benchmark_spec(seed));
    table.ce.push_back(run_cell(data, 0.0, seed));
    table.lort90.push_back(run_cell(data, 0.9, seed));
    table.lort98.push_back(run_cell(data, 0.98, seed));
  }
  for (const auto* cells : {&table.ce, &table.lort90, &table.lort98})
    for (const auto& cell : *cells)
      table.max_run_seconds = std::max(table.max_run_seconds, cell.seconds);
  table.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return table;
}

void criterion_7_smooth_value(const BenchmarkTable& table) {
  std::vector<double> all0, all90;
  int few_wins = 0;
  for (int s = 0; s < 5; ++s) {
    all0.push_back(table.ce[static_cast<std::size_t>(s)].accuracy.all);
    all90.push_back(table.lort90[static_cast<std::size_t>(s)].accuracy.all);
    const auto& few0 = table.ce[static_cast<std::size_t>(s)].accuracy.few;
    const auto& few98 =
        table.lort98[static_cast<std::size_t>(s)].accuracy.few;
    if (few0 && few98 && *few98 > *few0) ++few_wins;
  }
  const double med0 = median(all0), med90 = median(all90);
  report(7, med90 >= med0 && few_wins >= 4,
         "large smooth values lift overall and Few-group accuracy on the "
         "benchmark",
         "median all: 0.9 -> " + fmt(med90) + " vs 0 -> " + fmt(med0) +
             "; Few wins " + std::to_string(few_wins) + "/5 (need 4)");
}

void criterion_8_magnitude_balance(const BenchmarkTable& table) {
  int wins = 0;
  std::string spreads;
  for (int s = 0; s < 5; ++s) {
    const double ce = table.ce[static_cast<std::size_t>(s)].lreg_bin_spread;
    const double lort =
        table.lort98[static_cast<std::size_t>(s)].lreg_bin_spread;
    if (lort < ce) ++wins;
    spreads += fmt(lort) + "<" + fmt(ce) + (s < 4 ? " " : "");
  }
  report(8, wins >= 4,
         "retargeting narrows the binned regularized-magnitude spread "
         "against CE",
         "wins " + std::to_string(wins) + "/5: " + spreads);
}

void criterion_9_imbalance_pattern(const BenchmarkTable& table) {
  int ordered = 0;
  std::string detail;
  for (int s = 0; s < 5; ++s) {
    const GroupAccuracy& acc = table.ce[static_cast<std::size_t>(s)].accuracy;
    if (acc.many && acc.medium && acc.few && *acc.many > *acc.medium &&
        *acc.medium > *acc.few)
      ++ordered;
    if (s == 0)
      detail = "seed1 CE many/medium/few = " + fmt(*acc.many) + "/" +
               fmt(*acc.medium) + "/" + fmt(*acc.few);
  }
  report(9, ordered >= 4,
         "vanilla CE shows the Many > Medium > Few pattern",
         detail + "; ordered " + std::to_string(ordered) + "/5 (need 4)");
}

void criterion_10_determinism(const BenchmarkTable& table) {
  // one benchmark cell repeated must be byte-identical
  const DatasetPair data = generate_synthetic(benchmark_spec(1));
  const BenchCell again = run_cell(data, 0.98, 1);
  const bool cell_identical = again.checkpoint == table.lort98[0].checkpoint;

  // the verification suite, run twice through the CLI, byte-identical
  const fs::path dir = fs::temp_directory_path() / "ltlab_acceptance";
  fs::remove_all(dir);
  const auto run_verify = [&](const std::string& sub) {
    std::ostringstream sink;
    auto* old = std::cout.rdbuf(sink.rdbuf());
    const auto t0 = std::chrono::steady_clock::now();
    const int rc = run_cli({"verify", "--seed", "11", "--out",
                            (dir / sub).string()});
    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
    std::cout.rdbuf(old);
    return std::pair<int, double>(rc, secs);
  };
  const auto [rc1, secs1] = run_verify("a");
  const auto [rc2, secs2] = run_verify("b");
  std::ifstream fa(dir / "a" / "verify_report.txt"),
      fb(dir / "b" / "verify_report.txt");
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  const bool verify_ok = rc1 == 0 && rc2 == 0 && sa.str() == sb.str() &&
                         !sa.str().empty();

  const bool budget_ok = table.max_run_seconds < 60.0 &&
                         table.total_seconds < 300.0 &&
                         secs1 + secs2 < 300.0;
  report(10, cell_identical && verify_ok && budget_ok,
         "verify suite and benchmark are reproducible and inside the time "
         "budget",
         std::string("repeat cell ") +
             (cell_identical ? "identical" : "DIFFERS") + ", verify " +
             (verify_ok ? "stable rc=0" : "UNSTABLE") + ", slowest run " +
             fmt(table.max_run_seconds) + "s, benchmark " +
             fmt(table.total_seconds) + "s, verify " + fmt(secs1) + "s");
}

}  // namespace

int main() {
  std::printf("acceptance suite: synthetic benchmark K=20 D=16 n_max=500 "
              "IR=100 seeds 1..5\n");
  criterion_1_gradients();
  criterion_2_hessian();
  criterion_3_row_shift();
  criterion_4_perturbation();
  criterion_5_targets();
  criterion_6_reductions();
  const BenchmarkTable table = run_benchmark();
  criterion_7_smooth_value(table);
  criterion_8_magnitude_balance(table);
  criterion_9_imbalance_pattern(table);
  criterion_10_determinism(table);
  std::printf("acceptance result: %d of 10 criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
