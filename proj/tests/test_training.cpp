#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ltlab/analysis.hpp"
#include "ltlab/rng.hpp"
#include "ltlab/training.hpp"

using namespace ltlab;

namespace {

DatasetPair small_separable(std::uint64_t seed = 3) {
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.dim = 4;
  spec.n_max = 40;
  spec.imbalance_ratio = 4.0;
  spec.test_per_class = 15;
  spec.class_separation = 10.0;
  spec.within_std = 0.01;
  spec.seed = seed;
  return generate_synthetic(spec);
}

TrainConfig quick_config(std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 16;
  cfg.lr0 = 0.5;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("cosine schedule endpoints") {
  CHECK(cosine_lr(0, 100, 0.4) == 0.4);
  CHECK(cosine_lr(100, 100, 0.4) == doctest::Approx(0.0).epsilon(1e-16));
  CHECK(cosine_lr(50, 100, 0.4) == doctest::Approx(0.2).epsilon(1e-14));
  CHECK_THROWS_AS(cosine_lr(101, 100, 0.4), InvalidArgumentError);
  CHECK_THROWS_AS(cosine_lr(-1, 100, 0.4), InvalidArgumentError);
}

TEST_CASE("balanced sampling equalizes class frequency") {
  const ClassStats stats = stats_from_counts({100, 10});
  std::vector<std::vector<int>> per_class(2);
  for (int i = 0; i < 100; ++i) per_class[0].push_back(i);
  for (int i = 0; i < 10; ++i) per_class[1].push_back(100 + i);

  const auto draws = balanced_sample_indices(stats, per_class, 100000, 99);
  long first = 0;
  for (const int idx : draws)
    if (idx < 100) ++first;
  const double freq = static_cast<double>(first) / 100000.0;
  CHECK(freq == doctest::Approx(0.5).epsilon(0.02));  // 0.5 +- 0.01

  SUBCASE("same seed reproduces the sequence") {
    CHECK(balanced_sample_indices(stats, per_class, 1000, 7) ==
          balanced_sample_indices(stats, per_class, 1000, 7));
    CHECK(balanced_sample_indices(stats, per_class, 1000, 7) !=
          balanced_sample_indices(stats, per_class, 1000, 8));
  }
  SUBCASE("balanced counts match the uniform law") {
    const ClassStats eq = stats_from_counts({50, 50});
    std::vector<std::vector<int>> lists(2);
    for (int i = 0; i < 50; ++i) {
      lists[0].push_back(i);
      lists[1].push_back(50 + i);
    }
    std::vector<long> hits(100, 0);
    for (const int idx : balanced_sample_indices(eq, lists, 200000, 5))
      ++hits[static_cast<std::size_t>(idx)];
    for (const long h : hits)  // expected 2000 per index
      CHECK(std::abs(h - 2000.0) <= 300.0);
  }
  SUBCASE("empty class rejected") {
    per_class[1].clear();
    CHECK_THROWS_AS(balanced_sample_indices(stats, per_class, 10, 1),
                    InvalidDatasetError);
  }
}

TEST_CASE("sgd step arithmetic") {
  const auto fresh = [] {
    ClassifierParams p = make_params(Eigen::MatrixXd::Ones(2, 2),
                                     Eigen::VectorXd::Zero(2),
                                     Eigen::VectorXd::Ones(2), Head::Linear);
    return p;
  };
  LossGrads g;
  g.weights = Eigen::MatrixXd::Constant(2, 2, 0.5);
  g.bias = Eigen::VectorXd::Constant(2, 0.25);
  g.scale = Eigen::VectorXd::Zero(2);

  SUBCASE("plain gradient descent at zero momentum") {
    ClassifierParams p = fresh();
    OptimizerState opt = make_optimizer_state(p);
    sgd_step(p, g, opt, 0.1, 0.0, 0.0);
    CHECK(p.weights(0, 0) == doctest::Approx(1.0 - 0.05).epsilon(1e-15));
    CHECK(p.bias(0) == doctest::Approx(-0.025).epsilon(1e-15));
  }
  SUBCASE("zero gradient leaves fresh params and decays velocity") {
    ClassifierParams p = fresh();
    OptimizerState opt = make_optimizer_state(p);
    LossGrads zero = g;
    zero.weights.setZero();
    zero.bias.setZero();
    sgd_step(p, zero, opt, 0.1, 0.0, 0.9);
    CHECK(p.weights == Eigen::MatrixXd::Ones(2, 2));
    CHECK(opt.vel_weights == Eigen::MatrixXd::Zero(2, 2));
    // a warm velocity decays by exactly the momentum factor
    opt.vel_weights = Eigen::MatrixXd::Constant(2, 2, 1.0);
    sgd_step(p, zero, opt, 0.0, 0.0, 0.9);
    CHECK(opt.vel_weights == Eigen::MatrixXd::Constant(2, 2, 0.9));
  }
  SUBCASE("two momentum steps accumulate 2.9 gradients") {
    ClassifierParams p = fresh();
    OptimizerState opt = make_optimizer_state(p);
    sgd_step(p, g, opt, 1.0, 0.0, 0.9);
    sgd_step(p, g, opt, 1.0, 0.0, 0.9);
    // v1 = g, v2 = 1.9 g, total = 2.9 g
    CHECK(p.weights(1, 1) ==
          doctest::Approx(1.0 - 2.9 * 0.5).epsilon(1e-15));
  }
  SUBCASE("weight decay touches W only") {
    ClassifierParams p = fresh();
    OptimizerState opt = make_optimizer_state(p);
    LossGrads zero = g;
    zero.weights.setZero();
    zero.bias.setZero();
    sgd_step(p, zero, opt, 1.0, 0.1, 0.0);
    CHECK(p.weights(0, 0) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(p.bias == Eigen::VectorXd::Zero(2));
    CHECK(p.scale == Eigen::VectorXd::Ones(2));
  }
  SUBCASE("non-finite gradient aborts") {
    ClassifierParams p = fresh();
    OptimizerState opt = make_optimizer_state(p);
    LossGrads bad = g;
    bad.weights(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(sgd_step(p, bad, opt, 0.1, 0.0, 0.9), DivergenceError);
  }
}

TEST_CASE("well separated clusters train to full accuracy") {
  const DatasetPair data = small_separable();
  TrainConfig cfg = quick_config();
  cfg.epochs = 50;
  const TrainResult result = train_classifier(
      data.train, make_loss_spec(LossMethod::CE), cfg, &data.test);
  CHECK(top1_accuracy(result.params, data.train) == 100.0);
  CHECK(top1_accuracy(result.params, data.test) == 100.0);
  CHECK(result.history.size() == 50);
  CHECK(result.history.back().eval_acc.has_value());
}

TEST_CASE("zero smooth value trains bitwise identically to plain CE") {
  SyntheticSpec sspec;
  sspec.num_classes = 4;
  sspec.dim = 5;
  sspec.n_max = 60;
  sspec.imbalance_ratio = 10.0;
  sspec.seed = 21;
  const DatasetPair data = generate_synthetic(sspec);
  const TrainConfig cfg = quick_config(12);
  LossSpec lort = make_loss_spec(LossMethod::LORT);
  lort.delta = 0.0;
  const TrainResult a =
      train_classifier(data.train, make_loss_spec(LossMethod::CE), cfg);
  const TrainResult b = train_classifier(data.train, lort, cfg);
  CHECK(serialize_checkpoint(a.params) == serialize_checkpoint(b.params));
}

TEST_CASE("training is deterministic in the seed") {
  const DatasetPair data = small_separable(9);
  const TrainConfig cfg = quick_config(5);
  const TrainResult a =
      train_classifier(data.train, make_loss_spec(LossMethod::CE), cfg);
  const TrainResult b =
      train_classifier(data.train, make_loss_spec(LossMethod::CE), cfg);
  CHECK(serialize_checkpoint(a.params) == serialize_checkpoint(b.params));
  TrainConfig other = cfg;
  other.seed = 6;
  const TrainResult c =
      train_classifier(data.train, make_loss_spec(LossMethod::CE), other);
  CHECK(serialize_checkpoint(a.params) != serialize_checkpoint(c.params));
}

TEST_CASE("first step descends on a frozen batch at small lr") {
  const DatasetPair data = small_separable(31);
  const ClassStats stats = class_stats(data.train);
  Rng rng(44);
  Eigen::MatrixXd w(2, 4);
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-1, 1);
  ClassifierParams p = make_params(w, Eigen::VectorXd::Zero(2),
                                   Eigen::VectorXd::Ones(2), Head::Linear);
  const auto batch_loss_and_grad = [&](const ClassifierParams& params) {
    LossGrads sum;
    sum.weights = Eigen::MatrixXd::Zero(2, 4);
    sum.bias = Eigen::VectorXd::Zero(2);
    sum.scale = Eigen::VectorXd::Zero(2);
    for (Eigen::Index i = 0; i < data.train.rows(); ++i) {
      const LossGrads g = per_sample_loss_and_grad(
          make_loss_spec(LossMethod::CE), params, stats,
          data.train.features.row(i).transpose(),
          data.train.labels[static_cast<std::size_t>(i)]);
      sum.loss += g.loss;
      sum.weights += g.weights;
      sum.bias += g.bias;
    }
    const double inv = 1.0 / static_cast<double>(data.train.rows());
    sum.loss *= inv;
    sum.weights *= inv;
    sum.bias *= inv;
    return sum;
  };
  const LossGrads before = batch_loss_and_grad(p);
  OptimizerState opt = make_optimizer_state(p);
  sgd_step(p, before, opt, 1e-4, 0.0, 0.0);
  CHECK(batch_loss_and_grad(p).loss <= before.loss);
}

TEST_CASE("maxnorm projection caps every row after training") {
  const DatasetPair data = small_separable(17);
  TrainConfig cfg = quick_config(2);
  cfg.maxnorm = 0.7;
  const TrainResult result =
      train_classifier(data.train, make_loss_spec(LossMethod::CE), cfg);
  for (Eigen::Index i = 0; i < result.params.weights.rows(); ++i)
    CHECK(result.params.weights.row(i).norm() <= 0.7 + 1e-12);
}

TEST_CASE("lws training fits the scales in phase two") {
  // overlapping clusters keep the softmax unsaturated so scale gradients
  // stay alive in phase two
  SyntheticSpec sspec;
  sspec.num_classes = 3;
  sspec.dim = 4;
  sspec.n_max = 50;
  sspec.imbalance_ratio = 5.0;
  sspec.class_separation = 1.5;
  sspec.within_std = 1.0;
  sspec.seed = 23;
  const DatasetPair data = generate_synthetic(sspec);
  TrainConfig cfg = quick_config(3);
  cfg.head = Head::LWS;
  cfg.epochs = 8;
  const TrainResult result =
      train_classifier(data.train, make_loss_spec(LossMethod::CE), cfg);
  CHECK(result.history.size() == 8);
  CHECK(result.params.head == Head::LWS);
  // scales moved off their initial ones in phase two
  CHECK((result.params.scale - Eigen::VectorXd::Ones(3)).cwiseAbs().sum() >
        0.0);
}

TEST_CASE("resampling flag routes through the balanced sampler") {
  SyntheticSpec sspec;
  sspec.num_classes = 3;
  sspec.dim = 4;
  sspec.n_max = 60;
  sspec.imbalance_ratio = 20.0;
  sspec.seed = 77;
  const DatasetPair data = generate_synthetic(sspec);
  LossSpec spec = make_loss_spec(LossMethod::CE);
  spec.use_resampling = true;
  const TrainConfig cfg = quick_config(4);
  const TrainResult a = train_classifier(data.train, spec, cfg);
  spec.use_resampling = false;
  const TrainResult b = train_classifier(data.train, spec, cfg);
  CHECK(serialize_checkpoint(a.params) != serialize_checkpoint(b.params));
}

TEST_CASE("bias-only optimization reaches one convex minimum") {
  // with W frozen the loss is convex in b; Newton from two starting points
  // must land on the same value
  SyntheticSpec sspec;
  sspec.num_classes = 4;
  sspec.dim = 3;
  sspec.n_max = 30;
  sspec.imbalance_ratio = 6.0;
  sspec.seed = 5;
  const DatasetPair data = generate_synthetic(sspec);
  Rng rng(8);
  Eigen::MatrixXd w(4, 3);
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-1, 1);

  const auto optimize_bias = [&](Eigen::VectorXd b) {
    const Eigen::Index n = data.train.rows();
    const auto batch_loss = [&](const Eigen::VectorXd& bias) {
      double loss = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd z =
            w * data.train.features.row(i).transpose() + bias;
        const int y = data.train.labels[static_cast<std::size_t>(i)];
        loss += soft_ce_loss(z, lort_targets(4, y, 0.0));
      }
      return loss / static_cast<double>(n);
    };
    for (int iter = 0; iter < 200; ++iter) {
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(4);
      Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(4, 4);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd z =
            w * data.train.features.row(i).transpose() + b;
        const Eigen::VectorXd s = softmax(z);
        const int y = data.train.labels[static_cast<std::size_t>(i)];
        grad += s - lort_targets(4, y, 0.0);
        hess += bias_hessian(s);
      }
      const double inv = 1.0 / static_cast<double>(n);
      grad *= inv;
      hess *= inv;
      hess.diagonal().array() += 1e-8;  // softmax Hessian is singular along 1
      Eigen::VectorXd step = hess.ldlt().solve(grad);
      if (step.norm() > 5.0) step *= 5.0 / step.norm();  // damp far starts
      b -= step;
    }
    return batch_loss(b);
  };
  Eigen::VectorXd b1 = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd b2(4);
  b2 << 3.0, -2.0, 0.5, -4.0;
  CHECK(std::abs(optimize_bias(b1) - optimize_bias(b2)) <= 1e-6);
}

TEST_CASE("gradcheck meets the finite-difference tolerance") {
  LossSpec lort = make_loss_spec(LossMethod::LORT);
  lort.delta = 0.98;
  CHECK(gradcheck(make_loss_spec(LossMethod::CE), Head::Linear, 6, 4, 10,
                  1e-5) <= 1e-6);
  CHECK(gradcheck(lort, Head::Linear, 6, 4, 10, 1e-5) <= 1e-6);
  CHECK(gradcheck(make_loss_spec(LossMethod::LDAM), Head::Linear, 6, 4, 10,
                  1e-5) <= 1e-6);
  CHECK(gradcheck(make_loss_spec(LossMethod::CE), Head::Cosine, 5, 3, 10,
                  1e-5) <= 1e-6);
  CHECK(gradcheck(make_loss_spec(LossMethod::Focal), Head::LWS, 5, 3, 10,
                  1e-5) <= 1e-6);
}

TEST_CASE("history csv shape") {
  TrainHistory history(3);
  history[0] = {0.9, 0.1, std::nullopt};
  history[1] = {0.5, 0.05, 42.0};
  history[2] = {0.2, 0.01, 58.5};
  const std::string csv = history_csv(history);
  CHECK(csv.find("epoch,loss,lr,eval_acc\n") == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(csv.find("1,0.5,0.05,42") != std::string::npos);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(validate(cfg), InvalidArgumentError);
  cfg.epochs = 5;
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(validate(cfg), InvalidArgumentError);
  cfg.momentum = 0.9;
  cfg.maxnorm = -1.0;
  CHECK_THROWS_AS(validate(cfg), InvalidArgumentError);
}
