#include "ltlab/losses.hpp"

#include <cmath>

namespace ltlab {

void validate(const LossSpec& spec) {
  if (!(spec.delta >= 0.0 && spec.delta < 1.0))
    throw InvalidArgumentError("delta must lie in [0, 1)");
  if (!(spec.gamma >= 0.0) || !std::isfinite(spec.gamma))
    throw InvalidArgumentError("gamma must be finite and >= 0");
  if (!(spec.beta >= 0.0 && spec.beta < 1.0))
    throw InvalidArgumentError("beta must lie in [0, 1)");
  if (spec.ldam_c && (!(*spec.ldam_c >= 0.0) || !std::isfinite(*spec.ldam_c)))
    throw InvalidArgumentError("LDAM C must be finite and >= 0");
}

LossSpec make_loss_spec(LossMethod method) {
  LossSpec spec;
  spec.method = method;
  switch (method) {
    case LossMethod::LORT: spec.delta = 0.98; break;
    case LossMethod::Focal: spec.gamma = 1.0; break;
    case LossMethod::LDAM: spec.gamma = 0.25; break;
    case LossMethod::ClassBalancedCE:
    case LossMethod::ClassBalancedBCE: spec.beta = 0.9999; break;
    default: break;
  }
  return spec;
}

LossMethod parse_loss_method(const std::string& token) {
  if (token == "ce") return LossMethod::CE;
  if (token == "lort") return LossMethod::LORT;
  if (token == "focal") return LossMethod::Focal;
  if (token == "cb-ce") return LossMethod::ClassBalancedCE;
  if (token == "cb-bce") return LossMethod::ClassBalancedBCE;
  if (token == "ldam") return LossMethod::LDAM;
  if (token == "bs") return LossMethod::BalancedSoftmax;
  throw InvalidArgumentError("unknown loss method '" + token + "'");
}

const char* loss_method_name(LossMethod method) {
  switch (method) {
    case LossMethod::CE: return "ce";
    case LossMethod::LORT: return "lort";
    case LossMethod::Focal: return "focal";
    case LossMethod::ClassBalancedCE: return "cb-ce";
    case LossMethod::ClassBalancedBCE: return "cb-bce";
    case LossMethod::LDAM: return "ldam";
    case LossMethod::BalancedSoftmax: return "bs";
  }
  return "?";
}

TargetDistribution lort_targets(int num_classes, int label, double delta) {
  if (num_classes < 2) throw InvalidArgumentError("K must be >= 2");
  if (label < 0 || label >= num_classes)
    throw InvalidArgumentError("label out of range");
  if (!(delta >= 0.0 && delta < 1.0))
    throw InvalidArgumentError(
        "delta must lie in [0, 1); delta = 1 erases the true class");
  TargetDistribution probs =
      Eigen::VectorXd::Constant(num_classes, delta / num_classes);
  probs(label) = 1.0 - delta + delta / num_classes;
  return probs;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double shift = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - shift).exp();
  return e / e.sum();
}

namespace {

void check_finite_inputs(const Eigen::VectorXd& logits,
                         const TargetDistribution& target) {
  if (logits.hasNaN() || target.hasNaN())
    throw NumericalDomainError("NaN in logits or target");
  if (logits.size() != target.size())
    throw InvalidArgumentError("logits/target length mismatch");
}

double log_sum_exp(const Eigen::VectorXd& logits) {
  const double shift = logits.maxCoeff();
  return shift + std::log((logits.array() - shift).exp().sum());
}

}  // namespace

double soft_ce_loss(const Eigen::VectorXd& logits,
                    const TargetDistribution& target) {
  check_finite_inputs(logits, target);
  return log_sum_exp(logits) - target.dot(logits);
}

Eigen::VectorXd soft_ce_grad(const Eigen::VectorXd& logits,
                             const TargetDistribution& target) {
  check_finite_inputs(logits, target);
  return softmax(logits) - target;
}

double focal_weight(double p_true, double gamma) {
  if (!(p_true >= 0.0 && p_true <= 1.0))
    throw InvalidArgumentError("p must lie in [0, 1]");
  return std::pow(1.0 - p_true, gamma);
}

double cb_weight(int n_true, double beta) {
  if (n_true < 1) throw InvalidArgumentError("n must be >= 1");
  if (!(beta >= 0.0 && beta < 1.0))
    throw InvalidArgumentError("beta must lie in [0, 1)");
  if (beta == 0.0) return 1.0;
  const double beta_pow_n = std::exp(n_true * std::log(beta));
  return (1.0 - beta) / (1.0 - beta_pow_n);
}

double resolve_ldam_c(const LossSpec& spec, const ClassStats& stats) {
  if (spec.ldam_c) return *spec.ldam_c;
  return 0.5 * std::pow(static_cast<double>(stats.min_count()), spec.gamma);
}

namespace {

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// max(z,0) - z*t + log(1 + e^-|z|)
double stable_bce(double z, double t) {
  return std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
}

// Chains dL/dz back to the head parameters.
void backprop_head(const ClassifierParams& params, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& grad_z, double cosine_scale,
                   LossGrads& out) {
  const Eigen::Index k = params.weights.rows();
  const Eigen::Index d = params.weights.cols();
  out.weights = Eigen::MatrixXd::Zero(k, d);
  out.bias = Eigen::VectorXd::Zero(k);
  out.scale = Eigen::VectorXd::Zero(k);
  switch (params.head) {
    case Head::Linear:
      out.weights = grad_z * x.transpose();
      out.bias = grad_z;
      break;
    case Head::LWS:
      out.weights =
          grad_z.cwiseProduct(params.scale) * x.transpose();
      out.bias = grad_z;
      out.scale = grad_z.cwiseProduct(params.weights * x);
      break;
    case Head::Cosine: {
      const double xn = x.norm();
      for (Eigen::Index i = 0; i < k; ++i) {
        const Eigen::VectorXd w = params.weights.row(i).transpose();
        const double wn = w.norm();
        const double proj = w.dot(x) / (wn * wn);
        out.weights.row(i) = grad_z(i) * (cosine_scale / (wn * xn)) *
                             (x - proj * w).transpose();
      }
      break;
    }
  }
}

}  // namespace

LossGrads per_sample_loss_and_grad(const LossSpec& spec,
                                   const ClassifierParams& params,
                                   const ClassStats& stats,
                                   const Eigen::VectorXd& x, int label,
                                   double cosine_scale) {
  validate(spec);
  const int k = params.num_classes();
  if (label < 0 || label >= k) throw InvalidArgumentError("label out of range");

  const Eigen::VectorXd z = forward_logits(params, x, cosine_scale);
  LossGrads out;
  Eigen::VectorXd grad_z;

  switch (spec.method) {
    case LossMethod::CE: {
      const TargetDistribution target = lort_targets(k, label, 0.0);
      out.loss = soft_ce_loss(z, target);
      grad_z = soft_ce_grad(z, target);
      break;
    }
    case LossMethod::LORT: {
      const TargetDistribution target = lort_targets(k, label, spec.delta);
      out.loss = soft_ce_loss(z, target);
      grad_z = soft_ce_grad(z, target);
      break;
    }
    case LossMethod::LDAM: {
      const Eigen::VectorXd zm = apply_ldam_margin(
          z, label, stats, resolve_ldam_c(spec, stats), spec.gamma);
      const TargetDistribution target = lort_targets(k, label, 0.0);
      out.loss = soft_ce_loss(zm, target);
      grad_z = soft_ce_grad(zm, target);  // margin is a constant shift
      break;
    }
    case LossMethod::BalancedSoftmax: {
      const Eigen::VectorXd zo = apply_balanced_softmax_offset(z, stats);
      const TargetDistribution target = lort_targets(k, label, 0.0);
      out.loss = soft_ce_loss(zo, target);
      grad_z = soft_ce_grad(zo, target);
      break;
    }
    case LossMethod::Focal: {
      const TargetDistribution target = lort_targets(k, label, 0.0);
      const double ce = soft_ce_loss(z, target);
      const Eigen::VectorXd s = softmax(z);
      const double p = s(label);
      double q = 0.0;  // 1 - p without cancellation
      for (Eigen::Index i = 0; i < s.size(); ++i)
        if (i != label) q += s(i);
      if (spec.gamma == 0.0) {
        out.loss = ce;
        grad_z = s - target;
      } else if (q == 0.0) {
        out.loss = 0.0;
        grad_z = Eigen::VectorXd::Zero(k);
      } else {
        // d/dz [(1-p)^g * ce] collapses to a scalar multiple of (s - y)
        const double factor = std::pow(q, spec.gamma) +
                              spec.gamma * p * ce * std::pow(q, spec.gamma - 1.0);
        out.loss = std::pow(q, spec.gamma) * ce;
        grad_z = factor * (s - target);
      }
      break;
    }
    case LossMethod::ClassBalancedCE: {
      const TargetDistribution target = lort_targets(k, label, 0.0);
      const double w =
          cb_weight(stats.counts[static_cast<std::size_t>(label)], spec.beta);
      out.loss = w * soft_ce_loss(z, target);
      grad_z = w * soft_ce_grad(z, target);
      break;
    }
    case LossMethod::ClassBalancedBCE: {
      if (z.hasNaN()) throw NumericalDomainError("NaN logit");
      const double w =
          cb_weight(stats.counts[static_cast<std::size_t>(label)], spec.beta);
      double loss = 0.0;
      grad_z = Eigen::VectorXd::Zero(k);
      for (int i = 0; i < k; ++i) {
        const double t = (i == label) ? 1.0 : 0.0;
        loss += stable_bce(z(i), t);
        grad_z(i) = w * (stable_sigmoid(z(i)) - t);
      }
      out.loss = w * loss;
      break;
    }
  }

  backprop_head(params, x, grad_z, cosine_scale, out);
  return out;
}

}  // namespace ltlab
