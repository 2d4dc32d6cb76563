#include "ltlab/classifier.hpp"

#include <cmath>
#include <fstream>

#include "ltlab/format.hpp"

namespace ltlab {

ClassifierParams make_params(Eigen::MatrixXd weights, Eigen::VectorXd bias,
                             Eigen::VectorXd scale, Head head) {
  const Eigen::Index k = weights.rows();
  if (bias.size() != k || scale.size() != k)
    throw InvalidArgumentError("bias/scale length must match weight rows");
  if (!weights.allFinite() || !bias.allFinite() || !scale.allFinite())
    throw InvalidArgumentError("non-finite classifier parameter");
  if (head == Head::LWS && (scale.array() <= 0.0).any())
    throw InvalidArgumentError("LWS scales must be strictly positive");
  return ClassifierParams{std::move(weights), std::move(bias),
                          std::move(scale), head};
}

Eigen::VectorXd forward_logits(const ClassifierParams& params,
                               const Eigen::VectorXd& x, double cosine_scale) {
  if (x.size() != params.weights.cols())
    throw InvalidArgumentError("feature dimension mismatch");
  switch (params.head) {
    case Head::Linear:
      return params.weights * x + params.bias;
    case Head::LWS:
      return params.scale.cwiseProduct(params.weights * x) + params.bias;
    case Head::Cosine: {
      if (!(cosine_scale > 0.0))
        throw InvalidArgumentError("cosine_scale must be > 0");
      const double xn = x.norm();
      if (xn == 0.0)
        throw NumericalDomainError("zero-norm feature under cosine head");
      Eigen::VectorXd z = params.weights * x;
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double wn = params.weights.row(i).norm();
        if (wn == 0.0)
          throw NumericalDomainError("zero-norm weight row under cosine head");
        z(i) = cosine_scale * z(i) / (wn * xn);
      }
      return z;
    }
  }
  throw InvalidArgumentError("unknown head");
}

Eigen::MatrixXd forward_logits_batch(const ClassifierParams& params,
                                     const Eigen::MatrixXd& features,
                                     double cosine_scale) {
  Eigen::MatrixXd logits(features.rows(), params.weights.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    logits.row(i) =
        forward_logits(params, features.row(i).transpose(), cosine_scale)
            .transpose();
  return logits;
}

Eigen::VectorXd apply_ldam_margin(const Eigen::VectorXd& logits, int label,
                                  const ClassStats& stats, double margin_c,
                                  double gamma) {
  if (label < 0 || label >= stats.num_classes())
    throw InvalidArgumentError("label out of range");
  Eigen::VectorXd out = logits;
  const double n_y = stats.counts[static_cast<std::size_t>(label)];
  out(label) -= margin_c / std::pow(n_y, gamma);
  return out;
}

Eigen::VectorXd apply_balanced_softmax_offset(const Eigen::VectorXd& logits,
                                              const ClassStats& stats) {
  Eigen::VectorXd out = logits;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out(i) += std::log(
        static_cast<double>(stats.counts[static_cast<std::size_t>(i)]));
  return out;
}

Eigen::VectorXd posthoc_adjust(const ClassifierParams& params,
                               const Eigen::VectorXd& logits,
                               const PosthocSpec& spec, const ClassStats& stats,
                               const Eigen::VectorXd& x) {
  switch (spec.kind) {
    case PosthocKind::None:
      return logits;
    case PosthocKind::LogitAdjust: {
      Eigen::VectorXd out = logits;
      for (Eigen::Index i = 0; i < out.size(); ++i)
        out(i) -= spec.tau * std::log(static_cast<double>(
                      stats.counts[static_cast<std::size_t>(i)]));
      return out;
    }
    case PosthocKind::TauNorm: {
      Eigen::VectorXd out(params.weights.rows());
      for (Eigen::Index i = 0; i < out.size(); ++i) {
        const double wn = params.weights.row(i).norm();
        if (wn == 0.0)
          throw NumericalDomainError("zero-norm weight row under tau-norm");
        out(i) = params.weights.row(i).dot(x) / std::pow(wn, spec.tau);
      }
      return out;
    }
  }
  throw InvalidArgumentError("unknown posthoc kind");
}

void maxnorm_project(ClassifierParams& params, double radius) {
  if (!(radius > 0.0)) throw InvalidArgumentError("maxnorm radius must be > 0");
  for (Eigen::Index i = 0; i < params.weights.rows(); ++i) {
    const double norm = params.weights.row(i).norm();
    if (norm > radius) params.weights.row(i) *= radius / norm;
  }
}

int predict(const Eigen::VectorXd& logits) {
  if (logits.size() == 0) throw InvalidArgumentError("empty logits");
  if (logits.hasNaN()) throw NumericalDomainError("NaN logit");
  int best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i)
    if (logits(i) > logits(best)) best = static_cast<int>(i);
  return best;
}

std::string serialize_checkpoint(const ClassifierParams& params) {
  std::string out;
  out += "LTCLS v1 K=" + std::to_string(params.num_classes()) +
         " D=" + std::to_string(params.dim()) +
         " HEAD=" + head_name(params.head) + "\n";
  for (Eigen::Index i = 0; i < params.weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < params.weights.cols(); ++j) {
      if (j) out += ' ';
      out += format_exact(params.weights(i, j));
    }
    out += '\n';
  }
  for (Eigen::Index i = 0; i < params.bias.size(); ++i) {
    if (i) out += ' ';
    out += format_exact(params.bias(i));
  }
  out += '\n';
  for (Eigen::Index i = 0; i < params.scale.size(); ++i) {
    if (i) out += ' ';
    out += format_exact(params.scale(i));
  }
  out += '\n';
  return out;
}

void save_checkpoint(const ClassifierParams& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IngestionError("cannot open " + path + " for writing");
  f << serialize_checkpoint(params);
}

ClassifierParams load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IngestionError("cannot open " + path);
  std::string header;
  if (!std::getline(f, header)) throw IngestionError(path + ": missing header");
  const auto tokens = split_ws(header);
  if (tokens.size() != 5 || tokens[0] != "LTCLS" || tokens[1] != "v1")
    throw IngestionError(path + ": bad header, expected LTCLS v1");
  long k = -1, d = -1;
  Head head = Head::Linear;
  for (std::size_t t = 2; t < tokens.size(); ++t) {
    const auto eq = tokens[t].find('=');
    if (eq == std::string::npos)
      throw IngestionError(path + ": bad header field " + tokens[t]);
    const std::string key = tokens[t].substr(0, eq);
    const std::string value = tokens[t].substr(eq + 1);
    if (key == "K") k = std::stol(value);
    else if (key == "D") d = std::stol(value);
    else if (key == "HEAD") head = parse_head(value);
    else throw IngestionError(path + ": unknown header key " + key);
  }
  if (k < 2 || d < 1) throw IngestionError(path + ": invalid dimensions");

  const auto read_row = [&](Eigen::Index want, const char* what) {
    std::string line;
    if (!std::getline(f, line))
      throw IngestionError(path + ": truncated reading " + what);
    const auto fields = split_ws(line);
    if (fields.size() != static_cast<std::size_t>(want))
      throw IngestionError(path + ": wrong field count in " + what);
    Eigen::VectorXd row(want);
    for (Eigen::Index j = 0; j < want; ++j) {
      try {
        row(j) = std::stod(fields[static_cast<std::size_t>(j)]);
      } catch (const std::logic_error&) {
        throw IngestionError(path + ": bad float in " + what);
      }
    }
    return row;
  };

  Eigen::MatrixXd weights(k, d);
  for (long i = 0; i < k; ++i)
    weights.row(i) = read_row(d, "weight row").transpose();
  Eigen::VectorXd bias = read_row(k, "bias line");
  Eigen::VectorXd scale = read_row(k, "scale line");
  return make_params(std::move(weights), std::move(bias), std::move(scale),
                     head);
}

const char* head_name(Head head) {
  switch (head) {
    case Head::Linear: return "Linear";
    case Head::Cosine: return "Cosine";
    case Head::LWS: return "LWS";
  }
  return "?";
}

Head parse_head(const std::string& name) {
  if (name == "Linear" || name == "linear") return Head::Linear;
  if (name == "Cosine" || name == "cosine") return Head::Cosine;
  if (name == "LWS" || name == "lws") return Head::LWS;
  throw InvalidArgumentError("unknown head '" + name + "'");
}

PosthocKind parse_posthoc(const std::string& name) {
  if (name == "none") return PosthocKind::None;
  if (name == "tau-norm") return PosthocKind::TauNorm;
  if (name == "logit-adjust") return PosthocKind::LogitAdjust;
  throw InvalidArgumentError("unknown posthoc kind '" + name + "'");
}

}  // namespace ltlab
