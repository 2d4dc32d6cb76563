#pragma once

#include <Eigen/Dense>
#include <string>

#include "ltlab/data.hpp"

namespace ltlab {

enum class Head { Linear, Cosine, LWS };

constexpr double kDefaultCosineScale = 16.0;
constexpr double kDefaultMaxNormRadius = 1.0;

// Classifier head parameters. Linear: z = W x + b. Cosine: scaled cosine
// similarity, no bias. LWS: z_i = c_i * (W_i . x) + b_i.
struct ClassifierParams {
  Eigen::MatrixXd weights;  // K x D
  Eigen::VectorXd bias;     // K
  Eigen::VectorXd scale;    // K, used by LWS, all ones otherwise
  Head head = Head::Linear;

  int num_classes() const { return static_cast<int>(weights.rows()); }
  int dim() const { return static_cast<int>(weights.cols()); }
};

ClassifierParams make_params(Eigen::MatrixXd weights, Eigen::VectorXd bias,
                             Eigen::VectorXd scale, Head head);

enum class PosthocKind { None, TauNorm, LogitAdjust };

// Inference-time logit modification: tau-normalized weights or subtracting
// tau * ln(n_i).
struct PosthocSpec {
  PosthocKind kind = PosthocKind::None;
  double tau = 1.0;
};

Eigen::VectorXd forward_logits(const ClassifierParams& params,
                               const Eigen::VectorXd& x,
                               double cosine_scale = kDefaultCosineScale);

// Row-wise forward over a feature matrix (N x D) -> logits (N x K).
Eigen::MatrixXd forward_logits_batch(const ClassifierParams& params,
                                     const Eigen::MatrixXd& features,
                                     double cosine_scale = kDefaultCosineScale);

// Training-time margin: subtracts C / n_y^gamma from the true-class logit.
Eigen::VectorXd apply_ldam_margin(const Eigen::VectorXd& logits, int label,
                                  const ClassStats& stats, double margin_c,
                                  double gamma);

// Training-time prior compensation: adds ln(n_i) to every logit.
Eigen::VectorXd apply_balanced_softmax_offset(const Eigen::VectorXd& logits,
                                              const ClassStats& stats);

// TauNorm recomputes logits from tau-normalized rows (bias dropped);
// LogitAdjust subtracts tau * ln(n_i); None passes through.
Eigen::VectorXd posthoc_adjust(const ClassifierParams& params,
                               const Eigen::VectorXd& logits,
                               const PosthocSpec& spec, const ClassStats& stats,
                               const Eigen::VectorXd& x);

// Projects every weight row into the Euclidean ball of the given radius.
void maxnorm_project(ClassifierParams& params, double radius);

// Argmax with deterministic lowest-index tie-break.
int predict(const Eigen::VectorXd& logits);

// LTCLS v1 text checkpoint format.
void save_checkpoint(const ClassifierParams& params, const std::string& path);
ClassifierParams load_checkpoint(const std::string& path);
std::string serialize_checkpoint(const ClassifierParams& params);

const char* head_name(Head head);
Head parse_head(const std::string& name);
PosthocKind parse_posthoc(const std::string& name);

}  // namespace ltlab
