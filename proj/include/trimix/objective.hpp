#pragma once

#include "trimix/config.hpp"
#include "trimix/data.hpp"
#include "trimix/model.hpp"
#include "trimix/rng.hpp"
#include "trimix/stats.hpp"
#include "trimix/tensor.hpp"

namespace trimix::objective {

// Mixing factor shared by input mixup, embedding mixup and the target
// matrix of one step.
class MixFactor {
 public:
  explicit MixFactor(double lambda);
  double value() const noexcept { return lambda_; }

 private:
  double lambda_;
};

MixFactor sample_lambda(const LambdaPolicy& policy, Rng& rng);

// lambda * I + (1 - lambda) * anti-diagonal, B x B.
struct GroundTruthMatrix {
  Tensor values;
};

struct LossWeights {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
};

// total == (l_bt_inv + alpha * l_bt_rr) + beta * l_vrt + gamma * l_con, with
// the effective weights (a disabled term has weight 0 but is still reported).
struct LossBreakdown {
  double total = 0.0;
  double l_bt_inv = 0.0;
  double l_bt_rr = 0.0;
  double l_vrt = 0.0;
  double l_con = 0.0;
  double lambda = 0.0;
  LossWeights weights;

  double recombined() const;
};

// lambda * x + (1 - lambda) * flip_rows(x). Batch must be even.
Tensor mixup(const Tensor& x, MixFactor lambda);

GroundTruthMatrix ground_truth_matrix(std::size_t batch, MixFactor lambda);

struct BtTerms {
  Tensor l_inv;  // sum_i (1 - C_ii)^2
  Tensor l_rr;   // sum_i sum_{j != i} C_ij^2
};
BtTerms loss_bt(const stats::CorrelationMatrix& c);

// Mean absolute difference over all B*B cells.
Tensor loss_vrt(const Tensor& m_soft, const GroundTruthMatrix& gt);
// Mean absolute difference over all B*D cells.
Tensor loss_con(const Tensor& z_tilde, const Tensor& z_vrt);

// Intermediate values of one step, for inspection and tests.
struct StepTrace {
  Tensor x_vrt;
  Tensor z;        // view-1 embedding after batch standardisation
  Tensor z_prime;
  Tensor vrt_orig;   // representation consumed by the virtual loss (Z or Y level)
  Tensor vrt_virtual;
  Tensor con_tilde;  // mixed-up representation consumed by the consistency loss
  Tensor con_virtual;
  Tensor m;       // B x B sample correlation before softmax
  Tensor m_soft;
  Tensor gt;
};

struct StepLoss {
  LossBreakdown breakdown;
  Tensor total;  // on the tape when params are bound to one
};

// One step of the objective on a pair of views. Draws lambda from rng
// according to cfg.lambda_policy. Throws NumericError naming the term when
// a loss is not finite.
StepLoss trimix_step_loss(const data::ViewPair& views, const model::ModelParams& params, const TriMixConfig& cfg,
                          Rng& rng, StepTrace* trace = nullptr);

}  // namespace trimix::objective
