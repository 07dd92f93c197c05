#include "trimix/objective.hpp"

#include <cmath>

#include "trimix/error.hpp"
#include "trimix/ops.hpp"

namespace trimix::objective {

namespace {

void require_even(std::size_t b, const char* what) {
  if (b == 0 || b % 2 != 0) {
    throw BatchParityError(std::string(what) + ": batch size must be even, got " + std::to_string(b));
  }
}

double checked_item(const Tensor& t, const char* term) {
  const double v = t.item();
  if (!std::isfinite(v)) throw NumericError(std::string("numeric failure in loss term ") + term);
  return v;
}

}  // namespace

MixFactor::MixFactor(double lambda) : lambda_(lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractError("mix factor must lie in [0, 1], got " + std::to_string(lambda));
}

MixFactor sample_lambda(const LambdaPolicy& policy, Rng& rng) {
  if (policy.kind == LambdaPolicy::Kind::Fixed) return MixFactor(policy.value);
  return MixFactor(rng.uniform());
}

double LossBreakdown::recombined() const {
  return (l_bt_inv + weights.alpha * l_bt_rr) + weights.beta * l_vrt + weights.gamma * l_con;
}

Tensor mixup(const Tensor& x, MixFactor lambda) {
  require_even(x.rows(), "mixup");
  const double l = lambda.value();
  return ops::add(ops::scalar_mul(x, l), ops::scalar_mul(ops::flip_rows(x), 1.0 - l));
}

GroundTruthMatrix ground_truth_matrix(std::size_t batch, MixFactor lambda) {
  require_even(batch, "ground_truth_matrix");
  const double l = lambda.value();
  Tensor gt({batch, batch}, 0.0);
  auto d = gt.mutable_data();
  for (std::size_t i = 0; i < batch; ++i) {
    d[i * batch + i] = l;
    d[i * batch + (batch - 1 - i)] = 1.0 - l;
  }
  return {std::move(gt)};
}

BtTerms loss_bt(const stats::CorrelationMatrix& c) {
  const Tensor& m = c.values;
  if (m.rank() != 2 || m.dim(0) != m.dim(1)) {
    throw DimensionError("loss_bt needs a square correlation matrix, got " + shape_str(m.shape()));
  }
  const std::size_t d = m.dim(0);
  const Tensor eye = Tensor::identity(d);
  Tensor off_mask({d, d}, 1.0);
  for (std::size_t i = 0; i < d; ++i) off_mask.mutable_data()[i * d + i] = 0.0;

  Tensor l_inv = ops::sum(ops::square(ops::sub(ops::hadamard(m, eye), eye)));
  Tensor l_rr = ops::sum(ops::square(ops::hadamard(m, off_mask)));
  return {std::move(l_inv), std::move(l_rr)};
}

Tensor loss_vrt(const Tensor& m_soft, const GroundTruthMatrix& gt) {
  if (m_soft.shape() != gt.values.shape()) {
    throw DimensionError("loss_vrt: shapes differ, " + shape_str(m_soft.shape()) + " vs " +
                         shape_str(gt.values.shape()));
  }
  return ops::mean(ops::abs(ops::sub(m_soft, gt.values)));
}

Tensor loss_con(const Tensor& z_tilde, const Tensor& z_vrt) {
  if (z_tilde.shape() != z_vrt.shape()) {
    throw DimensionError("loss_con: shapes differ, " + shape_str(z_tilde.shape()) + " vs " +
                         shape_str(z_vrt.shape()));
  }
  return ops::mean(ops::abs(ops::sub(z_tilde, z_vrt)));
}

StepLoss trimix_step_loss(const data::ViewPair& views, const model::ModelParams& params, const TriMixConfig& cfg,
                          Rng& rng, StepTrace* trace) {
  if (views.x.shape() != views.x_prime.shape()) {
    throw DimensionError("views differ in shape: " + shape_str(views.x.shape()) + " vs " +
                         shape_str(views.x_prime.shape()));
  }
  const std::size_t b = views.x.rows();
  require_even(b, "trimix_step_loss");

  const stats::StandardizeOptions sopt{cfg.allow_degenerate};
  const bool norm = cfg.normalize_on;
  auto batch_norm = [&](const Tensor& t) { return norm ? stats::standardize(t, stats::Axis::Batch, sopt) : t; };
  // Virtual representations: batch axis, then (optionally) feature axis.
  auto virtual_norm = [&](const Tensor& t) {
    if (!norm) return t;
    Tensor out = stats::standardize(t, stats::Axis::Batch, sopt);
    if (cfg.enable_feature_norm) out = stats::standardize(out, stats::Axis::Feature, sopt);
    return out;
  };

  // Barlow Twins on the two views.
  const model::ForwardResult f1 = model::forward(views.x, params);
  const model::ForwardResult f2 = model::forward(views.x_prime, params);
  const Tensor z = batch_norm(f1.z);
  const Tensor z_prime = batch_norm(f2.z);
  const BtTerms bt = loss_bt(stats::cross_correlation(z, z_prime, stats::CorrMode::Features));

  // Virtual data from view 1 and its reversal.
  const MixFactor lambda = sample_lambda(cfg.lambda_policy, rng);
  const Tensor x_vrt = mixup(views.x, lambda);
  const model::ForwardResult fv = model::forward(x_vrt, params);

  const bool vrt_on_y = cfg.placement == Placement::YY;
  const bool con_on_y = cfg.placement == Placement::YY || cfg.placement == Placement::ZY;
  const bool need_y = vrt_on_y || con_on_y;
  const Tensor y = need_y ? batch_norm(f1.y) : Tensor{};
  const Tensor y_vrt = need_y ? virtual_norm(fv.y) : Tensor{};
  const Tensor z_vrt = (!vrt_on_y || !con_on_y) ? virtual_norm(fv.z) : Tensor{};

  // Decomposition of the virtual batch.
  const Tensor& vrt_orig = vrt_on_y ? y : z;
  const Tensor& vrt_virtual = vrt_on_y ? y_vrt : z_vrt;
  const stats::CorrelationMatrix m = stats::cross_correlation(vrt_orig, vrt_virtual, stats::CorrMode::Samples);
  const Tensor m_soft = stats::row_softmax(m.values, cfg.tau);
  const GroundTruthMatrix gt = ground_truth_matrix(b, lambda);
  const Tensor l_vrt = loss_vrt(m_soft, gt);

  // Self-consistency against the mixed-up representation.
  const Tensor& con_orig = con_on_y ? y : z;
  const Tensor& con_virtual = con_on_y ? y_vrt : z_vrt;
  const Tensor con_tilde = mixup(con_orig, lambda);
  const Tensor l_con = loss_con(con_tilde, con_virtual);

  LossBreakdown out;
  out.weights = {cfg.alpha, cfg.enable_vrt ? cfg.beta : 0.0, cfg.enable_con ? cfg.gamma : 0.0};
  out.lambda = lambda.value();
  out.l_bt_inv = checked_item(bt.l_inv, "l_bt_inv");
  out.l_bt_rr = checked_item(bt.l_rr, "l_bt_rr");
  out.l_vrt = checked_item(l_vrt, "l_vrt");
  out.l_con = checked_item(l_con, "l_con");

  Tensor total = ops::add(bt.l_inv, ops::scalar_mul(bt.l_rr, out.weights.alpha));
  total = ops::add(total, ops::scalar_mul(l_vrt, out.weights.beta));
  total = ops::add(total, ops::scalar_mul(l_con, out.weights.gamma));
  out.total = checked_item(total, "total");

  if (trace != nullptr) {
    *trace = StepTrace{x_vrt.detach(),       z.detach(),           z_prime.detach(),   vrt_orig.detach(),
                       vrt_virtual.detach(), con_tilde.detach(),   con_virtual.detach(), m.values.detach(),
                       m_soft.detach(),      gt.values.detach()};
  }
  return {out, std::move(total)};
}

}  // namespace trimix::objective
