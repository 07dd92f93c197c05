#include "trimix_oracle/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "trimix/data.hpp"
#include "trimix/model.hpp"
#include "trimix/objective.hpp"
#include "trimix/ops.hpp"
#include "trimix/rng.hpp"
#include "trimix/stats.hpp"
#include "trimix/train.hpp"

namespace trimix_oracle {

namespace {

using trimix::Tensor;

Matrix to_matrix(const Tensor& t) { return Matrix(t.rows(), t.row_size(), t.values()); }

std::vector<std::string> param_names(const trimix::model::ModelParams& p) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < p.encoder.size(); ++i) {
    names.push_back("encoder." + std::to_string(i) + ".weight");
    names.push_back("encoder." + std::to_string(i) + ".bias");
  }
  for (std::size_t i = 0; i < p.projector.size(); ++i) {
    names.push_back("projector." + std::to_string(i) + ".weight");
    names.push_back("projector." + std::to_string(i) + ".bias");
  }
  return names;
}

// Tensor gradient norms below this fraction of the largest one are treated
// as zero. Biases feeding a batch-standardised layer have an exactly
// vanishing gradient, where central differences return pure roundoff.
constexpr double kZeroGradFraction = 1e-5;

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

Tensor random_matrix(std::mt19937_64& gen, std::size_t r, std::size_t c, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<double> v(r * c);
  for (auto& x : v) x = nd(gen);
  return Tensor({r, c}, std::move(v));
}

}  // namespace

GradcheckResult run_gradcheck(const trimix::TriMixConfig& cfg, const GradcheckOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  trimix::TriMixConfig c = cfg;
  c.batch = opts.batch;
  c.validate();

  trimix::data::SyntheticSpec spec;
  spec.classes = c.synthetic_classes;
  spec.count = opts.batch;
  spec.grid = opts.grid;
  spec.seed = trimix::derive_seed(opts.seed, {0x9c});
  spec.sigma = c.synthetic_sigma;
  spec.jitter = c.synthetic_jitter;
  spec.noise = c.synthetic_noise;
  spec.background = c.synthetic_background;
  const trimix::data::Dataset ds = trimix::data::make_synthetic(spec);
  const trimix::data::ViewPair views = trimix::data::two_views(
      ds.images, ds.labels, trimix::train::augment_policy(c), {trimix::derive_seed(opts.seed, {0xa06}), 0, 0});

  trimix::model::ModelParams params = trimix::model::init_params(c.arch(ds.input_width()), opts.seed);
  const std::uint64_t step_seed = trimix::derive_seed(opts.seed, {0x57e9});

  // Analytic gradients.
  std::vector<std::vector<double>> analytic;
  {
    trimix::Tape tape;
    const trimix::model::ModelParams bound = trimix::model::bind(params, tape);
    trimix::Rng rng(step_seed);
    const auto loss = trimix::objective::trimix_step_loss(views, bound, c, rng);
    const trimix::Gradients g = tape.backward(loss.total);
    for (const Tensor* t : bound.tensors()) analytic.push_back(g.of(*t).values());
  }

  // Numeric gradients over plain buffers copied back into params per probe.
  std::vector<Tensor*> tensors = params.tensors();
  std::vector<std::vector<double>> buffers;
  for (const Tensor* t : tensors) buffers.push_back(t->values());
  std::vector<std::vector<double>*> ptrs;
  for (auto& b : buffers) ptrs.push_back(&b);

  std::vector<std::vector<std::size_t>> coords(buffers.size());
  std::mt19937_64 pick(trimix::derive_seed(opts.seed, {0xc0}));
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    coords[i].resize(buffers[i].size());
    std::iota(coords[i].begin(), coords[i].end(), std::size_t{0});
    if (opts.max_coords != 0 && coords[i].size() > opts.max_coords) {
      std::shuffle(coords[i].begin(), coords[i].end(), pick);
      coords[i].resize(opts.max_coords);
      std::sort(coords[i].begin(), coords[i].end());
    }
  }

  auto loss_fn = [&]() {
    for (std::size_t i = 0; i < tensors.size(); ++i) std::copy(buffers[i].begin(), buffers[i].end(), tensors[i]->mutable_data().begin());
    trimix::Rng rng(step_seed);
    return trimix::objective::trimix_step_loss(views, params, c, rng).breakdown.total;
  };
  const auto numeric = finite_diff_at(loss_fn, ptrs, coords, opts.h);

  GradcheckResult res;
  res.tolerance = opts.tolerance;
  const auto names = param_names(params);
  double scale = 0.0;
  for (const auto& n : numeric) scale = std::max(scale, norm2(n));
  const double floor = kZeroGradFraction * scale;
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    std::vector<double> a, d;
    for (std::size_t k = 0; k < coords[i].size(); ++k) {
      a.push_back(analytic[i][coords[i][k]]);
      d.push_back(analytic[i][coords[i][k]] - numeric[i][k]);
    }
    const double denom = std::max({norm2(a), norm2(numeric[i]), floor});
    const double rel = norm2(d) / denom;
    res.tensors.push_back({names[i], coords[i].size(), rel});
    res.max_rel_error = std::max(res.max_rel_error, rel);
  }
  res.pass = res.max_rel_error < opts.tolerance;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

std::vector<OracleReport> run_oracle_equivalence(std::size_t cases_per_quantity, std::uint64_t seed,
                                                 double tolerance) {
  namespace st = trimix::stats;
  namespace ob = trimix::objective;
  std::vector<OracleReport> out;
  for (std::size_t n = 0; n < cases_per_quantity; ++n) {
    const std::uint64_t cs = trimix::derive_seed(seed, {n});
    std::mt19937_64 gen(cs);
    const std::size_t b = 2 * (2 + gen() % 7);  // even, 4..16
    const std::size_t d = 4 + gen() % 13;
    const double lambda = std::uniform_real_distribution<double>(0.0, 1.0)(gen);

    const Tensor z_raw = random_matrix(gen, b, d, 2.0);
    const Tensor z2_raw = random_matrix(gen, b, d, 2.0);

    // C: batch-standardised operands against explicit denominators on the
    // centred raw data.
    {
      const Tensor z = st::standardize(z_raw, st::Axis::Batch);
      const Tensor z2 = st::standardize(z2_raw, st::Axis::Batch);
      const Tensor c = st::cross_correlation(z, z2, st::CorrMode::Features).values;
      const Matrix expected = naive_correlation(naive_standardize(to_matrix(z_raw), true),
                                                naive_standardize(to_matrix(z2_raw), true), Mode::Features);
      out.push_back(compare("C#" + std::to_string(n), cs, expected.v, c.values(), tolerance));

      // BT terms on the same C.
      const ob::BtTerms bt = ob::loss_bt({c, st::CorrMode::Features});
      const double inv[] = {naive_l_inv(to_matrix(c))};
      const double rr[] = {naive_l_rr(to_matrix(c))};
      const double inv_lib[] = {bt.l_inv.item()};
      const double rr_lib[] = {bt.l_rr.item()};
      out.push_back(compare("L_inv#" + std::to_string(n), cs, inv, inv_lib, tolerance));
      out.push_back(compare("L_rr#" + std::to_string(n), cs, rr, rr_lib, tolerance));
    }

    // M: operands standardised per sample so that the divide-by-D form and
    // the explicit-denominator form coincide.
    {
      const Tensor z = st::standardize(z_raw, st::Axis::Feature);
      const Tensor zv = st::standardize(st::standardize(z2_raw, st::Axis::Batch), st::Axis::Feature);
      const Tensor m = st::cross_correlation(z, zv, st::CorrMode::Samples).values;
      const Matrix expected =
          naive_correlation(naive_standardize(to_matrix(z_raw), false),
                            naive_standardize(naive_standardize(to_matrix(z2_raw), true), false), Mode::Samples);
      out.push_back(compare("M#" + std::to_string(n), cs, expected.v, m.values(), tolerance));

      const Tensor m_soft = st::row_softmax(m, 2.0);
      const ob::MixFactor mf(lambda);
      const ob::GroundTruthMatrix gt = ob::ground_truth_matrix(b, mf);
      const double vrt[] = {naive_l1_mean(naive_row_softmax(expected, 2.0), to_matrix(gt.values))};
      const double vrt_lib[] = {ob::loss_vrt(m_soft, gt).item()};
      out.push_back(compare("L_vrt#" + std::to_string(n), cs, vrt, vrt_lib, tolerance));
    }

    // L_con on a mixed-up operand.
    {
      const ob::MixFactor mf(lambda);
      const Tensor tilde = ob::mixup(z_raw, mf);
      Matrix naive_tilde(b, d);
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < d; ++j)
          naive_tilde(i, j) = lambda * z_raw.at(i, j) + (1.0 - lambda) * z_raw.at(b - 1 - i, j);
      const double con[] = {naive_l1_mean(naive_tilde, to_matrix(z2_raw))};
      const double con_lib[] = {ob::loss_con(tilde, z2_raw).item()};
      out.push_back(compare("L_con#" + std::to_string(n), cs, con, con_lib, tolerance));
    }
  }
  return out;
}

}  // namespace trimix_oracle
