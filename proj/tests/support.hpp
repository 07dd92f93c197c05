#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "trimix/tensor.hpp"
#include "trimix_oracle/oracle.hpp"

namespace test {

inline trimix::Tensor random_tensor(std::mt19937_64& gen, trimix::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(trimix::shape_numel(shape));
  for (auto& x : v) x = u(gen);
  return trimix::Tensor(std::move(shape), std::move(v));
}

// Entries with |x| in [lo, hi] and a random sign; keeps kinks out of reach.
inline trimix::Tensor away_from_zero(std::mt19937_64& gen, trimix::Shape shape, double lo = 0.1, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(trimix::shape_numel(shape));
  for (auto& x : v) x = sign(gen) ? u(gen) : -u(gen);
  return trimix::Tensor(std::move(shape), std::move(v));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

// ||a - b|| / max(||a||, ||b||, floor).
inline double rel_error(std::span<const double> a, std::span<const double> b, double floor = 0.0) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double den = std::max({std::sqrt(na), std::sqrt(nb), floor});
  return den == 0.0 ? 0.0 : std::sqrt(d) / den;
}

// Tape gradient and central-difference gradient of scalar f at each input.
// f receives tensors that are tape leaves for the analytic pass and
// constants for the numeric pass.
struct GradPair {
  std::vector<std::vector<double>> analytic;
  std::vector<std::vector<double>> numeric;
};

inline GradPair grad_pair(const std::function<trimix::Tensor(const std::vector<trimix::Tensor>&)>& f,
                          std::vector<trimix::Tensor> inputs, double h = 1e-5) {
  GradPair out;
  {
    trimix::Tape tape;
    std::vector<trimix::Tensor> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
    const trimix::Gradients g = tape.backward(f(leaves));
    for (const auto& l : leaves) out.analytic.push_back(g.of(l).values());
  }
  std::vector<std::vector<double>> bufs;
  for (const auto& t : inputs) bufs.push_back(t.values());
  std::vector<std::vector<double>*> ptrs;
  for (auto& b : bufs) ptrs.push_back(&b);
  auto fn = [&]() {
    std::vector<trimix::Tensor> cur;
    for (std::size_t i = 0; i < inputs.size(); ++i) cur.emplace_back(inputs[i].shape(), bufs[i]);
    return f(cur).item();
  };
  out.numeric = trimix_oracle::finite_diff(fn, ptrs, h);
  return out;
}

// With zero_fraction > 0, tensor norms below that fraction of the largest
// numeric gradient norm count as zero.
inline double worst_rel_error(const GradPair& g, double zero_fraction = 0.0) {
  double scale = 0.0;
  for (const auto& n : g.numeric)
    scale = std::max(scale, std::sqrt(std::inner_product(n.begin(), n.end(), n.begin(), 0.0)));
  const double floor = zero_fraction * scale;
  double w = 0.0;
  for (std::size_t i = 0; i < g.analytic.size(); ++i) w = std::max(w, rel_error(g.analytic[i], g.numeric[i], floor));
  return w;
}

}  // namespace test
