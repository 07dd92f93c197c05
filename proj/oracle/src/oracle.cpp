#include "trimix_oracle/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace trimix_oracle {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), v(std::move(values)) {
  if (v.size() != r * c) throw OracleError("matrix size mismatch");
}

OracleReport compare(const std::string& case_id, std::uint64_t seed, std::span<const double> expected,
                     std::span<const double> actual, double tolerance) {
  OracleReport rep;
  rep.case_id = case_id;
  rep.seed = seed;
  rep.tolerance = tolerance;
  if (expected.size() != actual.size()) {
    rep.max_abs_diff = INFINITY;
    rep.detail = "size " + std::to_string(expected.size()) + " vs " + std::to_string(actual.size());
    return rep;
  }
  std::size_t worst = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const double d = std::fabs(expected[i] - actual[i]);
    if (!(d <= rep.max_abs_diff)) {
      rep.max_abs_diff = std::isnan(d) ? INFINITY : d;
      worst = i;
    }
  }
  rep.pass = rep.max_abs_diff <= tolerance;
  if (!rep.pass) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "entry %zu: expected %.17g, got %.17g", worst, expected[worst], actual[worst]);
    rep.detail = buf;
  }
  return rep;
}

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw OracleError("naive_matmul: inner dimensions differ");
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

Matrix naive_correlation(const Matrix& z, const Matrix& z2, Mode mode) {
  if (z.rows != z2.rows || z.cols != z2.cols) throw OracleError("naive_correlation: shape mismatch");
  if (mode == Mode::Features) {
    const std::size_t d = z.cols;
    Matrix c(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double num = 0.0, n1 = 0.0, n2 = 0.0;
        for (std::size_t b = 0; b < z.rows; ++b) {
          num += z(b, i) * z2(b, j);
          n1 += z(b, i) * z(b, i);
          n2 += z2(b, j) * z2(b, j);
        }
        const double den = std::sqrt(n1) * std::sqrt(n2);
        if (den == 0.0) throw OracleError("naive_correlation: zero denominator");
        c(i, j) = num / den;
      }
    return c;
  }
  const std::size_t b = z.rows;
  Matrix m(b, b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      double num = 0.0, n1 = 0.0, n2 = 0.0;
      for (std::size_t a = 0; a < z.cols; ++a) {
        num += z(i, a) * z2(j, a);
        n1 += z(i, a) * z(i, a);
        n2 += z2(j, a) * z2(j, a);
      }
      const double den = std::sqrt(n1) * std::sqrt(n2);
      if (den == 0.0) throw OracleError("naive_correlation: zero denominator");
      m(i, j) = num / den;
    }
  return m;
}

Matrix naive_standardize(const Matrix& z, bool batch_axis) {
  Matrix out(z.rows, z.cols);
  const std::size_t slices = batch_axis ? z.cols : z.rows;
  const std::size_t len = batch_axis ? z.rows : z.cols;
  for (std::size_t s = 0; s < slices; ++s) {
    auto at = [&](std::size_t k) { return batch_axis ? z(k, s) : z(s, k); };
    double mean = 0.0;
    for (std::size_t k = 0; k < len; ++k) mean += at(k);
    mean /= static_cast<double>(len);
    double var = 0.0;
    for (std::size_t k = 0; k < len; ++k) var += (at(k) - mean) * (at(k) - mean);
    const double sd = std::sqrt(var / static_cast<double>(len));
    if (sd == 0.0) throw OracleError("naive_standardize: constant slice");
    for (std::size_t k = 0; k < len; ++k) (batch_axis ? out(k, s) : out(s, k)) = (at(k) - mean) / sd;
  }
  return out;
}

Matrix naive_row_softmax(const Matrix& m, double tau) {
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) total += std::exp(m(i, j) / tau);
    for (std::size_t j = 0; j < m.cols; ++j) out(i, j) = std::exp(m(i, j) / tau) / total;
  }
  return out;
}

double naive_l_inv(const Matrix& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.rows; ++i) s += (1.0 - c(i, i)) * (1.0 - c(i, i));
  return s;
}

double naive_l_rr(const Matrix& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.rows; ++i)
    for (std::size_t j = 0; j < c.cols; ++j)
      if (j != i) s += c(i, j) * c(i, j);
  return s;
}

double naive_l1_mean(const Matrix& a, const Matrix& b) {
  if (a.v.size() != b.v.size()) throw OracleError("naive_l1_mean: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) s += std::fabs(a.v[i] - b.v[i]);
  return s / static_cast<double>(a.v.size());
}

std::vector<std::vector<double>> finite_diff_at(const std::function<double()>& f,
                                                std::span<std::vector<double>*> params,
                                                const std::vector<std::vector<std::size_t>>& coords, double h) {
  std::vector<std::vector<double>> out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& buf = *params[p];
    std::vector<double> g;
    g.reserve(coords[p].size());
    for (std::size_t i : coords[p]) {
      const double saved = buf[i];
      buf[i] = saved + h;
      const double up = f();
      buf[i] = saved - h;
      const double down = f();
      buf[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) throw OracleError("finite_diff: non-finite function value");
      g.push_back((up - down) / (2.0 * h));
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<std::vector<double>> finite_diff(const std::function<double()>& f, std::span<std::vector<double>*> params,
                                             double h) {
  std::vector<std::vector<std::size_t>> coords;
  for (const auto* p : params) {
    std::vector<std::size_t> all(p->size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    coords.push_back(std::move(all));
  }
  return finite_diff_at(f, params, coords, h);
}

double ScalarAdam::step(double theta, double grad) {
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad * grad;
  const double mhat = m / (1.0 - std::pow(beta1, t));
  const double vhat = v / (1.0 - std::pow(beta2, t));
  return theta - lr * mhat / (std::sqrt(vhat) + eps);
}

std::vector<int> naive_knn(const Matrix& train, const std::vector<int>& train_labels, const Matrix& test,
                           std::size_t k) {
  auto norm = [](const Matrix& m, std::size_t r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) s += m(r, c) * m(r, c);
    return std::sqrt(s);
  };
  std::vector<int> out;
  for (std::size_t t = 0; t < test.rows; ++t) {
    std::vector<std::pair<double, std::size_t>> sims;
    for (std::size_t i = 0; i < train.rows; ++i) {
      double dot = 0.0;
      for (std::size_t c = 0; c < train.cols; ++c) dot += train(i, c) * test(t, c);
      sims.emplace_back(dot / (norm(train, i) * norm(test, t)), i);
    }
    std::stable_sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::map<int, std::pair<std::size_t, double>> tally;
    for (std::size_t j = 0; j < k; ++j) {
      auto& e = tally[train_labels[sims[j].second]];
      e.first += 1;
      e.second += sims[j].first;
    }
    int best = -1;
    std::pair<std::size_t, double> best_score{0, 0.0};
    for (const auto& [label, score] : tally) {  // ascending label order
      if (best < 0 || score.first > best_score.first ||
          (score.first == best_score.first && score.second > best_score.second)) {
        best = label;
        best_score = score;
      }
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace trimix_oracle
