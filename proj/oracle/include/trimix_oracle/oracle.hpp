#pragma once

// Deliberately naive reference implementations used to certify the library.
// Nothing here includes or links the trimix library: inputs and outputs are
// plain row-major matrices so the two code paths stay independent.

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace trimix_oracle {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values);

  double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OracleReport {
  std::string case_id;
  std::uint64_t seed = 0;
  double max_abs_diff = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  // On failure: the first offending entry as "index: expected vs actual".
  std::string detail;
};

// Compares element-wise and fills a report.
OracleReport compare(const std::string& case_id, std::uint64_t seed, std::span<const double> expected,
                     std::span<const double> actual, double tolerance);

Matrix naive_matmul(const Matrix& a, const Matrix& b);

enum class Mode { Features, Samples };

// Correlation with explicit square-root denominators, no standardisation:
//   Features: C_ij = sum_b z[b,i] z2[b,j] / (|z[:,i]| |z2[:,j]|)   (D x D)
//   Samples:  M_mn = sum_a z[m,a] z2[n,a] / (|z[m,:]| |z2[n,:]|)   (B x B)
Matrix naive_correlation(const Matrix& z, const Matrix& z2, Mode mode);

// Population standardisation. batch_axis: per column, else per row.
Matrix naive_standardize(const Matrix& z, bool batch_axis);

// Row softmax of m / tau, no max subtraction.
Matrix naive_row_softmax(const Matrix& m, double tau);

double naive_l_inv(const Matrix& c);
double naive_l_rr(const Matrix& c);
double naive_l1_mean(const Matrix& a, const Matrix& b);

// Central differences (f(x + h e) - f(x - h e)) / 2h for every coordinate of
// every buffer. f reads the buffers; they are restored after each probe.
std::vector<std::vector<double>> finite_diff(const std::function<double()>& f, std::span<std::vector<double>*> params,
                                             double h = 1e-5);

// As finite_diff but only for the listed coordinates of each buffer.
std::vector<std::vector<double>> finite_diff_at(const std::function<double()>& f,
                                                std::span<std::vector<double>*> params,
                                                const std::vector<std::vector<std::size_t>>& coords, double h = 1e-5);

// Textbook scalar Adam, one coordinate.
struct ScalarAdam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double m = 0.0, v = 0.0;
  int t = 0;

  double step(double theta, double grad);
};

// KNN by fully sorting every train point by cosine similarity. Returns the
// predicted label per test row. Ties: vote count, then summed similarity,
// then smaller class id.
std::vector<int> naive_knn(const Matrix& train, const std::vector<int>& train_labels, const Matrix& test,
                           std::size_t k);

}  // namespace trimix_oracle
