#include <doctest.h>

#include <cmath>

#include "trimix_oracle/oracle.hpp"
#include "trimix_oracle/verify.hpp"

using namespace trimix_oracle;

TEST_SUITE("oracle") {

TEST_CASE("finite differences of simple functions") {
  std::vector<double> theta = {1.0, 2.0};
  std::vector<std::vector<double>*> ptrs{&theta};
  const auto g = finite_diff([&] { return theta[0] * theta[0] + theta[1] * theta[1]; }, ptrs, 1e-5);
  CHECK(std::fabs(g[0][0] - 2.0) < 1e-8);
  CHECK(std::fabs(g[0][1] - 4.0) < 1e-8);
  CHECK(theta == std::vector<double>{1.0, 2.0});

  const auto z = finite_diff([] { return 3.0; }, ptrs, 1e-5);
  CHECK(z[0] == std::vector<double>{0.0, 0.0});

  CHECK_THROWS_AS(finite_diff([&] { return std::log(theta[0] - 1.0); }, ptrs, 1e-5), OracleError);
}

TEST_CASE("correlation hand cases") {
  const Matrix z(2, 2, {1.0, 0.0, 0.0, 1.0});
  const Matrix c = naive_correlation(z, z, Mode::Features);
  CHECK(c.v == std::vector<double>{1.0, 0.0, 0.0, 1.0});
  CHECK(naive_l_inv(c) == 0.0);
  CHECK(naive_l_rr(c) == 0.0);

  const Matrix a(3, 1, {1.0, 2.0, 3.0});
  const Matrix b(3, 1, {-2.0, -4.0, -6.0});
  CHECK(std::fabs(naive_correlation(a, b, Mode::Features)(0, 0) + 1.0) < 1e-15);
  CHECK(std::fabs(naive_l_inv(naive_correlation(a, b, Mode::Features)) - 4.0) < 1e-14);

  const Matrix rows(2, 2, {3.0, 4.0, 4.0, 3.0});
  const Matrix m = naive_correlation(rows, rows, Mode::Samples);
  CHECK(std::fabs(m(0, 1) - 24.0 / 25.0) < 1e-15);
  CHECK_THROWS_AS(naive_correlation(Matrix(2, 1, {0.0, 0.0}), a, Mode::Features), OracleError);
}

TEST_CASE("standardize, softmax and l1") {
  const Matrix s = naive_standardize(Matrix(2, 3, {1.0, 2.0, 3.0, 2.0, 2.0, 5.0}), false);
  const double sd = std::sqrt(2.0 / 3.0);
  CHECK(std::fabs(s(0, 0) + 1.0 / sd) < 1e-14);
  CHECK(std::fabs(s(0, 2) - 1.0 / sd) < 1e-14);
  CHECK(std::fabs(s(1, 2) - std::sqrt(2.0)) < 1e-14);
  CHECK_THROWS_AS(naive_standardize(Matrix(2, 2, {1.0, 1.0, 0.0, 2.0}), false), OracleError);

  const Matrix p = naive_row_softmax(Matrix(1, 2, {0.0, 2.0 * std::log(3.0)}), 2.0);
  CHECK(std::fabs(p(0, 0) - 0.25) < 1e-15);
  CHECK(std::fabs(p(0, 1) - 0.75) < 1e-15);

  CHECK(naive_l1_mean(Matrix(1, 2, {1.0, -1.0}), Matrix(1, 2, {0.0, 1.0})) == 1.5);
}

TEST_CASE("scalar adam") {
  ScalarAdam a{0.1};
  const double t1 = a.step(1.0, 2.0);
  CHECK(std::fabs(t1 - (1.0 - 0.1 * 2.0 / (2.0 + 1e-8))) < 1e-15);
  CHECK(a.t == 1);
  ScalarAdam b{0.1};
  CHECK(b.step(1.0, 0.0) == 1.0);
}

TEST_CASE("naive knn") {
  const Matrix train(3, 2, {1.0, 0.0, 0.0, 1.0, 1.0, 0.1});
  const Matrix test(2, 2, {1.0, 0.05, 0.1, 1.0});
  CHECK(naive_knn(train, {0, 1, 0}, test, 1) == std::vector<int>{0, 1});
  CHECK(naive_knn(train, {0, 1, 0}, test, 3) == std::vector<int>{0, 0});
  CHECK(naive_knn(train, {2, 1, 0}, test, 3) == std::vector<int>{0, 1});
}

TEST_CASE("compare reports the worst entry") {
  const std::vector<double> e = {1.0, 2.0, 3.0}, a = {1.0, 2.5, 3.0};
  const OracleReport r = compare("x#0", 7, e, a, 0.1);
  CHECK_FALSE(r.pass);
  CHECK(r.max_abs_diff == 0.5);
  CHECK(r.detail.find("entry 1") != std::string::npos);
  CHECK(compare("x#1", 7, e, e, 0.0).pass);
}

TEST_CASE("library matches the naive reference") {
  const auto reports = run_oracle_equivalence(5, 1);
  CHECK(reports.size() == 30);
  for (const auto& r : reports) CHECK_MESSAGE(r.pass, r.case_id << " " << r.detail);
}

TEST_CASE("small gradcheck") {
  trimix::TriMixConfig cfg;
  cfg.encoder_widths = {16};
  cfg.projector_widths = {16};
  cfg.lambda_policy = trimix::LambdaPolicy::fixed(0.3);
  GradcheckOptions opts;
  opts.batch = 8;
  opts.grid = 6;
  opts.max_coords = 64;
  const GradcheckResult r = run_gradcheck(cfg, opts);
  CHECK(r.pass);
  CHECK(r.max_rel_error < 1e-4);
  CHECK(r.tensors.size() == 4);
}

}  // TEST_SUITE
