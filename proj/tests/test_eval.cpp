#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "trimix/error.hpp"
#include "trimix/eval.hpp"
#include "trimix/ops.hpp"
#include "trimix_oracle/oracle.hpp"

using namespace trimix;
using namespace trimix::eval;

namespace {

data::Dataset small_synthetic(std::size_t count, std::uint64_t seed) {
  data::SyntheticSpec spec;
  spec.count = count;
  spec.grid = 8;
  spec.seed = seed;
  return data::make_synthetic(spec);
}

model::Arch small_arch() { return {64, {32, 16}, {16, 16}, model::Activation::Relu}; }

trimix_oracle::Matrix to_matrix(const Tensor& t) { return {t.dim(0), t.dim(1), t.values()}; }

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("feature extraction") {
  const data::Dataset ds = small_synthetic(30, 1);
  const model::ModelParams p = model::init_params(small_arch(), 3);
  const FeatureBank a = extract_features(p, ds);
  const FeatureBank b = extract_features(p, ds);
  CHECK(a.features.values() == b.features.values());
  CHECK(a.labels == ds.labels);
  CHECK(a.features.shape() == Shape{30, 16});

  const Tensor y = model::encode(ds.images, p);
  for (std::size_t r = 0; r < 30; ++r) {
    double n = 0.0;
    for (std::size_t c = 0; c < 16; ++c) n += y.at(r, c) * y.at(r, c);
    n = std::sqrt(n);
    double unit = 0.0;
    for (std::size_t c = 0; c < 16; ++c) {
      CHECK(std::fabs(a.features.at(r, c) - y.at(r, c) / n) < 1e-12);
      unit += a.features.at(r, c) * a.features.at(r, c);
    }
    CHECK(std::fabs(unit - 1.0) < 1e-12);
  }
}

TEST_CASE("zero encoder output is degenerate") {
  const data::Dataset ds = small_synthetic(10, 1);
  model::ModelParams p = model::init_params(small_arch(), 3);
  for (double& v : p.encoder.back().weight.mutable_data()) v = 0.0;
  try {
    extract_features(p, ds);
    FAIL("expected DegenerateError");
  } catch (const DegenerateError& e) {
    CHECK(std::string(e.what()).find("row 0") != std::string::npos);
  }
}

TEST_CASE("input width mismatch") {
  const data::Dataset ds = small_synthetic(10, 1);
  model::Arch arch = small_arch();
  arch.input = 100;
  CHECK_THROWS_AS(extract_features(model::init_params(arch, 0), ds), ArchMismatchError);
}

TEST_CASE("knn with k = 1 recovers identical points") {
  std::mt19937_64 gen(5);
  const Tensor x = test::random_tensor(gen, {20, 6});
  std::vector<int> labels(20);
  for (std::size_t i = 0; i < 20; ++i) labels[i] = static_cast<int>(i % 4);
  const FeatureBank bank = make_bank(x, labels, 4);
  const EvalReport r = knn_eval(bank, bank, 1);
  CHECK(r.accuracy == 1.0);
  CHECK(r.correct == 20);
  CHECK(r.n == 20);
}

TEST_CASE("knn with k = N votes the majority") {
  std::mt19937_64 gen(6);
  const Tensor x = test::random_tensor(gen, {9, 4});
  const std::vector<int> labels = {0, 1, 1, 2, 1, 0, 2, 1, 0};
  const FeatureBank train = make_bank(x, labels, 3);
  const FeatureBank query = make_bank(test::random_tensor(gen, {5, 4}), {1, 1, 1, 1, 1}, 3);
  CHECK(knn_eval(train, query, 9).accuracy == 1.0);
}

TEST_CASE("knn count ties go to summed similarity") {
  const Tensor train({2, 2}, std::vector<double>{1.0, 0.0, 0.0, 1.0});
  const Tensor query({1, 2}, std::vector<double>{0.9, 0.1});
  CHECK(knn_eval(make_bank(train, {1, 0}, 2), make_bank(query, {1}, 2), 2).correct == 1);
  CHECK(knn_eval(make_bank(train, {0, 1}, 2), make_bank(query, {0}, 2), 2).correct == 1);
}

TEST_CASE("knn agrees with the naive reference") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 gen(seed);
    const Tensor xtr = test::random_tensor(gen, {40, 5});
    const Tensor xte = test::random_tensor(gen, {25, 5});
    std::uniform_int_distribution<int> lab(0, 2);
    std::vector<int> ytr(40), yte(25);
    for (auto& y : ytr) y = lab(gen);
    for (auto& y : yte) y = lab(gen);
    const std::vector<int> pred = trimix_oracle::naive_knn(to_matrix(xtr), ytr, to_matrix(xte), 5);
    std::size_t expected = 0;
    for (std::size_t i = 0; i < 25; ++i) expected += pred[i] == yte[i];
    CHECK(knn_eval(make_bank(xtr, ytr, 3), make_bank(xte, yte, 3), 5).correct == expected);
  }
}

TEST_CASE("knn ignores feature scale") {
  std::mt19937_64 gen(8);
  const Tensor xtr = test::random_tensor(gen, {30, 4});
  const Tensor xte = test::random_tensor(gen, {12, 4});
  std::vector<int> ytr(30), yte(12);
  for (std::size_t i = 0; i < 30; ++i) ytr[i] = static_cast<int>(i % 3);
  for (std::size_t i = 0; i < 12; ++i) yte[i] = static_cast<int>(i % 3);
  const auto base = knn_eval(make_bank(xtr, ytr, 3), make_bank(xte, yte, 3), 7).correct;
  const auto scaled =
      knn_eval(make_bank(ops::scalar_mul(xtr, 37.5), ytr, 3), make_bank(ops::scalar_mul(xte, 1e-3), yte, 3), 7).correct;
  CHECK(base == scaled);
}

TEST_CASE("knn argument checks") {
  const FeatureBank b = make_bank(Tensor({2, 2}, std::vector<double>{1, 0, 0, 1}), {0, 1}, 2);
  CHECK_THROWS_AS(knn_eval(b, b, 0), ContractError);
  CHECK_THROWS_AS(knn_eval(b, b, 3), ContractError);
  CHECK_THROWS_AS(make_bank(Tensor({2, 2}, 1.0), {0}, 2), DimensionError);
}

TEST_CASE("cross-entropy gradient matches finite differences") {
  std::mt19937_64 gen(9);
  const std::vector<int> labels = {0, 2, 1, 2, 3};
  const auto g = test::grad_pair(
      [&](const std::vector<Tensor>& in) { return softmax_cross_entropy(in[0], labels); },
      {test::random_tensor(gen, {5, 4}, -3.0, 3.0)});
  CHECK(test::worst_rel_error(g) < 1e-7);

  const Tensor uniform({2, 3}, 0.0);
  CHECK(std::fabs(softmax_cross_entropy(uniform, std::vector<int>{0, 2}).item() - std::log(3.0)) < 1e-14);
  CHECK_THROWS_AS(softmax_cross_entropy(uniform, std::vector<int>{0, 3}), ContractError);
  CHECK_THROWS_AS(softmax_cross_entropy(uniform, std::vector<int>{0}), DimensionError);
}

TEST_CASE("probe separates separable features") {
  std::mt19937_64 gen(10);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  auto make = [&](std::size_t n) {
    std::vector<double> v;
    std::vector<int> y;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = static_cast<int>(i % 3);
      for (int k = 0; k < 3; ++k) v.push_back((k == c ? 1.0 : 0.0) + u(gen) * 0.5);
      y.push_back(c);
    }
    return make_bank(Tensor({n, 3}, v), y, 3);
  };
  ProbeConfig cfg;
  cfg.epochs = 50;
  cfg.lr = 0.1;
  cfg.batch = 32;
  const EvalReport r = linear_probe(make(150), make(60), cfg);
  CHECK(r.accuracy == 1.0);
  CHECK(r.protocol == "probe");
}

TEST_CASE("probe on shuffled labels stays near chance") {
  std::mt19937_64 gen(11);
  std::bernoulli_distribution coin(0.5);
  std::vector<int> ytr(1000), yte(1000);
  for (auto& y : ytr) y = coin(gen);
  for (auto& y : yte) y = coin(gen);
  const FeatureBank tr = make_bank(test::random_tensor(gen, {1000, 8}), ytr, 2);
  const FeatureBank te = make_bank(test::random_tensor(gen, {1000, 8}), yte, 2);
  ProbeConfig cfg;
  cfg.epochs = 20;
  cfg.lr = 0.05;
  const double acc = linear_probe(tr, te, cfg).accuracy;
  CHECK(acc > 0.42);
  CHECK(acc < 0.58);
}

TEST_CASE("probe is deterministic and rejects constant features") {
  std::mt19937_64 gen(12);
  const FeatureBank tr = make_bank(test::random_tensor(gen, {40, 4}), std::vector<int>(40, 0), 2);
  ProbeConfig cfg;
  cfg.epochs = 3;
  CHECK(linear_probe(tr, tr, cfg).correct == linear_probe(tr, tr, cfg).correct);
  const FeatureBank flat = make_bank(Tensor({6, 2}, 1.0), {0, 1, 0, 1, 0, 1}, 2);
  CHECK_THROWS_AS(linear_probe(flat, flat, cfg), DegenerateError);
}

TEST_CASE("stratified subset") {
  std::vector<int> labels(400);
  for (std::size_t i = 0; i < 400; ++i) labels[i] = static_cast<int>((i * 7) % 4);
  const auto idx = stratified_subset(labels, 4, 0.1, 3);
  REQUIRE(idx.size() == 40);
  CHECK(std::is_sorted(idx.begin(), idx.end()));
  std::vector<int> per(4, 0);
  for (std::size_t i : idx) ++per[static_cast<std::size_t>(labels[i])];
  CHECK(per == std::vector<int>{10, 10, 10, 10});
  CHECK(stratified_subset(labels, 4, 0.1, 3) == idx);
  CHECK(stratified_subset(labels, 4, 0.1, 4) != idx);
  CHECK(stratified_subset(labels, 4, 1.0, 0).size() == 400);
  CHECK_THROWS_AS(stratified_subset(labels, 4, 0.0, 0), ContractError);
  CHECK_THROWS_AS(stratified_subset(labels, 4, 1.5, 0), ContractError);
}

TEST_CASE("fine-tuning") {
  const data::Dataset train = small_synthetic(300, 1);
  const data::Dataset test = small_synthetic(150, 2);
  const model::ModelParams p = model::init_params(small_arch(), 4);
  const std::vector<double> before = p.encoder.front().weight.values();
  ProbeConfig cfg;
  cfg.lr = 0.05;
  cfg.batch = 32;

  CHECK_THROWS_AS(finetune_semi(p, train, test, 0.001, cfg, 5), ContractError);

  const EvalReport tenth = finetune_semi(p, train, test, 0.1, cfg, 40);
  const EvalReport hundredth = finetune_semi(p, train, test, 0.01, cfg, 40);
  CHECK(tenth.protocol == "finetune@0.1");
  CHECK(tenth.n == 150);
  CHECK(tenth.accuracy >= hundredth.accuracy);
  CHECK(p.encoder.front().weight.values() == before);
  CHECK(finetune_semi(p, train, test, 0.1, cfg, 40).correct == tenth.correct);
}

TEST_CASE("report formatting") {
  EvalReport r{"knn", 0.75, 4, 3, "abc"};
  CHECK(r.csv_line() == "knn,0.750000,4,3,abc");
  CHECK(r.pretty().find("75.00%") != std::string::npos);
}

}  // TEST_SUITE
