#include <doctest.h>

#include <set>

#include "files.hpp"
#include "support.hpp"
#include "trimix/data.hpp"
#include "trimix/error.hpp"

using namespace trimix;
using namespace trimix::data;

TEST_SUITE("data") {

TEST_CASE("synthetic blobs are deterministic and well formed") {
  SyntheticSpec spec;
  spec.classes = 3;
  spec.count = 300;
  spec.grid = 16;
  spec.seed = 7;
  const Dataset a = make_synthetic(spec), b = make_synthetic(spec);
  CHECK(a.images.values() == b.images.values());
  CHECK(a.labels == b.labels);
  CHECK(a.images.shape() == Shape{300, 1, 16, 16});
  CHECK(a.num_classes == 3);
  for (double v : a.images.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  std::vector<int> counts(3, 0);
  for (int l : a.labels) ++counts[l];
  CHECK(counts == std::vector<int>{100, 100, 100});
  spec.seed = 8;
  CHECK(make_synthetic(spec).images.values() != a.images.values());
}

TEST_CASE("blob centres depend on the class") {
  SyntheticSpec spec;
  spec.count = 3;
  spec.jitter = 0.0;
  spec.noise = 0.0;
  spec.background = 0.0;
  const Dataset ds = make_synthetic(spec);
  // Brightest row of each image moves down with the class id.
  std::vector<std::size_t> peak_row;
  for (std::size_t n = 0; n < 3; ++n) {
    std::size_t best = 0;
    double best_v = -1.0;
    for (std::size_t i = 0; i < 256; ++i) {
      if (ds.images[n * 256 + i] > best_v) {
        best_v = ds.images[n * 256 + i];
        best = i / 16;
      }
    }
    peak_row.push_back(best);
  }
  CHECK(peak_row[0] < peak_row[1]);
  CHECK(peak_row[1] < peak_row[2]);
}

TEST_CASE("IDX fixture decodes to the written bytes") {
  test::TempDir dir("idx");
  const std::vector<unsigned char> px = {0, 255, 128, 7, 1, 2, 3, 4};
  test::write_bytes(dir.file("img"), test::idx_images(2, 2, 2, px));
  test::write_bytes(dir.file("lab"), test::idx_labels({1, 0}));
  const Dataset ds = load_idx(dir.file("img"), dir.file("lab"));
  CHECK(ds.images.shape() == Shape{2, 1, 2, 2});
  for (std::size_t i = 0; i < px.size(); ++i) CHECK(ds.images[i] == px[i] / 255.0);
  CHECK(ds.labels == std::vector<int>{1, 0});
  CHECK(ds.num_classes == 2);
}

TEST_CASE("IDX format errors carry byte offsets") {
  test::TempDir dir("idxbad");
  test::write_bytes(dir.file("lab"), test::idx_labels({1, 0}));

  // A label file passed as images.
  try {
    load_idx(dir.file("lab"), dir.file("lab"));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }

  // Truncated pixel data: reported where the bytes run out.
  auto img = test::idx_images(2, 2, 2, {1, 2, 3});
  test::write_bytes(dir.file("short"), img);
  try {
    load_idx(dir.file("short"), dir.file("lab"));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 19);
  }

  // Label out of range for a declared class count.
  test::write_bytes(dir.file("img"), test::idx_images(2, 1, 1, {0, 0}));
  test::write_bytes(dir.file("lab3"), test::idx_labels({0, 3}));
  try {
    load_idx(dir.file("img"), dir.file("lab3"), 3);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 9);
  }

  // Count mismatch.
  test::write_bytes(dir.file("lab1"), test::idx_labels({0}));
  CHECK_THROWS_AS(load_idx(dir.file("img"), dir.file("lab1")), FormatError);
  CHECK_THROWS_AS(load_idx(dir.file("missing"), dir.file("lab1")), Error);
}

TEST_CASE("CSV loader") {
  test::TempDir dir("csv");
  {
    std::ofstream f(dir.file("ok.csv"));
    f << "1,0,255,51,102\n0,255,255,0,0\n";
  }
  const Dataset ds = load_csv(dir.file("ok.csv"), 1, 2, 2);
  CHECK(ds.size() == 2);
  CHECK(ds.labels == std::vector<int>{1, 0});
  CHECK(ds.images[2] == 51 / 255.0);

  {
    std::ofstream f(dir.file("short.csv"));
    f << "1,0,255,51,102\n0,255\n";
  }
  try {
    load_csv(dir.file("short.csv"), 1, 2, 2);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 15);
  }
  {
    std::ofstream f(dir.file("range.csv"));
    f << "1,0,256,51,102\n";
  }
  CHECK_THROWS_AS(load_csv(dir.file("range.csv"), 1, 2, 2), FormatError);
}

TEST_CASE("identity policy leaves both views equal to the input") {
  std::mt19937_64 gen(1);
  const Tensor imgs = test::random_tensor(gen, {4, 3, 5, 5}, 0, 1);
  const ViewPair v = two_views(imgs, {0, 1, 2, 3}, AugmentPolicy::identity(), {1, 0, 0});
  CHECK(v.x.values() == imgs.values());
  CHECK(v.x_prime.values() == imgs.values());
}

TEST_CASE("hflip with probability one reverses columns") {
  const std::vector<double> img = {0.1, 0.2, 0.3, 0.4};
  AugmentPolicy p = AugmentPolicy::identity();
  p.hflip = 1.0;
  CHECK(augment_image(img, 1, 2, 2, p, 5) == std::vector<double>{0.2, 0.1, 0.4, 0.3});
}

TEST_CASE("two_views determinism, independence and parity") {
  std::mt19937_64 gen(2);
  const Tensor imgs = test::random_tensor(gen, {6, 1, 8, 8}, 0, 1);
  const AugmentPolicy p;
  const ViewPair a = two_views(imgs, {0, 1, 2, 0, 1, 2}, p, {3, 1, 2});
  const ViewPair b = two_views(imgs, {0, 1, 2, 0, 1, 2}, p, {3, 1, 2});
  CHECK(a.x.values() == b.x.values());
  CHECK(a.x_prime.values() == b.x_prime.values());
  CHECK(a.x.values() != a.x_prime.values());
  CHECK(two_views(imgs, a.labels, p, {3, 2, 2}).x.values() != a.x.values());
  CHECK_THROWS_AS(two_views(test::random_tensor(gen, {5, 1, 8, 8}, 0, 1), {0, 0, 0, 0, 0}, p, {}),
                  BatchParityError);
}

TEST_CASE("each view row depends only on its own image") {
  std::mt19937_64 gen(3);
  Tensor imgs = test::random_tensor(gen, {4, 1, 6, 6}, 0, 1);
  const ViewPair a = two_views(imgs, {0, 0, 0, 0}, AugmentPolicy{}, {9, 0, 0});
  for (std::size_t i = 36; i < 72; ++i) imgs.mutable_data()[i] = 0.5;  // change image 1 only
  const ViewPair b = two_views(imgs, {0, 0, 0, 0}, AugmentPolicy{}, {9, 0, 0});
  for (std::size_t r : {0u, 2u, 3u})
    for (std::size_t j = 0; j < 36; ++j) {
      CHECK(a.x[r * 36 + j] == b.x[r * 36 + j]);
      CHECK(a.x_prime[r * 36 + j] == b.x_prime[r * 36 + j]);
    }
}

TEST_CASE("augmented pixels stay in range for random policies") {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0, 1);
  bool ok = true;
  for (int n = 0; n < 200; ++n) {
    AugmentPolicy p{static_cast<std::size_t>(gen() % 4), u(gen), 0.99 * u(gen), 0.99 * u(gen), u(gen)};
    const std::size_t c = gen() % 2 ? 3 : 1;
    const Tensor img = test::random_tensor(gen, {1, c, 6, 6}, 0, 1);
    for (double v : augment_image(img.data(), c, 6, 6, p, gen())) ok = ok && v >= 0.0 && v <= 1.0;
  }
  CHECK(ok);
}

TEST_CASE("policy validation") {
  AugmentPolicy p;
  p.hflip = 1.5;
  CHECK_THROWS_AS(p.validate(), ContractError);
  p = AugmentPolicy{};
  p.brightness = -0.1;
  CHECK_THROWS_AS(p.validate(), ContractError);
  CHECK_NOTHROW(AugmentPolicy{}.validate());
}

TEST_CASE("batches drop the tail and cover each index once") {
  const auto b = batches(10, 4, 1, 1);
  CHECK(b.size() == 2);
  std::set<std::size_t> seen;
  for (const auto& batch : b) {
    CHECK(batch.size() == 4);
    seen.insert(batch.begin(), batch.end());
  }
  CHECK(seen.size() == 8);
  CHECK(batches(10, 4, 1, 1) == b);
  CHECK(batches(10, 4, 1, 2) != b);
  CHECK_THROWS_AS(batches(10, 3, 1, 1), BatchParityError);
  CHECK_THROWS_AS(batches(10, 12, 1, 1), ContractError);
  CHECK(batches(10, 4, 1, 1, false).back().size() == 2);
}

TEST_CASE("every epoch is a permutation of the retained indices") {
  for (std::uint64_t epoch : {1u, 2u, 3u}) {
    std::vector<std::size_t> all;
    for (const auto& batch : batches(64, 8, 5, epoch)) all.insert(all.end(), batch.begin(), batch.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < 64; ++i) CHECK(all[i] == i);
  }
}

TEST_CASE("subset and gather") {
  SyntheticSpec spec;
  spec.count = 12;
  const Dataset ds = make_synthetic(spec);
  const std::vector<std::size_t> idx = {5, 2};
  const Dataset s = subset(ds, idx);
  CHECK(s.size() == 2);
  CHECK(s.labels == std::vector<int>{ds.labels[5], ds.labels[2]});
  CHECK(gather_images(ds, idx).values() == s.images.values());
  for (std::size_t j = 0; j < 256; ++j) CHECK(s.images[j] == ds.images[5 * 256 + j]);
}

}  // TEST_SUITE
