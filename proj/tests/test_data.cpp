#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <vector>

#include "ncdwf/data.hpp"
#include "ncdwf/error.hpp"

using namespace ncdwf;

TEST_CASE("vanishing noise pins every sample to its class center") {
  MixtureParams p;
  p.classes = 3;
  p.per_class = 5;
  p.dim = 8;
  p.noise_sigma = 1e-300;  // below one ulp of any center coordinate
  const RawDataset data = generate_gaussian_mixture(p, 1);
  for (std::size_t c = 0; c < p.classes; ++c) {
    const std::size_t first = c * p.per_class;
    for (std::size_t s = 1; s < p.per_class; ++s)
      for (std::size_t k = 0; k < p.dim; ++k)
        CHECK(data.x(first + s, k) == data.x(first, k));
  }
}

TEST_CASE("well separated mixture is solvable by nearest centroid") {
  MixtureParams p;
  p.classes = 2;
  p.per_class = 1000;
  p.dim = 16;
  p.noise_sigma = 1.0;
  p.min_separation_multiplier = 8.0;
  const RawDataset data = generate_gaussian_mixture(p, 7);

  Tensor mean(p.classes, p.dim);
  std::vector<std::size_t> counts(p.classes, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto c = static_cast<std::size_t>(data.y[i]);
    ++counts[c];
    for (std::size_t k = 0; k < p.dim; ++k) mean(c, k) += data.x(i, k);
  }
  for (std::size_t c = 0; c < p.classes; ++c)
    for (std::size_t k = 0; k < p.dim; ++k) mean(c, k) /= static_cast<double>(counts[c]);

  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < p.classes; ++c) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < p.dim; ++k) {
        const double diff = data.x(i, k) - mean(c, k);
        d2 += diff * diff;
      }
      if (d2 < best_d) {
        best_d = d2;
        best = c;
      }
    }
    correct += best == static_cast<std::size_t>(data.y[i]);
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(data.size()) >= 0.999);
}

TEST_CASE("generation is a pure function of the seed") {
  MixtureParams p;
  p.classes = 4;
  p.per_class = 20;
  p.dim = 6;
  const RawDataset a = generate_gaussian_mixture(p, 99);
  const RawDataset b = generate_gaussian_mixture(p, 99);
  const RawDataset c = generate_gaussian_mixture(p, 100);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK_FALSE(a.x == c.x);
}

TEST_CASE("impossible separation reports crowded centers") {
  MixtureParams p;
  p.classes = 50;
  p.per_class = 1;
  p.dim = 1;
  p.center_scale = 1.0;
  p.noise_sigma = 1.0;
  p.min_separation_multiplier = 8.0;  // 50 points, 8 apart, inside [-1, 1]
  CHECK_THROWS_WITH_AS(generate_gaussian_mixture(p, 3), doctest::Contains("too crowded"),
                       Error);
}

TEST_CASE("parameter validation") {
  MixtureParams p;
  p.noise_sigma = 0.0;
  CHECK_THROWS_AS(generate_gaussian_mixture(p, 1), ConfigError);
  p.noise_sigma = 1.0;
  p.classes = 0;
  CHECK_THROWS_AS(generate_gaussian_mixture(p, 1), ConfigError);
}

namespace {

RawDataset small_raw() {
  MixtureParams p;
  p.classes = 10;
  p.per_class = 100;
  p.dim = 4;
  p.noise_sigma = 0.5;
  return generate_gaussian_mixture(p, 21);
}

}  // namespace

TEST_CASE("split keeps the first classes supervised and counts exactly") {
  const RawDataset raw = small_raw();
  SplitSpec spec;
  spec.total_classes = 10;
  spec.labeled = 5;
  spec.unlabeled = 5;
  const SplitDataset s = split_dataset(raw, spec, 0.2);

  CHECK(s.d == 4);
  CHECK(s.lab_train.size() == 5 * 80);
  CHECK(s.lab_test.size() == 5 * 20);
  CHECK(s.unlab_train_x.rows() == 5 * 80);
  CHECK(s.unlab_train_labels.size() == 5 * 80);
  CHECK(s.unlab_test.size() == 5 * 20);

  std::set<long> lab_classes(s.lab_train.y.begin(), s.lab_train.y.end());
  CHECK(lab_classes == std::set<long>{0, 1, 2, 3, 4});
  std::set<long> novel(s.unlab_train_labels.eval_labels().begin(),
                       s.unlab_train_labels.eval_labels().end());
  CHECK(novel == std::set<long>{0, 1, 2, 3, 4});  // remapped cluster ids
  std::set<long> novel_test(s.unlab_test.y.begin(), s.unlab_test.y.end());
  CHECK(novel_test == std::set<long>{0, 1, 2, 3, 4});
}

TEST_CASE("split is a partition of the raw rows") {
  const RawDataset raw = small_raw();
  SplitSpec spec;
  spec.total_classes = 10;
  spec.labeled = 5;
  spec.unlabeled = 5;
  const SplitDataset s = split_dataset(raw, spec, 0.2);

  auto key = [&](const double* row) {
    return std::vector<double>(row, row + raw.dim());
  };
  std::multiset<std::vector<double>> raw_rows, split_rows;
  for (std::size_t i = 0; i < raw.size(); ++i) raw_rows.insert(key(raw.x.row_ptr(i)));
  for (std::size_t i = 0; i < s.lab_train.size(); ++i)
    split_rows.insert(key(s.lab_train.x.row_ptr(i)));
  for (std::size_t i = 0; i < s.lab_test.size(); ++i)
    split_rows.insert(key(s.lab_test.x.row_ptr(i)));
  for (std::size_t i = 0; i < s.unlab_train_x.rows(); ++i)
    split_rows.insert(key(s.unlab_train_x.row_ptr(i)));
  for (std::size_t i = 0; i < s.unlab_test.size(); ++i)
    split_rows.insert(key(s.unlab_test.x.row_ptr(i)));
  CHECK(raw_rows == split_rows);
}

TEST_CASE("split validation errors") {
  const RawDataset raw = small_raw();
  SplitSpec bad;
  bad.total_classes = 10;
  bad.labeled = 5;
  bad.unlabeled = 4;
  CHECK_THROWS_AS(split_dataset(raw, bad, 0.2), ConfigError);

  SplitSpec spec;
  spec.total_classes = 10;
  spec.labeled = 5;
  spec.unlabeled = 5;
  CHECK_THROWS_AS(split_dataset(raw, spec, 0.0), ConfigError);
  CHECK_THROWS_AS(split_dataset(raw, spec, 1.0), ConfigError);

  RawDataset tiny;
  tiny.x = Tensor(3, 2, 1.0);
  tiny.y = {0, 0, 1};  // class 1 has a single sample
  SplitSpec two;
  two.total_classes = 2;
  two.labeled = 1;
  two.unlabeled = 1;
  CHECK_THROWS_WITH_AS(split_dataset(tiny, two, 0.5), doctest::Contains("fewer than 2"),
                       Error);
}

TEST_CASE("csv export and import reproduce the dataset exactly") {
  const RawDataset raw = small_raw();
  const std::string path = "data_roundtrip_test.csv";
  save_csv(raw, path);
  {
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "feat_0,feat_1,feat_2,feat_3,label");
  }
  const RawDataset back = load_csv(path);
  CHECK(back.x == raw.x);  // %.17g round trips doubles bit for bit
  CHECK(back.y == raw.y);
  std::remove(path.c_str());
}

TEST_CASE("csv loader reports malformed rows by line number") {
  const std::string path = "data_malformed_test.csv";

  auto write = [&](const std::string& body) {
    std::ofstream out(path);
    out << body;
  };

  write("feat_0,feat_1,label\n1.0,2.0,0\n1.0,1\n");
  CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("line 3"), IoError);

  write("feat_0,feat_1,label\n1.0,2.0,0\n1.0,oops,1\n");
  CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("line 3"), IoError);

  write("feat_0,feat_1,label\n1.0,2.0,0\n1.0,2.0,-4\n");
  CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("line 3"), IoError);

  write("feat_0,feat_1\n1.0,2.0\n");
  CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("label"), IoError);

  write("feat_0,feat_1,label\n0.5,-2.5,3\n7e-2,1e3,0\n");
  const RawDataset ok = load_csv(path);
  CHECK(ok.size() == 2);
  CHECK(ok.dim() == 2);
  CHECK(ok.x(0, 1) == -2.5);
  CHECK(ok.x(1, 0) == 0.07);
  CHECK(ok.y == std::vector<long>{3, 0});

  std::remove(path.c_str());
  CHECK_THROWS_AS(load_csv("data_no_such_file.csv"), IoError);
}
