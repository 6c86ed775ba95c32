#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "saae/error.hpp"
#include "saae/evaluation.hpp"
#include "saae/network.hpp"
#include "support.hpp"

using namespace saae;
using namespace saae::evaluation;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("saae_eval_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST_CASE("metrics on a small example") {
  const std::vector<int> labels{1, 1, 2, 2};
  const std::vector<int> preds{1, 1, 1, 1};
  const auto m = metrics(preds, labels, 2);
  CHECK(m.accuracy == doctest::Approx(0.5));
  CHECK(m.precision == doctest::Approx(0.25));  // (0.5 + 0) / 2
  CHECK(m.f1 == doctest::Approx((2.0 * 0.5 * 1.0 / 1.5 + 0.0) / 2.0));
  CHECK(m.samples == 4);
  CHECK_FALSE(m.degenerate);

  const auto perfect = metrics(labels, labels, 2);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.f1 == 1.0);
}

TEST_CASE("a single true class is flagged degenerate") {
  const std::vector<int> labels{3, 3, 3};
  const std::vector<int> preds{3, 1, 3};
  const auto m = metrics(preds, labels, 3);
  CHECK(m.degenerate);
  CHECK(m.accuracy == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("metrics reject bad input") {
  const std::vector<int> a{1, 2}, b{1};
  CHECK_THROWS_AS(metrics(a, b, 2), Error);
  const std::vector<int> out_of_range{1, 3};
  CHECK_THROWS_AS(metrics(out_of_range, a, 2), Error);
  CHECK_THROWS_AS(metrics(std::vector<int>{}, std::vector<int>{}, 2), Error);
}

TEST_CASE("metrics are invariant to sample order and class relabeling") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> cls(1, 5);
  std::vector<int> labels(200), preds(200);
  for (int i = 0; i < 200; ++i) {
    labels[i] = cls(rng);
    preds[i] = rng() % 3 == 0 ? cls(rng) : labels[i];
  }
  const auto base = metrics(preds, labels, 5);

  std::vector<int> order(200);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> pl(200), pp(200);
  for (int i = 0; i < 200; ++i) {
    pl[i] = labels[order[i]];
    pp[i] = preds[order[i]];
  }
  const auto shuffled = metrics(pp, pl, 5);
  CHECK(shuffled.accuracy == doctest::Approx(base.accuracy));
  CHECK(shuffled.precision == doctest::Approx(base.precision));
  CHECK(shuffled.f1 == doctest::Approx(base.f1));

  const std::vector<int> perm{0, 4, 1, 5, 3, 2};
  for (int i = 0; i < 200; ++i) {
    pl[i] = perm[labels[i]];
    pp[i] = perm[preds[i]];
  }
  const auto relabeled = metrics(pp, pl, 5);
  CHECK(relabeled.accuracy == doctest::Approx(base.accuracy));
  CHECK(relabeled.precision == doctest::Approx(base.precision));
  CHECK(relabeled.f1 == doctest::Approx(base.f1));
  CHECK(base.accuracy >= 0.0);
  CHECK(base.f1 <= 1.0);
}

TEST_CASE("confusion matrix rows are true classes") {
  const std::vector<int> labels{1, 1, 2, 3, 3, 3};
  const std::vector<int> preds{1, 2, 2, 3, 1, 3};
  const auto cm = confusion_matrix(preds, labels, 3);
  CHECK(cm(0, 0) == 1);
  CHECK(cm(0, 1) == 1);
  CHECK(cm(2, 0) == 1);
  CHECK(cm(2, 2) == 2);
  CHECK(cm.sum() == 6);
  CHECK(cm.rowwise().sum()(2) == 3);
  CHECK(static_cast<double>(cm.trace()) / 6.0 == doctest::Approx(metrics(preds, labels, 3).accuracy));
}

TEST_CASE("fold aggregation and report formatting") {
  std::vector<FoldReport> folds(2);
  folds[0].subject = 1;
  folds[0].metrics = {1.0, 0.9, 0.95, 10, false};
  folds[1].subject = 2;
  folds[1].metrics = {0.9, 0.7, 0.85, 12, false};
  const auto agg = aggregate(folds);
  CHECK(agg.accuracy.mean == doctest::Approx(0.95));
  CHECK(agg.accuracy.stddev == doctest::Approx(0.05));
  CHECK(format_summary(agg.accuracy) == "0.950(0.050)");
  CHECK(format_summary(agg.precision) == "0.800(0.100)");

  const std::string csv = report_csv(folds);
  CHECK(csv.rfind("subject,accuracy,precision,f1,samples,degenerate\n", 0) == 0);
  CHECK(csv.find("\n1,") != std::string::npos);
  CHECK(csv.find("0.950(0.050)") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(report_table(folds).find("0.900(0.050)") != std::string::npos);
  CHECK_THROWS_AS(aggregate(std::vector<FoldReport>{}), Error);
}

TEST_CASE("moving average") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(moving_average(x, 1) == x);
  const auto s = moving_average(x, 2);
  CHECK(s == std::vector<double>{1.0, 1.5, 2.5, 3.5, 4.5});
  const std::vector<double> flat(30, 2.5);
  for (double v : moving_average(flat, 7)) CHECK(v == doctest::Approx(2.5));
  CHECK_THROWS_AS(moving_average(x, 0), Error);
}

TEST_CASE("curves come out of the training history") {
  training::TrainHistory h(5);
  for (int i = 0; i < 5; ++i) {
    h[i].iteration = i;
    h[i].loss_rec = 10.0 - i;
    h[i].loss_spectrum = 2.0;
    h[i].disc_accuracy = 0.1 * i;
  }
  const std::vector<std::string> keys{"L_rec", "L_S", "disc_acc"};
  const auto curves = curve_extract(h, keys, 1);
  REQUIRE(curves.size() == 3);
  CHECK(curves[0].key == "L_rec");
  CHECK(curves[0].raw == curves[0].smoothed);
  CHECK(curves[0].raw.back() == 6.0);
  const auto smoothed = curve_extract(h, keys, 3);
  for (double v : smoothed[1].smoothed) CHECK(v == 2.0);
  CHECK(curves[2].raw[3] == doctest::Approx(0.3));
  const std::vector<std::string> bad{"L_nope"};
  CHECK_THROWS_AS(curve_extract(h, bad, 1), Error);
  CHECK(curve_keys().size() == 6);
}

TEST_CASE("embedding export") {
  std::mt19937_64 rng(5);
  auto model = network::build_model(8, 2, 2, 11, network::Architecture::toy());
  std::vector<SignalWindow> ws;
  for (int i = 0; i < 300; ++i) ws.push_back(test::random_window(rng, 8, 2, 1 + i % 3, 1 + i % 2));
  const auto a = temp_file("a.txt"), b = temp_file("b.txt");
  export_embeddings(model, ws, a);
  export_embeddings(model, ws, b);
  const std::string text = slurp(a);
  CHECK(text == slurp(b));

  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("# subject label g1", 0) == 0);
  const int dim = model.meta().latent_dim;
  int rows = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::vector<double> v;
    double x;
    while (fields >> x) v.push_back(x);
    CHECK(static_cast<int>(v.size()) == dim + 2);
    if (rows == 4) {
      CHECK(v[0] == 2.0);
      CHECK(v[1] == 1.0);
      const auto gamma = network::encode_pure(model, std::span(ws).subspan(4, 1));
      CHECK(v[2] == gamma(0, 0));
    }
    ++rows;
  }
  CHECK(rows == 300);
  fs::remove(a);
  fs::remove(b);
}
