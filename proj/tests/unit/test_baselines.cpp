#include <cmath>
#include <numeric>
#include <random>

#include "attnamer/baselines.hpp"
#include "attnamer/instrumentation.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace attnamer;

namespace {

// Rows near e_{label}, d = 2 * n_classes, labels offset by `first`.
LabeledSet separable(std::size_t n_classes, std::size_t shots, IdentityIndex first,
                     std::uint64_t seed, std::size_t dim = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 0.05f);
  LabeledSet set;
  if (dim == 0) dim = 2 * (first + n_classes);
  set.features = Matrix(0, dim);
  set.num_classes = first + n_classes;
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t s = 0; s < shots; ++s) {
      std::vector<float> row(dim);
      for (auto& x : row) x = g(rng);
      row[first + c] += 1.0f;
      set.features.append_row(row);
      set.labels.push_back(static_cast<IdentityIndex>(first + c));
    }
  }
  return set;
}

std::size_t argmax(const std::vector<float>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("analytic gradient matches central differences in fp64") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> g(0.0, 0.5);
  const std::size_t k = 4, d = 6, m = 9;
  std::vector<double> w(k * d), b(k), x(m * d);
  for (auto& v : w) v = g(rng);
  for (auto& v : b) v = g(rng);
  for (auto& v : x) v = g(rng);
  std::vector<IdentityIndex> labels(m);
  for (std::size_t i = 0; i < m; ++i) labels[i] = static_cast<IdentityIndex>(i % k);

  std::vector<double> gw(k * d), gb(k), sw(k * d), sb(k);
  softmax_cross_entropy<double>(w, b, x, labels, d, gw, gb);

  std::uniform_int_distribution<std::size_t> coord(0, k * d + k - 1);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t c = coord(rng);
    double& p = c < k * d ? w[c] : b[c - k * d];
    const double analytic = c < k * d ? gw[c] : gb[c - k * d];
    const double saved = p;
    p = saved + h;
    const double up = softmax_cross_entropy<double>(w, b, x, labels, d, sw, sb);
    p = saved - h;
    const double down = softmax_cross_entropy<double>(w, b, x, labels, d, sw, sb);
    p = saved;
    const double numeric = (up - down) / (2 * h);
    const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    CHECK(rel < 1e-4);
  }
}

TEST_CASE("tfs separates orthogonal classes") {
  const LabeledSet data = separable(2, 5, 0, 1);
  const auto steps = counters().gradient_steps.load();
  const auto model = train_tfs(data, {});
  CHECK(counters().gradient_steps.load() - steps == model.epochs);
  CHECK(model.epochs <= 500);
  CHECK(model.loss_history.size() == model.epochs);
  CHECK_FALSE(model.non_convergence);
  const auto probs = predict_baseline(model, data.features);
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(argmax(probs[i]) == data.labels[i]);

  Matrix centroid(1, data.features.cols());
  centroid(0, 1) = 1.0f;
  CHECK(predict_baseline(model, centroid)[0][1] > 0.9f);
}

TEST_CASE("tfs edge cases") {
  SUBCASE("single class") {
    const auto model = train_tfs(separable(1, 3, 0, 2), {});
    std::mt19937_64 rng(3);
    Matrix q(0, 2);
    q.append_row(testing::random_vector(2, rng));
    CHECK(predict_baseline(model, q)[0][0] == doctest::Approx(1.0));
  }
  SUBCASE("missing class") {
    LabeledSet data = separable(2, 3, 0, 2);
    data.num_classes = 3;
    CHECK_THROWS_AS(train_tfs(data, {}), Error);
  }
  SUBCASE("fixed capacity") {
    TrainConfig cfg;
    cfg.capacity = 10;
    const auto model = train_tfs(separable(2, 3, 0, 2), cfg);
    CHECK(model.num_outputs() == 10);
    CHECK(parameter_bytes(model) == (10 * 4 + 10) * 4);
  }
  SUBCASE("deterministic given the seed") {
    TrainConfig cfg;
    cfg.seed = 9;
    cfg.max_epochs = 40;
    const auto a = train_tfs(separable(3, 2, 0, 5), cfg);
    const auto b = train_tfs(separable(3, 2, 0, 5), cfg);
    CHECK(serialize(a) == serialize(b));
  }
}

TEST_CASE("loss tail is non-increasing") {
  const auto model = train_tfs(separable(3, 4, 0, 6), {});
  const auto& h = model.loss_history;
  REQUIRE(h.size() >= 10);
  for (std::size_t i = h.size() - 9; i < h.size(); ++i) CHECK(h[i] <= h[i - 1] + 1e-6);
}

TEST_CASE("predict_baseline contracts") {
  const auto model = train_tfs(separable(2, 3, 0, 7), {});
  CHECK(predict_baseline(model, Matrix(0, 4)).empty());
  CHECK_THROWS_AS(predict_baseline(model, Matrix(1, 5)), Error);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    auto v = testing::random_vector(4, rng);
    const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    for (auto& x : v) x = static_cast<float>(x / n);
    Matrix q(0, 4);
    q.append_row(v);
    const auto p = predict_baseline(model, q)[0];
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("lwf adds frozen branches") {
  const std::size_t dim = 8;
  TrainConfig cfg;
  cfg.hidden = 6;
  const auto base = pretrain_lwf(separable(2, 4, 0, 11, dim), cfg);
  REQUIRE(base.branches.size() == 1);
  CHECK(base.branches[0].ids == std::vector<IdentityIndex>{0, 1});
  const auto frozen_trunk = base.trunk;
  const auto frozen_head = serialize(base.branches[0]);

  const auto grown = train_lwf_increment(base, separable(1, 4, 2, 12, dim), cfg);
  CHECK(grown.num_outputs() == 3);
  CHECK(grown.trunk == frozen_trunk);
  CHECK(serialize(grown.branches[0]) == frozen_head);
  Matrix q(0, dim);
  q.append_row(separable(1, 1, 2, 13, dim).features.row(0));
  CHECK(predict_baseline(grown, q, 3)[0].size() == 3);

  CHECK_THROWS_AS(train_lwf_increment(grown, separable(1, 2, 1, 14, dim), cfg), Error);
  CHECK_THROWS_AS(train_lwf_increment(grown, separable(1, 2, 3, 14, 5), cfg), Error);
}

TEST_CASE("disjoint increments commute branch by branch") {
  const std::size_t dim = 10;
  TrainConfig cfg;
  cfg.hidden = 4;
  const auto trunk = pretrain_lwf(separable(2, 3, 0, 1, dim), cfg).trunk_only();
  const auto first = separable(2, 3, 0, 2, dim);
  const auto second = separable(2, 3, 2, 3, dim);
  const auto ab = train_lwf_increment(train_lwf_increment(trunk, first, cfg), second, cfg);
  const auto ba = train_lwf_increment(train_lwf_increment(trunk, second, cfg), first, cfg);
  CHECK(serialize(ab.branches[0]) == serialize(ba.branches[1]));
  CHECK(serialize(ab.branches[1]) == serialize(ba.branches[0]));
}

TEST_CASE("checkpoints round-trip") {
  TrainConfig cfg;
  cfg.max_epochs = 30;
  cfg.hidden = 3;
  const auto tfs = train_tfs(separable(2, 2, 0, 4), cfg);
  const auto bytes = serialize(tfs);
  CHECK(bytes.size() == 4 + 4 * 4 + parameter_bytes(tfs));
  const auto back = deserialize_linear(bytes);
  CHECK(back.weights == tfs.weights);
  CHECK(back.bias == tfs.bias);
  CHECK(serialize(back) == bytes);

  const auto lwf = train_lwf_increment(pretrain_lwf(separable(2, 2, 0, 4, 6), cfg),
                                       separable(1, 2, 2, 5, 6), cfg);
  const auto lb = serialize(lwf);
  CHECK(serialize(deserialize_branched(lb)) == lb);

  auto truncated = lb;
  truncated.pop_back();
  CHECK_THROWS_AS(deserialize_branched(truncated), Error);
  CHECK_THROWS_AS(deserialize_linear(lb), Error);
}

}  // TEST_SUITE
