#include <algorithm>
#include <numeric>
#include <random>

#include "attnamer/instrumentation.hpp"
#include "attnamer/metrics.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"

using namespace attnamer;
using testing::axis;

namespace {

constexpr IdentityIndex A = 0;
constexpr IdentityIndex B = 1;
const SpeakerLabel none = std::nullopt;

std::vector<KnowledgeRecord> basis_records(std::size_t n_ids, std::size_t shots) {
  std::vector<KnowledgeRecord> out;
  for (std::size_t i = 0; i < n_ids; ++i) {
    for (std::size_t s = 0; s < shots; ++s) {
      const std::string l = "id" + std::to_string(i);
      out.push_back({l, l, axis(n_ids, i), axis(n_ids, i), 0});
    }
  }
  return out;
}

std::size_t count_fields(const std::string& line) {
  return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("mpa counts exact matches") {
  CHECK(mpa(std::vector<IdentityIndex>{A, B, B, B}, std::vector<IdentityIndex>{A, A, B, B}) == 75.0);
  CHECK(mpa(std::vector<IdentityIndex>{A, B}, std::vector<IdentityIndex>{A, B}) == 100.0);
  CHECK(mpa(std::vector<IdentityIndex>{A, A}, std::vector<IdentityIndex>{B, B}) == 0.0);
  CHECK_THROWS_AS(mpa(std::vector<IdentityIndex>{A}, std::vector<IdentityIndex>{A, B}), Error);
  CHECK_THROWS_AS(mpa(std::vector<IdentityIndex>{}, std::vector<IdentityIndex>{}), Error);
}

TEST_CASE("sna counts correct rejections") {
  CHECK(sna(std::vector<SpeakerLabel>{A, none, B}, std::vector<SpeakerLabel>{A, none, A}) ==
        doctest::Approx(66.67).epsilon(1e-4));
  CHECK(sna(std::vector<SpeakerLabel>{none, none}, std::vector<SpeakerLabel>{none, none}) == 100.0);
  CHECK(sna(std::vector<SpeakerLabel>{A}, std::vector<SpeakerLabel>{none}) == 0.0);
  try {
    sna(std::vector<SpeakerLabel>{A}, std::vector<SpeakerLabel>{});
    FAIL("expected LengthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
}

TEST_CASE("metrics are permutation-equivariant and agree without rejections") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<IdentityIndex> id(0, 4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<IdentityIndex> p(1 + trial % 17);
    std::vector<IdentityIndex> g(p.size());
    for (auto& x : p) x = id(rng);
    for (auto& x : g) x = id(rng);
    const double base = mpa(p, g);
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<IdentityIndex> pp;
    std::vector<IdentityIndex> gg;
    for (auto i : order) {
      pp.push_back(p[i]);
      gg.push_back(g[i]);
    }
    CHECK(mpa(pp, gg) == base);
    const std::vector<SpeakerLabel> sp(p.begin(), p.end());
    const std::vector<SpeakerLabel> sg(g.begin(), g.end());
    CHECK(sna(sp, sg) == base);
  }
}

TEST_CASE("score_stream uses the closed-set best ID for mpa") {
  const KnowledgeStore store = testing::basis_store(2, 2);
  WindowStream s;
  auto matched = testing::window({axis(2, 0)}, axis(2, 0), 0);
  matched.ground_truth = "A";
  auto distractor = testing::window({axis(2, 0)}, axis(2, 1), 1);
  auto stranger = testing::window({axis(2, 1)}, axis(2, 1), 2);
  stranger.ground_truth = "nobody";
  s.windows = {matched, distractor, stranger};
  const auto records = run_stream(store, s, 0.9f);
  const auto scores = score_stream(records, s, store.registry(), 1);
  CHECK(scores.matched_windows == 1);
  REQUIRE(scores.mpa);
  CHECK(*scores.mpa == 100.0);
  CHECK(scores.windows == 3);
  // Window 0 named A at 0.96; the crossed window is rejected; window 2
  // names B although nobody enrolled speaks.
  CHECK(scores.sna == doctest::Approx(200.0 / 3.0));
  const auto one_span = score_stream(records, s, store.registry(), 3);
  CHECK(one_span.spans == 1);
}

TEST_CASE("report serializations carry the config echo") {
  EvalReport r;
  r.method = Method::Tfs;
  r.mpa = 87.5;
  r.sna = 50.0;
  r.n_ids = 3;
  r.shots = 15;
  r.d_key = 8;
  r.tau = 0.25f;
  r.factor = 2;
  r.epochs = 120;
  const auto j = nlohmann::json::parse(to_json(r));
  CHECK(j["method"] == "tfs");
  CHECK(j["mpa"] == 87.5);
  CHECK(j["config"]["factor"] == 2);
  CHECK(j["epochs"] == 120);
  CHECK(count_fields(std::string(eval_csv_header())) == count_fields(csv_row(r)));

  EvalReport att;
  const auto ja = nlohmann::json::parse(to_json(att));
  CHECK(ja["mpa"].is_null());
  CHECK_FALSE(ja.contains("epochs"));
  CHECK(count_fields(std::string(eval_csv_header())) == count_fields(csv_row(att)));
}

TEST_CASE("median_seconds runs at least three repetitions") {
  int calls = 0;
  const double t = median_seconds([&] { ++calls; }, 1);
  CHECK(calls == 3);
  CHECK(t >= 0.0);
}

TEST_CASE("attention setup is epoch-free") {
  SetupContext ctx;
  ctx.store = StoreConfig{3, 3, true};
  const auto records = basis_records(3, 2);
  const auto steps = counters().gradient_steps.load();
  const auto out = measure_setup(Method::Att, records, ctx);
  CHECK(counters().gradient_steps.load() == steps);
  CHECK(out.seconds > 0.0);
  CHECK(out.store.num_shots() == 6);
  CHECK(out.epochs == 0);
}

TEST_CASE("baseline setups train through the same records") {
  SetupContext ctx;
  ctx.store = StoreConfig{3, 3, true};
  const auto records = basis_records(3, 2);
  const auto tfs = measure_setup(Method::Tfs, records, ctx);
  REQUIRE(tfs.tfs);
  CHECK(tfs.epochs > 0);
  CHECK(tfs.seconds > 0.0);

  const auto lwf = measure_setup(Method::Lwf, records, ctx);
  REQUIRE(lwf.lwf);
  CHECK(lwf.lwf->branches.size() == 1);

  WindowStream s;
  for (std::size_t i = 0; i < 3; ++i) {
    auto w = testing::window({axis(3, i)}, axis(3, i), static_cast<std::int64_t>(i));
    w.ground_truth = "id" + std::to_string(i);
    s.windows.push_back(w);
  }
  const auto rec = run_stream(baseline_predictor(*tfs.tfs, tfs.store, 0.0f), s);
  const auto scores = score_stream(rec, s, tfs.store.registry(), 1);
  CHECK(*scores.mpa == 100.0);
}

}  // TEST_SUITE
