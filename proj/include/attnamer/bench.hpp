#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "attnamer/baselines.hpp"
#include "attnamer/metrics.hpp"

namespace attnamer {

// IDs 5..50 step 5, then 100..500 step 50; shots {5, 50}.
std::vector<std::size_t> default_grid_ids();
std::vector<std::size_t> default_grid_shots();

struct BenchSpec {
  std::vector<std::size_t> grid_ids = default_grid_ids();
  std::vector<std::size_t> grid_shots = default_grid_shots();
  std::vector<Method> methods = {Method::Att, Method::Tfs, Method::Lwf};
  // Smaller than the CLI defaults so the full grid fits a desk budget. At
  // noise 2.0 (about 63 degrees) the few-shot cells are not saturated.
  std::size_t d_face = 128;
  std::size_t d_voice = 128;
  double noise = 2.0;
  std::size_t queries_per_id = 10;
  TrainConfig train;
  // LwF trunk is pretrained on a separate population of this many IDs.
  std::size_t lwf_base_ids = 10;
  std::size_t repetitions = 3;
  std::uint64_t seed = 0;
};

struct BenchRow {
  Method method = Method::Att;
  std::size_t n_ids = 0;
  std::size_t shots = 0;
  std::size_t d_key = 0;
  std::optional<double> mpa;
  double params_kb = 0.0;
  // LwF: this increment only. Cumulative adds pretraining and earlier stages.
  double setup_time_s = 0.0;
  double setup_time_cumulative_s = 0.0;
  std::optional<std::size_t> epochs;
  std::string status = "ok";  // ok | non_convergence | error: <message>

  bool failed() const { return status.rfind("error", 0) == 0; }
};

std::string_view bench_csv_header();
std::string format_bench_row(const BenchRow& row);

// Runs every (shots, N, method) cell; cells are timed, so they run one at a
// time. mpA is closed-set (tau = 0) on matched held-out windows. `on_row`
// sees each row as soon as it is finished. A failing cell yields an error
// row and the grid continues.
std::vector<BenchRow> run_bench(const BenchSpec& spec,
                                const std::function<void(const BenchRow&)>& on_row = {});

}  // namespace attnamer
