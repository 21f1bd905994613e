#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "attnamer/bench.hpp"
#include "attnamer/metrics.hpp"

namespace attnamer {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitParse = 2;
inline constexpr int kExitEmptyStore = 3;
inline constexpr int kExitBenchCell = 4;

struct RunConfig {
  std::string subcommand;
  std::filesystem::path knowledge;
  std::filesystem::path manifest;
  std::filesystem::path additions;  // enroll
  std::optional<std::filesystem::path> csv;
  float tau = kDefaultThreshold;
  std::size_t factor = 1;
  std::vector<Method> methods = {Method::Att};
  std::vector<std::size_t> grid_ids = default_grid_ids();
  std::vector<std::size_t> grid_shots = default_grid_shots();
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  // Setup timer includes reading the knowledge file.
  bool inclusive_setup = true;
  // LwF in eval: the first `lwf_step` IDs pretrain the trunk, later IDs
  // arrive in increments of this size.
  std::size_t lwf_step = 5;
  std::size_t repetitions = 3;
  // synth and bench populations.
  std::size_t n_ids = 2;
  std::size_t shots = 5;
  std::size_t d_face = kDefaultFaceDim;
  std::size_t d_voice = kDefaultVoiceDim;
  double noise = 0.0;
  std::size_t nonmatched = 4;
  std::size_t distractors = 4;
  std::size_t queries = 10;
  std::size_t faces_per_window = 1;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

std::string to_json(const RunConfig& config);
// Throws ParseError.
RunConfig run_config_from_json(const std::string& text);

// Each returns an exit code; diagnostics go to `err`.
int cmd_enroll(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_predict(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_eval(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_bench(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_synth(const RunConfig& config, std::ostream& out, std::ostream& err);

// Parses argv and dispatches. ATTNAMER_SEED is used when --seed is absent.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace attnamer
