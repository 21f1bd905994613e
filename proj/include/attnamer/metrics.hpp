#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attnamer/baselines.hpp"
#include "attnamer/core_types.hpp"
#include "attnamer/knowledge_file.hpp"
#include "attnamer/pipeline.hpp"

namespace attnamer {

// Percentage of positions where prediction equals ground truth. Callers pass
// matched-pair queries only. Throws LengthMismatch, EmptyInput.
double mpa(std::span<const IdentityIndex> predictions, std::span<const IdentityIndex> ground_truth);

// Same count over labels that may be no-speaker; a correct rejection counts.
double sna(std::span<const SpeakerLabel> predictions, std::span<const SpeakerLabel> ground_truth);

struct StreamScores {
  // nullopt when the stream has no scorable matched window.
  std::optional<double> mpa;
  double sna = 0.0;
  std::size_t windows = 0;
  std::size_t matched_windows = 0;
  std::size_t spans = 0;
};

// mpa: closed-set over windows whose ground truth is a registered identity
// and which show at least one face, comparing the pre-threshold best ID.
// sna: over spans of `factor` windows, both sides reduced by majority vote.
StreamScores score_stream(std::span<const PredictionRecord> records, const WindowStream& stream,
                          const IdentityRegistry& registry, std::size_t factor);

enum class Method { Att, Tfs, Lwf };
std::string_view to_string(Method m);
std::optional<Method> parse_method(std::string_view text);

struct EvalReport {
  Method method = Method::Att;
  std::optional<double> mpa;
  double sna = 0.0;
  double params_kb = 0.0;
  double setup_time_s = 0.0;
  // LwF: all stages including pretraining. Equals setup_time_s otherwise.
  double setup_time_cumulative_s = 0.0;
  std::size_t n_ids = 0;
  std::size_t shots = 0;  // enrolled shots (M)
  std::size_t d_key = 0;
  float tau = 0.0f;
  std::size_t factor = 1;
  std::size_t windows = 0;
  std::size_t matched_windows = 0;
  std::size_t spans = 0;
  std::optional<std::size_t> epochs;  // gradient baselines only
  bool non_convergence = false;
};

std::string to_json(const EvalReport& report);
// Columns of csv_row, comma-separated, no trailing newline.
std::string_view eval_csv_header();
std::string csv_row(const EvalReport& report);

// Median wall-clock seconds of max(reps, 3) calls to `fn` (steady clock).
double median_seconds(const std::function<void()>& fn, std::size_t reps = 3);

struct SetupContext {
  StoreConfig store;
  TrainConfig train;
  // LwF: a model without a trunk is pretrained on [lwf_first, lwf_last);
  // otherwise a head for those IDs is added on top of it. lwf_last == 0
  // means every enrolled ID.
  BranchedModel lwf_base;
  IdentityIndex lwf_first = 0;
  IdentityIndex lwf_last = 0;
  std::size_t repetitions = 3;
};

struct SetupOutcome {
  double seconds = 0.0;  // median over repetitions
  KnowledgeStore store;
  std::optional<LinearSoftmaxModel> tfs;
  std::optional<BranchedModel> lwf;
  std::size_t epochs = 0;
  bool non_convergence = false;
};

// Times what makes a method ready to predict. att: copy the records into
// K/V. tfs: the same plus the training loop. lwf: the same plus training of
// one stage. Results of the last repetition are returned.
SetupOutcome measure_setup(Method method, std::span<const KnowledgeRecord> records,
                           const SetupContext& context);
// Inclusive accounting: reading and parsing the file is inside the timer.
SetupOutcome measure_setup(Method method, const std::filesystem::path& knowledge,
                           const SetupContext& context);

// A WindowPredictor for a trained baseline: each face pair gets the model's
// ID distribution as its score vector, then the shared decision rule runs.
WindowPredictor baseline_predictor(const LinearSoftmaxModel& model, const KnowledgeStore& store,
                                   float tau);
WindowPredictor baseline_predictor(const BranchedModel& model, const KnowledgeStore& store,
                                   float tau);

}  // namespace attnamer
