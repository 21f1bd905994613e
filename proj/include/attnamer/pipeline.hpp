#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnamer/attention.hpp"
#include "attnamer/core_types.hpp"

namespace attnamer {

// Ordered base windows of one video. Indices strictly increase and windows
// do not overlap.
struct WindowStream {
  double base_window = kDefaultBaseWindow;
  std::vector<WindowQuery> windows;
};

// Manifest line:
//   {"window": <int>, "t_start": <sec>, "faces": [[f32...], ...], "voice": [f32...], "gt": "<label>" | null}
// Embeddings are normalized per modality on load. Errors: ParseError (with
// line), DimensionMismatch.
WindowStream parse_manifest(std::istream& in, std::size_t d_face, std::size_t d_voice,
                            double base_window = kDefaultBaseWindow);
WindowStream load_manifest(const std::filesystem::path& path, std::size_t d_face,
                           std::size_t d_voice, double base_window = kDefaultBaseWindow);

std::string format_manifest_line(const WindowQuery& window);
void write_manifest(std::ostream& out, const WindowStream& stream);
void save_manifest_atomic(const std::filesystem::path& path, const WindowStream& stream);

// nullopt is "no-speaker".
using SpeakerLabel = std::optional<IdentityIndex>;

// Labels unknown to the registry resolve to no-speaker: nobody the system
// can name is speaking, so rejection is the correct answer.
SpeakerLabel resolve_ground_truth(const WindowQuery& window, const IdentityRegistry& registry);

using WindowPredictor = std::function<PredictionRecord(const WindowQuery&)>;

// One record per window, in stream order regardless of `jobs`.
std::vector<PredictionRecord> run_stream(const WindowPredictor& predict,
                                         const WindowStream& stream, std::size_t jobs = 1);

// Attention method over a store snapshot. Throws EmptyStore.
std::vector<PredictionRecord> run_stream(const KnowledgeStore& store, const WindowStream& stream,
                                         float tau = kDefaultThreshold, std::size_t jobs = 1,
                                         const AttentionOptions& options = {});

struct Vote {
  SpeakerLabel label;
  std::size_t count = 0;
  double confidence_sum = 0.0;
};

struct AggregatedPrediction {
  double t_start = 0.0;
  double t_end = 0.0;
  std::int64_t first_window = 0;
  std::int64_t last_window = 0;
  std::size_t group_size = 0;
  std::vector<Vote> votes;
  SpeakerLabel winner;
};

// Majority vote over a group. Ties go to the larger summed confidence, then
// to the lowest ID index, with no-speaker ranked after every ID.
SpeakerLabel vote_winner(std::span<const Vote> votes);

// Consecutive groups of `factor` records vote; no-speaker is a vote like any
// other, and a trailing partial group votes among its members. When
// `windows` is given (same length as records) spans carry its times,
// otherwise spans are index * base_window.
std::vector<AggregatedPrediction> aggregate(std::span<const PredictionRecord> records,
                                            std::size_t factor,
                                            std::span<const WindowQuery> windows = {},
                                            double base_window = kDefaultBaseWindow);

// The same grouping applied to ground-truth labels, each with weight 1.
std::vector<SpeakerLabel> aggregate_labels(std::span<const SpeakerLabel> labels,
                                           std::size_t factor);

}  // namespace attnamer
