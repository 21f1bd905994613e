#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "attnamer/core_types.hpp"
#include "attnamer/matrix.hpp"

namespace attnamer {

inline constexpr float kDefaultThreshold = 0.25f;

// How the face and voice halves are combined before the inner product.
// PerModality keeps each half unit-norm, so q.k = cos_face + cos_voice.
// Concatenated treats the 2-part pair as one unit vector (q.k halved).
enum class PairNormalization { PerModality, Concatenated };

struct AttentionOptions {
  // Defaults to sqrt(d_key) of the store.
  std::optional<float> scale_factor;
  PairNormalization pair_normalization = PairNormalization::PerModality;
};

float default_scale_factor(std::size_t d_key);

// Query pairs of one window, one row per face: row j = concat(face_j, voice).
// This is Q transposed (J_t x d_key). Zero faces gives a 0 x d_key matrix.
Matrix build_query(const WindowQuery& window, std::size_t d_face, std::size_t d_voice);

// Row-stochastic J_t x M matrix A = softmax(sf * Q^T K), rows over keys.
struct AttentionMap {
  Matrix values;
  float scale_factor = 1.0f;
};

// `queries` is J x d_key, `keys` is M x d_key. `similarity_scale` multiplies
// the raw inner products before sf (0.5 for concatenated normalization).
AttentionMap attention_map(const Matrix& queries, const Matrix& keys, float scale_factor,
                           float similarity_scale = 1.0f);

// C = V A^T, 2N x J_t. Rows [0, N) are face-ID distributions, [N, 2N) voice.
struct ContextMatrix {
  std::size_t num_ids = 0;
  Matrix values;

  std::size_t num_pairs() const noexcept { return values.cols(); }
  float face(std::size_t id, std::size_t pair) const { return values(id, pair); }
  float voice(std::size_t id, std::size_t pair) const { return values(num_ids + id, pair); }
};

// Sparse route: sums attention mass per label without materializing V.
ContextMatrix context(std::span<const ShotLabel> labels, std::size_t num_ids,
                      const AttentionMap& attention);

// Dense route over an explicit 2N x M stacked one-hot matrix.
ContextMatrix context(const Matrix& values, const AttentionMap& attention);

// Hadamard product of pair p's face and voice distributions (length N).
std::vector<float> pair_confidence(const ContextMatrix& c, std::size_t pair);

// Index of the maximum; the lowest index wins among exact ties. 0 for an
// empty vector.
std::size_t tie_break(std::span<const float> scores);

struct PairConfidence {
  std::size_t pair = 0;
  std::vector<float> scores;
};

struct PredictionRecord {
  std::int64_t window_index = 0;
  // nullopt is "no-speaker".
  std::optional<IdentityIndex> speaker;
  float confidence = 0.0f;
  // Winning ID before thresholding; nullopt only when the window has no faces.
  std::optional<IdentityIndex> best_id;
  std::vector<PairConfidence> per_pair;
};

// Scans pairs in order keeping the running maximum confidence. A later pair
// that equals the running maximum takes over the speaker slot, matching the
// reference loop. The speaker is named only if confidence >= tau.
PredictionRecord decide_speaker(std::int64_t window_index, std::vector<PairConfidence> per_pair,
                                float tau);

// Full per-window inference: Q, A, C, c_p, decision. Throws EmptyStore.
PredictionRecord predict_window(const KnowledgeStore& store, const WindowQuery& window,
                                float tau = kDefaultThreshold,
                                const AttentionOptions& options = {});

}  // namespace attnamer
