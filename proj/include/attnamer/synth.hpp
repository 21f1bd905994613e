#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "attnamer/core_types.hpp"
#include "attnamer/knowledge_file.hpp"
#include "attnamer/pipeline.hpp"

namespace attnamer {

struct PopulationSpec {
  std::size_t n_ids = 2;
  std::size_t shots_per_id = 5;
  std::size_t d_face = kDefaultFaceDim;
  std::size_t d_voice = kDefaultVoiceDim;
  // Angular std-dev in radians of the tangent-space perturbation.
  double face_noise = 0.0;
  double voice_noise = 0.0;
  // Held-out stream: matched windows per ID, and non-matched windows per
  // matched window.
  std::size_t queries_per_id = 10;
  std::size_t distractor_ratio = 4;
  // Fraction of non-matched windows whose voice belongs to nobody enrolled.
  // The attention store cannot reject those (the voice half scores every key
  // alike), so the default keeps distractors among enrolled IDs.
  double unknown_voice_fraction = 0.0;
  // Non-matched enrollment shots (face of this ID, voice of another) per
  // matched shot. Rejecting distractors needs such keys.
  std::size_t nonmatched_per_shot = 0;
  // Faces per window; extra faces belong to other enrolled IDs.
  std::size_t faces_per_window = 1;
  // Distinct centroids keep pairwise cosine <= this, per modality.
  double max_centroid_cosine = 0.8;
  std::string label_prefix = "id";
  std::uint64_t seed = 0;
};

struct Centroids {
  std::vector<std::vector<float>> face;   // one unit vector per ID
  std::vector<std::vector<float>> voice;
};

struct Population {
  std::vector<std::string> labels;           // index i is identity i
  std::vector<KnowledgeRecord> enrollment;   // matched shots first per ID
  KnowledgeStore store;                      // enrollment, already enrolled
  WindowStream queries;                      // held out from enrollment
  Centroids centroids;
};

// Throws InvalidSpec. Per-ID randomness derives from (seed, id), so a larger
// population with the same seed extends a smaller one: IDs, centroids and
// matched shots of the first n IDs coincide.
Population generate_population(const PopulationSpec& spec);

// Unit vector near `centroid` at angle about atan(noise): Gaussian in the
// tangent space with per-component std noise/sqrt(d-1), renormalized.
std::vector<float> perturb(std::span<const float> centroid, double noise, std::mt19937_64& rng);

std::vector<float> random_unit(std::size_t dim, std::mt19937_64& rng);

// Independent reference: nearest centroid by cosine, face and voice
// separately, by exhaustive scan. A face whose ID agrees with the voice's ID
// names that ID when both cosines exceed tau_oracle.
std::optional<IdentityIndex> oracle_predict(const Centroids& centroids, const WindowQuery& window,
                                            double tau_oracle);

}  // namespace attnamer
