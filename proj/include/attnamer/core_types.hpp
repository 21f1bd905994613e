#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "attnamer/error.hpp"
#include "attnamer/matrix.hpp"

namespace attnamer {

enum class Modality { Face, Voice };

std::string_view to_string(Modality m);

inline constexpr std::size_t kDefaultFaceDim = 512;
inline constexpr std::size_t kDefaultVoiceDim = 512;
inline constexpr double kDefaultBaseWindow = 0.5;

// Returns `raw` scaled to unit L2 norm. Vectors already within 1e-6 of unit
// norm are returned unchanged, which keeps file round-trips bit-exact.
// Throws ZeroVector (norm < 1e-12), DimensionMismatch, or NonFinite.
std::vector<float> normalize_embedding(std::span<const float> raw, std::size_t expected_dim,
                                       Modality modality);

// A unit-norm embedding of one modality.
class ModalEmbedding {
 public:
  ModalEmbedding() = default;
  ModalEmbedding(std::span<const float> raw, std::size_t expected_dim, Modality modality)
      : values_(normalize_embedding(raw, expected_dim, modality)), modality_(modality) {}

  std::span<const float> values() const noexcept { return values_; }
  std::size_t dim() const noexcept { return values_.size(); }
  Modality modality() const noexcept { return modality_; }

  friend bool operator==(const ModalEmbedding&, const ModalEmbedding&) = default;

 private:
  std::vector<float> values_;
  Modality modality_ = Modality::Face;
};

using IdentityIndex = std::uint32_t;

struct Identity {
  std::string label;
  IdentityIndex index = 0;

  friend bool operator==(const Identity&, const Identity&) = default;
};

// Label -> dense index map. Indices are assigned in registration order and
// never reused.
class IdentityRegistry {
 public:
  Identity register_identity(std::string_view label);
  std::optional<Identity> find(std::string_view label) const;
  const std::string& label(IdentityIndex index) const { return labels_.at(index); }
  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  friend bool operator==(const IdentityRegistry& a, const IdentityRegistry& b) {
    return a.labels_ == b.labels_;
  }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, IdentityIndex> index_;
};

// Sparse column of V: one face-ID and one voice-ID index per shot.
struct ShotLabel {
  IdentityIndex face = 0;
  IdentityIndex voice = 0;

  bool matched() const noexcept { return face == voice; }
  friend bool operator==(const ShotLabel&, const ShotLabel&) = default;
};

struct PairEmbedding {
  ModalEmbedding face;
  ModalEmbedding voice;
  IdentityIndex face_id = 0;
  IdentityIndex voice_id = 0;

  bool matched() const noexcept { return face_id == voice_id; }
};

struct StoreConfig {
  std::size_t d_face = kDefaultFaceDim;
  std::size_t d_voice = kDefaultVoiceDim;
  // Unknown labels passed to enroll_shot are registered on the fly.
  bool auto_register = true;

  std::size_t d_key() const noexcept { return d_face + d_voice; }
  friend bool operator==(const StoreConfig&, const StoreConfig&) = default;
};

// Prior knowledge for the attention module: keys K (one concatenated
// face+voice row per enrolled shot) and the sparse one-hot labels behind V.
class KnowledgeStore {
 public:
  KnowledgeStore() : KnowledgeStore(StoreConfig{}) {}
  explicit KnowledgeStore(StoreConfig config);

  const StoreConfig& config() const noexcept { return config_; }
  std::size_t d_face() const noexcept { return config_.d_face; }
  std::size_t d_voice() const noexcept { return config_.d_voice; }
  std::size_t d_key() const noexcept { return config_.d_key(); }

  Identity register_identity(std::string_view label);

  // Normalizes both halves, appends the concatenated key and its label.
  // Returns the new shot index. A fixed-size copy; no iteration over the
  // existing shots.
  std::size_t enroll_shot(std::span<const float> face, std::span<const float> voice,
                          std::string_view face_label, std::string_view voice_label);

  // Already-normalized variant used by the generators and the file loader.
  std::size_t enroll_pair(const PairEmbedding& pair);

  std::size_t num_ids() const noexcept { return registry_.size(); }
  std::size_t num_shots() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }

  const IdentityRegistry& registry() const noexcept { return registry_; }

  // M x d_key, row m is the key of shot m (so this is K transposed).
  const Matrix& keys() const noexcept { return keys_; }
  std::span<const float> key(std::size_t shot) const { return keys_.row(shot); }
  std::span<const float> face_half(std::size_t shot) const {
    return key(shot).first(config_.d_face);
  }
  std::span<const float> voice_half(std::size_t shot) const {
    return key(shot).subspan(config_.d_face);
  }
  const std::vector<ShotLabel>& labels() const noexcept { return labels_; }

  // Dense 2N x M stacked one-hot V: rows [0, N) face IDs, rows [N, 2N) voice IDs.
  Matrix materialize_values() const;

  // Shot count per identity index, counting a shot once for each distinct
  // label it carries.
  std::vector<std::size_t> shots_per_identity() const;

  friend bool operator==(const KnowledgeStore&, const KnowledgeStore&) = default;

 private:
  IdentityIndex resolve(std::string_view label);

  StoreConfig config_;
  IdentityRegistry registry_;
  Matrix keys_;
  std::vector<ShotLabel> labels_;
};

// Bytes held by the store's parameters: dense f32 keys plus two u32 label
// indices per shot.
std::size_t parameter_count(const KnowledgeStore& store);

inline double bytes_to_kb(std::size_t bytes) { return static_cast<double>(bytes) / 1024.0; }

// One base time window of a video: the J_t faces seen in its representative
// frame and the single voice embedding of its audio.
struct WindowQuery {
  std::int64_t window_index = 0;
  double t_start = 0.0;
  double t_end = kDefaultBaseWindow;
  std::vector<ModalEmbedding> faces;
  ModalEmbedding voice;
  // Label of the active speaker; nullopt marks a no-speaker/distractor window.
  std::optional<std::string> ground_truth;

  std::size_t num_faces() const noexcept { return faces.size(); }
};

// Snapshot holder: readers take an immutable store, the single writer
// publishes a new one. Enrollments are visible to snapshots taken after the
// update returns.
class SharedKnowledge {
 public:
  explicit SharedKnowledge(KnowledgeStore initial)
      : current_(std::make_shared<const KnowledgeStore>(std::move(initial))) {}

  std::shared_ptr<const KnowledgeStore> snapshot() const {
    std::lock_guard lock(mutex_);
    return current_;
  }

  template <typename Fn>
  void update(Fn&& mutate) {
    std::lock_guard writer(writer_mutex_);
    auto next = std::make_shared<KnowledgeStore>(*snapshot());
    mutate(*next);
    std::lock_guard lock(mutex_);
    current_ = std::move(next);
  }

 private:
  mutable std::mutex mutex_;
  std::mutex writer_mutex_;
  std::shared_ptr<const KnowledgeStore> current_;
};

}  // namespace attnamer
