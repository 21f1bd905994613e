#include "attnamer/core_types.hpp"

#include <cmath>

#include "attnamer/instrumentation.hpp"

namespace attnamer {

Counters& counters() {
  static Counters instance;
  return instance;
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::UnknownIdentity: return "UnknownIdentity";
    case ErrorCode::EmptyStore: return "EmptyStore";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::OverlappingIds: return "OverlappingIds";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

std::string_view to_string(Modality m) {
  return m == Modality::Face ? "face" : "voice";
}

std::vector<float> normalize_embedding(std::span<const float> raw, std::size_t expected_dim,
                                       Modality modality) {
  if (raw.size() != expected_dim) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(to_string(modality)) + " embedding has length " +
                    std::to_string(raw.size()) + ", expected " + std::to_string(expected_dim));
  }
  double sq = 0.0;
  for (float v : raw) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::NonFinite,
                  std::string(to_string(modality)) + " embedding has a non-finite entry");
    }
    sq += static_cast<double>(v) * v;
  }
  const double norm = std::sqrt(sq);
  if (norm < 1e-12) {
    throw Error(ErrorCode::ZeroVector, std::string(to_string(modality)) + " embedding is zero");
  }
  std::vector<float> out(raw.begin(), raw.end());
  if (std::abs(norm - 1.0) > 1e-6) {
    for (float& v : out) v = static_cast<float>(v / norm);
  }
  return out;
}

Identity IdentityRegistry::register_identity(std::string_view label) {
  if (label.empty()) throw Error(ErrorCode::UnknownIdentity, "identity label is empty");
  if (auto found = find(label)) return *found;
  const auto index = static_cast<IdentityIndex>(labels_.size());
  labels_.emplace_back(label);
  index_.emplace(labels_.back(), index);
  return {labels_.back(), index};
}

std::optional<Identity> IdentityRegistry::find(std::string_view label) const {
  auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return Identity{it->first, it->second};
}

KnowledgeStore::KnowledgeStore(StoreConfig config) : config_(config), keys_(0, config.d_key()) {
  if (config.d_face == 0 || config.d_voice == 0) {
    throw Error(ErrorCode::DimensionMismatch, "embedding dimensions must be positive");
  }
}

Identity KnowledgeStore::register_identity(std::string_view label) {
  return registry_.register_identity(label);
}

IdentityIndex KnowledgeStore::resolve(std::string_view label) {
  if (config_.auto_register) return registry_.register_identity(label).index;
  auto found = registry_.find(label);
  if (!found) throw Error(ErrorCode::UnknownIdentity, "identity '" + std::string(label) + "' is not registered");
  return found->index;
}

std::size_t KnowledgeStore::enroll_shot(std::span<const float> face, std::span<const float> voice,
                                        std::string_view face_label,
                                        std::string_view voice_label) {
  // Validate everything before touching the registry so a failed call
  // leaves the store unchanged.
  PairEmbedding pair{ModalEmbedding(face, config_.d_face, Modality::Face),
                     ModalEmbedding(voice, config_.d_voice, Modality::Voice), 0, 0};
  if (face_label.empty() || voice_label.empty()) {
    throw Error(ErrorCode::UnknownIdentity, "identity label is empty");
  }
  pair.face_id = resolve(face_label);
  pair.voice_id = resolve(voice_label);
  return enroll_pair(pair);
}

std::size_t KnowledgeStore::enroll_pair(const PairEmbedding& pair) {
  if (pair.face.dim() != config_.d_face || pair.voice.dim() != config_.d_voice) {
    throw Error(ErrorCode::DimensionMismatch, "pair embedding does not match store dimensions");
  }
  if (pair.face_id >= registry_.size() || pair.voice_id >= registry_.size()) {
    throw Error(ErrorCode::UnknownIdentity, "pair label index is not registered");
  }
  std::vector<float> key;
  key.reserve(d_key());
  key.insert(key.end(), pair.face.values().begin(), pair.face.values().end());
  key.insert(key.end(), pair.voice.values().begin(), pair.voice.values().end());
  keys_.append_row(key);
  labels_.push_back({pair.face_id, pair.voice_id});
  ++counters().key_appends;
  return labels_.size() - 1;
}

Matrix KnowledgeStore::materialize_values() const {
  const std::size_t n = num_ids();
  Matrix v(2 * n, num_shots());
  for (std::size_t m = 0; m < labels_.size(); ++m) {
    v(labels_[m].face, m) = 1.0f;
    v(n + labels_[m].voice, m) = 1.0f;
  }
  return v;
}

std::vector<std::size_t> KnowledgeStore::shots_per_identity() const {
  std::vector<std::size_t> counts(num_ids(), 0);
  for (const auto& l : labels_) {
    ++counts[l.face];
    if (!l.matched()) ++counts[l.voice];
  }
  return counts;
}

std::size_t parameter_count(const KnowledgeStore& store) {
  return store.num_shots() * store.d_key() * sizeof(float) +
         store.num_shots() * 2 * sizeof(std::uint32_t);
}

}  // namespace attnamer
