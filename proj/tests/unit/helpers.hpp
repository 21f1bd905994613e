#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "attnamer/core_types.hpp"

namespace testing {

inline std::vector<float> axis(std::size_t dim, std::size_t i) {
  std::vector<float> v(dim, 0.0f);
  v[i] = 1.0f;
  return v;
}

inline attnamer::ModalEmbedding face(const std::vector<float>& v) {
  return attnamer::ModalEmbedding(v, v.size(), attnamer::Modality::Face);
}

inline attnamer::ModalEmbedding voice(const std::vector<float>& v) {
  return attnamer::ModalEmbedding(v, v.size(), attnamer::Modality::Voice);
}

inline attnamer::WindowQuery window(std::vector<std::vector<float>> faces,
                                    const std::vector<float>& v, std::int64_t index = 0) {
  attnamer::WindowQuery w;
  w.window_index = index;
  w.t_start = 0.5 * static_cast<double>(index);
  w.t_end = w.t_start + 0.5;
  for (const auto& f : faces) w.faces.push_back(face(f));
  w.voice = voice(v);
  return w;
}

// Store over the standard basis: identity i has face e_i and voice e_i.
inline attnamer::KnowledgeStore basis_store(std::size_t dim, std::size_t n_ids) {
  attnamer::KnowledgeStore store({dim, dim, true});
  for (std::size_t i = 0; i < n_ids; ++i) {
    const std::string label(1, static_cast<char>('A' + i));
    store.enroll_shot(axis(dim, i), axis(dim, i), label, label);
  }
  return store;
}

inline std::vector<float> random_vector(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> v(dim);
  for (auto& x : v) x = g(rng);
  return v;
}

}  // namespace testing
