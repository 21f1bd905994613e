#include "attnamer/attention.hpp"

#include <algorithm>
#include <cmath>

#include "attnamer/instrumentation.hpp"

namespace attnamer {

float default_scale_factor(std::size_t d_key) {
  return static_cast<float>(std::sqrt(static_cast<double>(d_key)));
}

Matrix build_query(const WindowQuery& window, std::size_t d_face, std::size_t d_voice) {
  Matrix q(0, d_face + d_voice);
  if (window.voice.dim() != d_voice) {
    throw Error(ErrorCode::DimensionMismatch, "window voice embedding has wrong length");
  }
  q.reserve_rows(window.faces.size());
  std::vector<float> column(d_face + d_voice);
  // The voice half is shared by every pair in the window.
  std::copy(window.voice.values().begin(), window.voice.values().end(),
            column.begin() + static_cast<std::ptrdiff_t>(d_face));
  for (const auto& face : window.faces) {
    if (face.dim() != d_face) {
      throw Error(ErrorCode::DimensionMismatch, "window face embedding has wrong length");
    }
    std::copy(face.values().begin(), face.values().end(), column.begin());
    q.append_row(column);
  }
  return q;
}

AttentionMap attention_map(const Matrix& queries, const Matrix& keys, float scale_factor,
                           float similarity_scale) {
  if (keys.rows() == 0) throw Error(ErrorCode::EmptyStore, "knowledge store has no keys");
  if (queries.rows() > 0 && queries.cols() != keys.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "query and key dimensions differ");
  }
  const std::size_t j_count = queries.rows();
  const std::size_t m_count = keys.rows();
  AttentionMap out{Matrix(j_count, m_count), scale_factor};
  const double logit_scale = static_cast<double>(scale_factor) * similarity_scale;

  std::vector<double> logits(m_count);
  for (std::size_t p = 0; p < j_count; ++p) {
    const auto q = queries.row(p);
    double peak = -INFINITY;
    for (std::size_t m = 0; m < m_count; ++m) {
      logits[m] = logit_scale * dot(q, keys.row(m));
      peak = std::max(peak, logits[m]);
    }
    double total = 0.0;
    for (auto& z : logits) {
      z = std::exp(z - peak);
      total += z;
    }
    auto row = out.values.row(p);
    for (std::size_t m = 0; m < m_count; ++m) row[m] = static_cast<float>(logits[m] / total);
  }
  counters().similarity_evaluations += j_count * m_count;
  return out;
}

ContextMatrix context(std::span<const ShotLabel> labels, std::size_t num_ids,
                      const AttentionMap& attention) {
  const auto& a = attention.values;
  if (labels.size() != a.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "label count does not match attention columns");
  }
  const std::size_t pairs = a.rows();
  ContextMatrix c{num_ids, Matrix(2 * num_ids, pairs)};
  std::vector<double> face(num_ids);
  std::vector<double> voice(num_ids);
  for (std::size_t p = 0; p < pairs; ++p) {
    std::fill(face.begin(), face.end(), 0.0);
    std::fill(voice.begin(), voice.end(), 0.0);
    const auto row = a.row(p);
    for (std::size_t m = 0; m < labels.size(); ++m) {
      if (labels[m].face >= num_ids || labels[m].voice >= num_ids) {
        throw Error(ErrorCode::ShapeMismatch, "label index exceeds identity count");
      }
      face[labels[m].face] += row[m];
      voice[labels[m].voice] += row[m];
    }
    for (std::size_t i = 0; i < num_ids; ++i) {
      c.values(i, p) = static_cast<float>(face[i]);
      c.values(num_ids + i, p) = static_cast<float>(voice[i]);
    }
  }
  return c;
}

ContextMatrix context(const Matrix& values, const AttentionMap& attention) {
  const auto& a = attention.values;
  if (values.cols() != a.cols() || values.rows() % 2 != 0) {
    throw Error(ErrorCode::ShapeMismatch, "V must be 2N x M with M matching the attention map");
  }
  ContextMatrix c{values.rows() / 2, Matrix(values.rows(), a.rows())};
  for (std::size_t r = 0; r < values.rows(); ++r) {
    for (std::size_t p = 0; p < a.rows(); ++p) {
      double sum = 0.0;
      for (std::size_t m = 0; m < a.cols(); ++m) {
        sum += static_cast<double>(values(r, m)) * a(p, m);
      }
      c.values(r, p) = static_cast<float>(sum);
    }
  }
  return c;
}

std::vector<float> pair_confidence(const ContextMatrix& c, std::size_t pair) {
  if (pair >= c.num_pairs()) {
    throw Error(ErrorCode::IndexOutOfRange, "pair index " + std::to_string(pair) +
                                                " out of range for " +
                                                std::to_string(c.num_pairs()) + " pairs");
  }
  std::vector<float> out(c.num_ids);
  for (std::size_t i = 0; i < c.num_ids; ++i) out[i] = c.face(i, pair) * c.voice(i, pair);
  return out;
}

std::size_t tie_break(std::span<const float> scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

PredictionRecord decide_speaker(std::int64_t window_index, std::vector<PairConfidence> per_pair,
                                float tau) {
  PredictionRecord rec;
  rec.window_index = window_index;
  float max_conf = 0.0f;
  for (const auto& pc : per_pair) {
    if (pc.scores.empty()) continue;
    const std::size_t arg = tie_break(pc.scores);
    const float conf = pc.scores[arg];
    max_conf = std::max(max_conf, conf);
    if (max_conf == conf) rec.best_id = static_cast<IdentityIndex>(arg);
  }
  rec.confidence = max_conf;
  if (rec.best_id && max_conf >= tau) rec.speaker = rec.best_id;
  rec.per_pair = std::move(per_pair);
  return rec;
}

PredictionRecord predict_window(const KnowledgeStore& store, const WindowQuery& window, float tau,
                                const AttentionOptions& options) {
  if (store.empty()) throw Error(ErrorCode::EmptyStore, "knowledge store has no shots");
  if (window.faces.empty()) {
    PredictionRecord rec;
    rec.window_index = window.window_index;
    return rec;
  }
  const float sf = options.scale_factor.value_or(default_scale_factor(store.d_key()));
  const float sim_scale =
      options.pair_normalization == PairNormalization::Concatenated ? 0.5f : 1.0f;
  const Matrix q = build_query(window, store.d_face(), store.d_voice());
  const AttentionMap a = attention_map(q, store.keys(), sf, sim_scale);
  const ContextMatrix c = context(store.labels(), store.num_ids(), a);
  std::vector<PairConfidence> per_pair;
  per_pair.reserve(c.num_pairs());
  for (std::size_t p = 0; p < c.num_pairs(); ++p) per_pair.push_back({p, pair_confidence(c, p)});
  return decide_speaker(window.window_index, std::move(per_pair), tau);
}

}  // namespace attnamer
