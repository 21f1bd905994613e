#include "attnamer/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace attnamer {

namespace {

enum class Stream : std::uint32_t { FaceCentroid = 1, VoiceCentroid, Shots, Queries, Windows, Unknown };

std::mt19937_64 sub_rng(std::uint64_t seed, std::uint64_t id, Stream purpose,
                        std::uint32_t attempt = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32),
                    static_cast<std::uint32_t>(purpose), attempt};
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return std::mt19937_64((static_cast<std::uint64_t>(words[0]) << 32) | words[1]);
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

std::vector<float> separated_centroid(const std::vector<std::vector<float>>& existing,
                                      std::size_t dim, double max_cos, std::uint64_t seed,
                                      std::size_t id, Stream purpose) {
  constexpr std::uint32_t kAttempts = 10000;
  for (std::uint32_t attempt = 0; attempt < kAttempts; ++attempt) {
    auto rng = sub_rng(seed, id, purpose, attempt);
    auto c = random_unit(dim, rng);
    const bool ok = std::all_of(existing.begin(), existing.end(),
                                [&](const auto& e) { return cosine(c, e) <= max_cos; });
    if (ok) return c;
  }
  throw Error(ErrorCode::InvalidSpec, "cannot place " + std::to_string(id + 1) +
                                          " centroids with pairwise cosine <= " +
                                          std::to_string(max_cos) + " in dimension " +
                                          std::to_string(dim));
}

void validate(const PopulationSpec& s) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidSpec, msg); };
  if (s.n_ids == 0) fail("n_ids must be at least 1");
  if (s.d_face == 0 || s.d_voice == 0) fail("dimensions must be positive");
  if (!(s.face_noise >= 0.0) || !(s.voice_noise >= 0.0)) fail("noise must be >= 0");
  if (!(s.unknown_voice_fraction >= 0.0 && s.unknown_voice_fraction <= 1.0)) {
    fail("unknown_voice_fraction must lie in [0, 1]");
  }
  if (s.faces_per_window == 0) fail("faces_per_window must be at least 1");
  if (s.nonmatched_per_shot > 0 && s.n_ids < 2) fail("non-matched shots need two IDs");
  if (!(s.max_centroid_cosine > -1.0 && s.max_centroid_cosine <= 1.0)) {
    fail("max_centroid_cosine must lie in (-1, 1]");
  }
}

std::string label_of(const PopulationSpec& s, std::size_t id) {
  std::string digits = std::to_string(id);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return s.label_prefix + digits;
}

ModalEmbedding as_embedding(const std::vector<float>& v, Modality m) {
  return ModalEmbedding(v, v.size(), m);
}

}  // namespace

std::vector<float> random_unit(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(dim);
  double sq = 0.0;
  do {
    sq = 0.0;
    for (double& x : v) {
      x = g(rng);
      sq += x * x;
    }
  } while (sq < 1e-12);
  const double inv = 1.0 / std::sqrt(sq);
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] * inv);
  return out;
}

std::vector<float> perturb(std::span<const float> centroid, double noise, std::mt19937_64& rng) {
  const std::size_t d = centroid.size();
  std::vector<double> v(centroid.begin(), centroid.end());
  if (noise > 0.0 && d > 1) {
    std::normal_distribution<double> g(0.0, noise / std::sqrt(static_cast<double>(d - 1)));
    std::vector<double> t(d);
    for (double& x : t) x = g(rng);
    double along = 0.0;
    for (std::size_t i = 0; i < d; ++i) along += t[i] * centroid[i];
    for (std::size_t i = 0; i < d; ++i) v[i] += t[i] - along * centroid[i];
  }
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double inv = 1.0 / std::sqrt(sq);
  std::vector<float> out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = static_cast<float>(v[i] * inv);
  return out;
}

Population generate_population(const PopulationSpec& spec) {
  validate(spec);
  const std::size_t n = spec.n_ids;
  Population pop;
  pop.store = KnowledgeStore(StoreConfig{spec.d_face, spec.d_voice, true});
  for (std::size_t i = 0; i < n; ++i) {
    pop.labels.push_back(label_of(spec, i));
    pop.centroids.face.push_back(separated_centroid(pop.centroids.face, spec.d_face,
                                                    spec.max_centroid_cosine, spec.seed, i,
                                                    Stream::FaceCentroid));
    pop.centroids.voice.push_back(separated_centroid(pop.centroids.voice, spec.d_voice,
                                                     spec.max_centroid_cosine, spec.seed, i,
                                                     Stream::VoiceCentroid));
  }
  // Registration in index order, before any shot references a partner.
  for (const auto& l : pop.labels) pop.store.register_identity(l);

  const auto& cf = pop.centroids.face;
  const auto& cv = pop.centroids.voice;
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = sub_rng(spec.seed, i, Stream::Shots);
    for (std::size_t s = 0; s < spec.shots_per_id; ++s) {
      pop.enrollment.push_back({pop.labels[i], pop.labels[i], perturb(cf[i], spec.face_noise, rng),
                                perturb(cv[i], spec.voice_noise, rng), 0});
    }
    // Partners cycle through the other IDs so every ordered pair gets keys
    // once there are enough shots.
    for (std::size_t k = 0; k < spec.shots_per_id * spec.nonmatched_per_shot; ++k) {
      const std::size_t partner = (i + 1 + k % (n - 1)) % n;
      pop.enrollment.push_back({pop.labels[i], pop.labels[partner],
                                perturb(cf[i], spec.face_noise, rng),
                                perturb(cv[partner], spec.voice_noise, rng), 0});
    }
  }
  for (const auto& r : pop.enrollment) {
    const auto f = pop.store.registry().find(r.face_id)->index;
    const auto v = pop.store.registry().find(r.voice_id)->index;
    pop.store.enroll_pair(
        {as_embedding(r.face, Modality::Face), as_embedding(r.voice, Modality::Voice), f, v});
  }

  // Held-out windows: matched queries drawn per ID, then distractors.
  struct Draft {
    std::vector<std::vector<float>> faces;
    std::vector<float> voice;
    std::optional<std::string> gt;
    // Extra faces avoid the IDs already in the window.
    std::size_t face_owner = 0;
    std::size_t voice_owner = 0;
  };
  std::vector<Draft> drafts;
  auto stream_rng = sub_rng(spec.seed, n, Stream::Windows);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  auto add_bystanders = [&](Draft& d) {
    const std::size_t taken = d.face_owner == d.voice_owner || d.voice_owner >= n ? 1 : 2;
    if (n <= taken) return;
    while (d.faces.size() < spec.faces_per_window) {
      const std::size_t o = pick(stream_rng);
      if (o == d.face_owner || o == d.voice_owner) continue;
      d.faces.push_back(perturb(cf[o], spec.face_noise, stream_rng));
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = sub_rng(spec.seed, i, Stream::Queries);
    for (std::size_t q = 0; q < spec.queries_per_id; ++q) {
      Draft d;
      d.faces.push_back(perturb(cf[i], spec.face_noise, rng));
      d.voice = perturb(cv[i], spec.voice_noise, rng);
      d.gt = pop.labels[i];
      d.face_owner = d.voice_owner = i;
      drafts.push_back(std::move(d));
    }
  }
  const std::size_t matched = drafts.size();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto unknown_rng = sub_rng(spec.seed, 0, Stream::Unknown);
  for (std::size_t k = 0; k < matched * spec.distractor_ratio; ++k) {
    Draft d;
    const std::size_t a = pick(stream_rng);
    d.face_owner = a;
    d.voice_owner = n;
    d.faces.push_back(perturb(cf[a], spec.face_noise, stream_rng));
    const bool unknown = n < 2 || unit(stream_rng) < spec.unknown_voice_fraction;
    if (unknown) {
      d.voice = random_unit(spec.d_voice, unknown_rng);
    } else {
      std::size_t b = pick(stream_rng);
      while (b == a) b = pick(stream_rng);
      d.voice_owner = b;
      d.voice = perturb(cv[b], spec.voice_noise, stream_rng);
    }
    drafts.push_back(std::move(d));
  }
  std::shuffle(drafts.begin(), drafts.end(), stream_rng);

  pop.queries.base_window = kDefaultBaseWindow;
  for (std::size_t w = 0; w < drafts.size(); ++w) {
    auto& d = drafts[w];
    WindowQuery q;
    q.window_index = static_cast<std::int64_t>(w);
    q.t_start = static_cast<double>(w) * kDefaultBaseWindow;
    q.t_end = q.t_start + kDefaultBaseWindow;
    add_bystanders(d);
    // The speaking face is not always the first one.
    std::shuffle(d.faces.begin(), d.faces.end(), stream_rng);
    for (const auto& f : d.faces) q.faces.push_back(as_embedding(f, Modality::Face));
    q.voice = as_embedding(d.voice, Modality::Voice);
    q.ground_truth = d.gt;
    pop.queries.windows.push_back(std::move(q));
  }
  return pop;
}

std::optional<IdentityIndex> oracle_predict(const Centroids& centroids, const WindowQuery& window,
                                            double tau_oracle) {
  auto nearest = [](const std::vector<std::vector<float>>& cs, std::span<const float> x) {
    std::size_t best = 0;
    double best_cos = -2.0;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const double c = cosine(cs[i], x);
      if (c > best_cos) {
        best_cos = c;
        best = i;
      }
    }
    return std::pair{best, best_cos};
  };
  if (centroids.face.empty() || centroids.voice.empty()) return std::nullopt;
  const auto [voice_id, voice_cos] = nearest(centroids.voice, window.voice.values());
  if (voice_cos <= tau_oracle) return std::nullopt;
  for (const auto& f : window.faces) {
    const auto [face_id, face_cos] = nearest(centroids.face, f.values());
    if (face_id == voice_id && face_cos > tau_oracle) return static_cast<IdentityIndex>(face_id);
  }
  return std::nullopt;
}

}  // namespace attnamer
