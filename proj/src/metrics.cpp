#include "attnamer/metrics.hpp"

#include <algorithm>
#include <chrono>

#include "json.hpp"
#include "json_text.hpp"

namespace attnamer {

namespace {

template <typename T>
double match_percentage(std::span<const T> predictions, std::span<const T> ground_truth) {
  if (predictions.size() != ground_truth.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(predictions.size()) + " predictions vs " +
                                               std::to_string(ground_truth.size()) + " labels");
  }
  if (predictions.empty()) throw Error(ErrorCode::EmptyInput, "nothing to score");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == ground_truth[i]) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predictions.size());
}

template <typename Build>
SetupOutcome timed_setup(Method method, const SetupContext& ctx, Build&& build_store) {
  SetupOutcome out;
  out.seconds = median_seconds(
      [&] {
        out.store = build_store();
        out.tfs.reset();
        out.lwf.reset();
        if (method == Method::Tfs) {
          LabeledSet data = matched_pairs(out.store);
          out.tfs = train_tfs(data, ctx.train);
          out.epochs = out.tfs->epochs;
          out.non_convergence = out.tfs->non_convergence;
        } else if (method == Method::Lwf) {
          const auto last = ctx.lwf_last == 0 ? static_cast<IdentityIndex>(out.store.num_ids())
                                              : ctx.lwf_last;
          LabeledSet stage = select_classes(matched_pairs(out.store), ctx.lwf_first, last);
          if (ctx.lwf_base.trunk.empty()) {
            out.lwf = pretrain_lwf(stage, ctx.train);
          } else {
            out.lwf = train_lwf_increment(ctx.lwf_base, stage, ctx.train);
          }
          out.epochs = out.lwf->branches.back().epochs;
        }
      },
      ctx.repetitions);
  return out;
}

void put(nlohmann::ordered_json& j, const char* key, const std::optional<double>& v) {
  j[key] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

PredictionRecord decide_from_distributions(const WindowQuery& window,
                                           const std::vector<std::vector<float>>& dists,
                                           std::size_t num_ids, float tau) {
  std::vector<PairConfidence> per_pair;
  per_pair.reserve(dists.size());
  for (std::size_t p = 0; p < dists.size(); ++p) {
    const auto& d = dists[p];
    per_pair.push_back({p, std::vector<float>(d.begin(), d.begin() + std::min(num_ids, d.size()))});
  }
  return decide_speaker(window.window_index, std::move(per_pair), tau);
}

}  // namespace

double mpa(std::span<const IdentityIndex> predictions,
           std::span<const IdentityIndex> ground_truth) {
  return match_percentage(predictions, ground_truth);
}

double sna(std::span<const SpeakerLabel> predictions, std::span<const SpeakerLabel> ground_truth) {
  return match_percentage(predictions, ground_truth);
}

StreamScores score_stream(std::span<const PredictionRecord> records, const WindowStream& stream,
                          const IdentityRegistry& registry, std::size_t factor) {
  if (records.size() != stream.windows.size()) {
    throw Error(ErrorCode::LengthMismatch, "one prediction per window is required");
  }
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "stream has no windows");
  StreamScores s;
  s.windows = records.size();
  std::vector<IdentityIndex> mp_pred;
  std::vector<IdentityIndex> mp_gt;
  std::vector<SpeakerLabel> truth;
  truth.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto gt = resolve_ground_truth(stream.windows[i], registry);
    truth.push_back(gt);
    if (gt && records[i].best_id) {
      mp_pred.push_back(*records[i].best_id);
      mp_gt.push_back(*gt);
    }
  }
  s.matched_windows = mp_gt.size();
  if (!mp_gt.empty()) s.mpa = mpa(mp_pred, mp_gt);

  const auto spans = aggregate(records, factor, stream.windows, stream.base_window);
  const auto truth_spans = aggregate_labels(truth, factor);
  std::vector<SpeakerLabel> predicted;
  predicted.reserve(spans.size());
  for (const auto& sp : spans) predicted.push_back(sp.winner);
  s.sna = sna(predicted, truth_spans);
  s.spans = spans.size();
  return s;
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Att: return "att";
    case Method::Tfs: return "tfs";
    case Method::Lwf: return "lwf";
  }
  return "att";
}

std::optional<Method> parse_method(std::string_view text) {
  for (Method m : {Method::Att, Method::Tfs, Method::Lwf}) {
    if (text == to_string(m)) return m;
  }
  return std::nullopt;
}

std::string to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["method"] = std::string(to_string(r.method));
  put(j, "mpa", r.mpa);
  j["sna"] = r.sna;
  j["params_kb"] = r.params_kb;
  j["setup_time_s"] = r.setup_time_s;
  j["setup_time_cumulative_s"] = r.setup_time_cumulative_s;
  j["config"] = {{"n_ids", r.n_ids},   {"shots", r.shots},   {"d_key", r.d_key},
                 {"tau", r.tau},       {"factor", r.factor}};
  j["windows"] = r.windows;
  j["matched_windows"] = r.matched_windows;
  j["spans"] = r.spans;
  if (r.epochs) {
    j["epochs"] = *r.epochs;
    j["non_convergence"] = r.non_convergence;
  }
  return j.dump();
}

std::string_view eval_csv_header() {
  return "method,n_ids,shots,d_key,tau,factor,mpa,sna,params_kb,setup_time_s,"
         "setup_time_cumulative_s,epochs,windows,spans";
}

std::string csv_row(const EvalReport& r) {
  std::string out(to_string(r.method));
  auto field = [&out](auto v) {
    out.push_back(',');
    if constexpr (std::is_floating_point_v<decltype(v)>) {
      detail::append_number(out, v);
    } else {
      out += std::to_string(v);
    }
  };
  field(r.n_ids);
  field(r.shots);
  field(r.d_key);
  field(r.tau);
  field(r.factor);
  out.push_back(',');
  if (r.mpa) detail::append_number(out, *r.mpa);
  field(r.sna);
  field(r.params_kb);
  field(r.setup_time_s);
  field(r.setup_time_cumulative_s);
  out.push_back(',');
  if (r.epochs) out += std::to_string(*r.epochs);
  field(r.windows);
  field(r.spans);
  return out;
}

double median_seconds(const std::function<void()>& fn, std::size_t reps) {
  reps = std::max<std::size_t>(reps, 3);
  std::vector<double> times;
  times.reserve(reps);
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::nth_element(times.begin(), times.begin() + reps / 2, times.end());
  return times[reps / 2];
}

SetupOutcome measure_setup(Method method, std::span<const KnowledgeRecord> records,
                           const SetupContext& context) {
  return timed_setup(method, context, [&] {
    KnowledgeStore store(context.store);
    for (const auto& r : records) store.enroll_shot(r.face, r.voice, r.face_id, r.voice_id);
    return store;
  });
}

SetupOutcome measure_setup(Method method, const std::filesystem::path& knowledge,
                           const SetupContext& context) {
  return timed_setup(method, context, [&] {
    const auto records = read_knowledge_records(knowledge);
    StoreConfig config = infer_store_config(records);
    config.auto_register = context.store.auto_register;
    KnowledgeStore store(config);
    enroll_records(store, records);
    return store;
  });
}

WindowPredictor baseline_predictor(const LinearSoftmaxModel& model, const KnowledgeStore& store,
                                   float tau) {
  return [&model, &store, tau](const WindowQuery& w) {
    const Matrix q = build_query(w, store.d_face(), store.d_voice());
    return decide_from_distributions(w, predict_baseline(model, q), store.num_ids(), tau);
  };
}

WindowPredictor baseline_predictor(const BranchedModel& model, const KnowledgeStore& store,
                                   float tau) {
  return [&model, &store, tau](const WindowQuery& w) {
    const Matrix q = build_query(w, store.d_face(), store.d_voice());
    return decide_from_distributions(w, predict_baseline(model, q, store.num_ids()),
                                     store.num_ids(), tau);
  };
}

}  // namespace attnamer
