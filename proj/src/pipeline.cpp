#include "attnamer/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "file_util.hpp"
#include "json.hpp"
#include "json_text.hpp"

namespace attnamer {

namespace {

using nlohmann::json;

std::vector<float> float_array(const json& v, const char* what, std::size_t line) {
  if (!v.is_array()) {
    throw Error(ErrorCode::ParseError, std::string("'") + what + "' must be an array", line);
  }
  std::vector<float> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) {
      throw Error(ErrorCode::ParseError, std::string("non-numeric entry in '") + what + "'", line);
    }
    out.push_back(x.get<float>());
  }
  return out;
}

ModalEmbedding embedding(const json& v, const char* what, std::size_t dim, Modality modality,
                         std::size_t line) {
  auto raw = float_array(v, what, line);
  try {
    return ModalEmbedding(raw, dim, modality);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DimensionMismatch) {
      throw Error(ErrorCode::DimensionMismatch, e.what(), line);
    }
    throw Error(ErrorCode::ParseError, e.what(), line);
  }
}

// Rank used by vote_winner: IDs by index, no-speaker after all of them.
std::uint64_t label_rank(const SpeakerLabel& l) {
  return l ? static_cast<std::uint64_t>(*l) : UINT64_MAX;
}

void add_vote(std::vector<Vote>& votes, const SpeakerLabel& label, double confidence) {
  auto it = std::find_if(votes.begin(), votes.end(),
                         [&](const Vote& v) { return v.label == label; });
  if (it == votes.end()) {
    votes.push_back({label, 1, confidence});
  } else {
    ++it->count;
    it->confidence_sum += confidence;
  }
}

}  // namespace

WindowStream parse_manifest(std::istream& in, std::size_t d_face, std::size_t d_voice,
                            double base_window) {
  WindowStream stream;
  stream.base_window = base_window;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj = json::parse(text, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      throw Error(ErrorCode::ParseError, "malformed JSON", line);
    }
    WindowQuery w;
    auto idx = obj.find("window");
    if (idx == obj.end() || !idx->is_number_integer()) {
      throw Error(ErrorCode::ParseError, "'window' must be an integer", line);
    }
    w.window_index = idx->get<std::int64_t>();
    auto ts = obj.find("t_start");
    if (ts == obj.end() || !ts->is_number()) {
      throw Error(ErrorCode::ParseError, "'t_start' must be a number", line);
    }
    w.t_start = ts->get<double>();
    w.t_end = w.t_start + base_window;

    auto faces = obj.find("faces");
    if (faces == obj.end() || !faces->is_array()) {
      throw Error(ErrorCode::ParseError, "'faces' must be an array of arrays", line);
    }
    for (const auto& f : *faces) {
      w.faces.push_back(embedding(f, "faces", d_face, Modality::Face, line));
    }
    auto voice = obj.find("voice");
    if (voice == obj.end()) throw Error(ErrorCode::ParseError, "missing 'voice'", line);
    w.voice = embedding(*voice, "voice", d_voice, Modality::Voice, line);

    auto gt = obj.find("gt");
    if (gt != obj.end() && !gt->is_null()) {
      if (!gt->is_string()) {
        throw Error(ErrorCode::ParseError, "'gt' must be a string or null", line);
      }
      w.ground_truth = gt->get<std::string>();
    }

    if (!stream.windows.empty()) {
      const auto& prev = stream.windows.back();
      if (w.window_index <= prev.window_index) {
        throw Error(ErrorCode::ParseError, "window indices must strictly increase", line);
      }
      // Tolerate decimal round-off in t_start.
      if (w.t_start < prev.t_end - 1e-9) {
        throw Error(ErrorCode::ParseError, "base windows overlap", line);
      }
    }
    stream.windows.push_back(std::move(w));
  }
  return stream;
}

WindowStream load_manifest(const std::filesystem::path& path, std::size_t d_face,
                           std::size_t d_voice, double base_window) {
  auto in = detail::open_input(path);
  return parse_manifest(in, d_face, d_voice, base_window);
}

std::string format_manifest_line(const WindowQuery& window) {
  std::string out = "{\"window\":";
  out += std::to_string(window.window_index);
  out += ",\"t_start\":";
  detail::append_number(out, window.t_start);
  out += ",\"faces\":[";
  for (std::size_t j = 0; j < window.faces.size(); ++j) {
    if (j) out.push_back(',');
    detail::append_array(out, window.faces[j].values());
  }
  out += "],\"voice\":";
  detail::append_array(out, window.voice.values());
  out += ",\"gt\":";
  if (window.ground_truth) {
    detail::append_string(out, *window.ground_truth);
  } else {
    out += "null";
  }
  out += "}";
  return out;
}

void write_manifest(std::ostream& out, const WindowStream& stream) {
  for (const auto& w : stream.windows) out << format_manifest_line(w) << '\n';
}

void save_manifest_atomic(const std::filesystem::path& path, const WindowStream& stream) {
  std::ostringstream buf;
  write_manifest(buf, stream);
  detail::write_file_atomic(path, buf.str());
}

SpeakerLabel resolve_ground_truth(const WindowQuery& window, const IdentityRegistry& registry) {
  if (!window.ground_truth) return std::nullopt;
  auto id = registry.find(*window.ground_truth);
  if (!id) return std::nullopt;
  return id->index;
}

std::vector<PredictionRecord> run_stream(const WindowPredictor& predict,
                                         const WindowStream& stream, std::size_t jobs) {
  const std::size_t n = stream.windows.size();
  std::vector<PredictionRecord> out(n);
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = predict(stream.windows[i]);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = predict(stream.windows[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<PredictionRecord> run_stream(const KnowledgeStore& store, const WindowStream& stream,
                                         float tau, std::size_t jobs,
                                         const AttentionOptions& options) {
  if (store.empty()) throw Error(ErrorCode::EmptyStore, "knowledge store has no shots");
  return run_stream(
      [&](const WindowQuery& w) { return predict_window(store, w, tau, options); }, stream, jobs);
}

SpeakerLabel vote_winner(std::span<const Vote> votes) {
  const Vote* best = nullptr;
  for (const auto& v : votes) {
    if (!best || v.count > best->count ||
        (v.count == best->count &&
         (v.confidence_sum > best->confidence_sum ||
          (v.confidence_sum == best->confidence_sum &&
           label_rank(v.label) < label_rank(best->label))))) {
      best = &v;
    }
  }
  return best ? best->label : std::nullopt;
}

std::vector<AggregatedPrediction> aggregate(std::span<const PredictionRecord> records,
                                            std::size_t factor,
                                            std::span<const WindowQuery> windows,
                                            double base_window) {
  if (factor == 0) factor = 1;
  const bool timed = windows.size() == records.size();
  std::vector<AggregatedPrediction> out;
  for (std::size_t start = 0; start < records.size(); start += factor) {
    const std::size_t end = std::min(records.size(), start + factor);
    AggregatedPrediction span;
    span.group_size = end - start;
    span.first_window = records[start].window_index;
    span.last_window = records[end - 1].window_index;
    if (timed) {
      span.t_start = windows[start].t_start;
      span.t_end = windows[end - 1].t_end;
    } else {
      span.t_start = static_cast<double>(span.first_window) * base_window;
      span.t_end = static_cast<double>(span.last_window + 1) * base_window;
    }
    for (std::size_t i = start; i < end; ++i) {
      add_vote(span.votes, records[i].speaker, records[i].confidence);
    }
    span.winner = vote_winner(span.votes);
    out.push_back(std::move(span));
  }
  return out;
}

std::vector<SpeakerLabel> aggregate_labels(std::span<const SpeakerLabel> labels,
                                           std::size_t factor) {
  if (factor == 0) factor = 1;
  std::vector<SpeakerLabel> out;
  for (std::size_t start = 0; start < labels.size(); start += factor) {
    const std::size_t end = std::min(labels.size(), start + factor);
    std::vector<Vote> votes;
    for (std::size_t i = start; i < end; ++i) add_vote(votes, labels[i], 1.0);
    out.push_back(vote_winner(votes));
  }
  return out;
}

}  // namespace attnamer
