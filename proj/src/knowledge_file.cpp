#include "attnamer/knowledge_file.hpp"

#include <istream>
#include <ostream>
#include <sstream>

#include "file_util.hpp"
#include "json.hpp"
#include "json_text.hpp"

namespace attnamer {

namespace {

using nlohmann::json;

std::vector<float> float_array(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_array()) {
    throw Error(ErrorCode::ParseError, std::string("missing array field '") + key + "'", line);
  }
  std::vector<float> out;
  out.reserve(it->size());
  for (const auto& v : *it) {
    if (!v.is_number()) {
      throw Error(ErrorCode::ParseError, std::string("non-numeric entry in '") + key + "'", line);
    }
    out.push_back(v.get<float>());
  }
  return out;
}

std::string string_field(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string() || it->get_ref<const std::string&>().empty()) {
    throw Error(ErrorCode::ParseError, std::string("missing string field '") + key + "'", line);
  }
  return it->get<std::string>();
}

}  // namespace

std::vector<KnowledgeRecord> parse_knowledge(std::istream& in) {
  std::vector<KnowledgeRecord> records;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj = json::parse(text, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      throw Error(ErrorCode::ParseError, "malformed JSON", line);
    }
    KnowledgeRecord rec;
    rec.face_id = string_field(obj, "face_id", line);
    rec.voice_id = string_field(obj, "voice_id", line);
    rec.face = float_array(obj, "face", line);
    rec.voice = float_array(obj, "voice", line);
    rec.line = line;
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<KnowledgeRecord> read_knowledge_records(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_knowledge(in);
}

StoreConfig infer_store_config(const std::vector<KnowledgeRecord>& records) {
  StoreConfig config;
  if (!records.empty()) {
    config.d_face = records.front().face.size();
    config.d_voice = records.front().voice.size();
  }
  return config;
}

void enroll_records(KnowledgeStore& store, const std::vector<KnowledgeRecord>& records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    try {
      store.enroll_shot(r.face, r.voice, r.face_id, r.voice_id);
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, e.what(), r.line ? r.line : i + 1);
    }
  }
}

KnowledgeStore load_knowledge(const std::filesystem::path& path) {
  auto records = read_knowledge_records(path);
  KnowledgeStore store(infer_store_config(records));
  enroll_records(store, records);
  return store;
}

std::string format_knowledge_record(const KnowledgeStore& store, std::size_t shot) {
  const auto& label = store.labels().at(shot);
  std::string out;
  out.reserve(store.d_key() * 12 + 64);
  out += "{\"face_id\":";
  detail::append_string(out, store.registry().label(label.face));
  out += ",\"voice_id\":";
  detail::append_string(out, store.registry().label(label.voice));
  out += ",\"face\":";
  detail::append_array(out, store.face_half(shot));
  out += ",\"voice\":";
  detail::append_array(out, store.voice_half(shot));
  out += "}";
  return out;
}

void write_knowledge(std::ostream& out, const KnowledgeStore& store) {
  for (std::size_t m = 0; m < store.num_shots(); ++m) {
    out << format_knowledge_record(store, m) << '\n';
  }
}

void save_knowledge_atomic(const std::filesystem::path& path, const KnowledgeStore& store) {
  std::ostringstream buf;
  write_knowledge(buf, store);
  detail::write_file_atomic(path, buf.str());
}

}  // namespace attnamer
