#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "attnamer/core_types.hpp"

namespace attnamer {

// One line of a knowledge file:
//   {"face_id": "<label>", "voice_id": "<label>", "face": [f32...], "voice": [f32...]}
// Vectors may be un-normalized on disk.
struct KnowledgeRecord {
  std::string face_id;
  std::string voice_id;
  std::vector<float> face;
  std::vector<float> voice;
  // 1-based source line, 0 for records built in memory.
  std::size_t line = 0;
};

// Blank lines are skipped. Malformed lines raise ParseError carrying the
// 1-based line number.
std::vector<KnowledgeRecord> parse_knowledge(std::istream& in);
std::vector<KnowledgeRecord> read_knowledge_records(const std::filesystem::path& path);

// Dimensions taken from the first record; defaults when there are none.
StoreConfig infer_store_config(const std::vector<KnowledgeRecord>& records);

// Enrolls every record in file order. DimensionMismatch and ZeroVector
// errors are rethrown as ParseError with the offending line number.
void enroll_records(KnowledgeStore& store, const std::vector<KnowledgeRecord>& records);

KnowledgeStore load_knowledge(const std::filesystem::path& path);

std::string format_knowledge_record(const KnowledgeStore& store, std::size_t shot);
void write_knowledge(std::ostream& out, const KnowledgeStore& store);

// Writes to a sibling temp file and renames it over `path`.
void save_knowledge_atomic(const std::filesystem::path& path, const KnowledgeStore& store);

}  // namespace attnamer
