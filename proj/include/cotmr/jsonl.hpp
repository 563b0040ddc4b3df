#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cotmr {

using Json = nlohmann::ordered_json;

struct JsonlLine {
  std::size_t line_number = 0;  // 1-based, counting the header line
  Json value;
};

struct JsonlDocument {
  Json header;
  std::vector<JsonlLine> records;
};

// Reads a line-delimited JSON file whose first line is a header object
// carrying {"format": expected_format}. Blank lines are skipped.
// Throws Error{Io} when the file cannot be opened and Error{MalformedRecord}
// (with the line number) on bad JSON or a wrong header.
JsonlDocument read_jsonl(const std::filesystem::path& path, std::string_view expected_format);

// Writes header + records, one compact object per line, through a temporary
// file renamed into place.
void write_jsonl(const std::filesystem::path& path, const Json& header, const std::vector<Json>& records);

void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

// Compact, stable serialization used for every artifact.
std::string dump_compact(const Json& value);

std::uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::string_view bytes);

}  // namespace cotmr
