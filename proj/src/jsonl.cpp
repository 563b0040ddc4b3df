#include "cotmr/jsonl.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "cotmr/error.hpp"

namespace cotmr {

namespace {

bool is_blank(std::string_view line) {
  for (char c : line) {
    if (c != ' ' && c != '\t' && c != '\r') return false;
  }
  return true;
}

}  // namespace

JsonlDocument read_jsonl(const std::filesystem::path& path, std::string_view expected_format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());

  JsonlDocument doc;
  bool have_header = false;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (is_blank(line)) continue;
    Json value;
    try {
      value = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorKind::MalformedRecord,
                  path.string() + ":" + std::to_string(line_number) + ": invalid JSON (" + e.what() + ")");
    }
    if (!value.is_object()) {
      throw Error(ErrorKind::MalformedRecord,
                  path.string() + ":" + std::to_string(line_number) + ": expected a JSON object");
    }
    if (!have_header) {
      auto it = value.find("format");
      if (it == value.end() || !it->is_string() || it->get<std::string>() != expected_format) {
        throw Error(ErrorKind::MalformedRecord, path.string() + ":" + std::to_string(line_number) +
                                                   ": expected header {\"format\": \"" +
                                                   std::string(expected_format) + "\"}");
      }
      doc.header = std::move(value);
      have_header = true;
      continue;
    }
    doc.records.push_back({line_number, std::move(value)});
  }
  if (!have_header) {
    throw Error(ErrorKind::MalformedRecord, path.string() + ": missing header line");
  }
  return doc;
}

std::string dump_compact(const Json& value) {
  return value.dump(-1, ' ', false, Json::error_handler_t::replace);
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorKind::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_jsonl(const std::filesystem::path& path, const Json& header, const std::vector<Json>& records) {
  std::string out = dump_compact(header);
  out += '\n';
  for (const auto& r : records) {
    out += dump_compact(r);
    out += '\n';
  }
  write_text_file(path, out);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fnv1a64_hex(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

}  // namespace cotmr
