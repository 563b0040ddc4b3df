#include "cotmr/query_model.hpp"

#include <algorithm>
#include <unordered_set>

#include "cotmr/error.hpp"
#include "cotmr/jsonl.hpp"

namespace cotmr {

namespace {

constexpr std::string_view kQueriesFormat = "cotmr-queries-v1";
constexpr std::string_view kGalleryFormat = "cotmr-gallery-v1";

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void malformed(const std::filesystem::path& path, std::size_t line, const std::string& why) {
  throw Error(ErrorKind::MalformedRecord, path.string() + ":" + std::to_string(line) + ": " + why);
}

std::string require_string(const Json& obj, const char* key, const std::filesystem::path& path,
                           std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(path, line, std::string("missing key \"") + key + "\"");
  if (!it->is_string()) malformed(path, line, std::string("\"") + key + "\" must be a string");
  return it->get<std::string>();
}

std::vector<std::string> require_string_array(const Json& value, const char* key,
                                              const std::filesystem::path& path, std::size_t line) {
  if (!value.is_array()) malformed(path, line, std::string("\"") + key + "\" must be an array of strings");
  std::vector<std::string> out;
  out.reserve(value.size());
  for (const auto& v : value) {
    if (!v.is_string()) malformed(path, line, std::string("\"") + key + "\" must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

void reject_unknown_keys(const Json& obj, std::initializer_list<std::string_view> allowed,
                         const std::filesystem::path& path, std::size_t line) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      malformed(path, line, "unknown key \"" + key + "\"");
    }
  }
}

bool has_duplicates(const std::vector<std::string>& ids) {
  std::unordered_set<std::string_view> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) return true;
  }
  return false;
}

}  // namespace

std::string_view to_string(BenchmarkKind kind) {
  switch (kind) {
    case BenchmarkKind::fashioniq: return "fashioniq";
    case BenchmarkKind::cirr: return "cirr";
    case BenchmarkKind::circo: return "circo";
    case BenchmarkKind::synthetic: return "synthetic";
  }
  return "synthetic";
}

BenchmarkKind parse_benchmark_kind(std::string_view name) {
  if (name == "fashioniq") return BenchmarkKind::fashioniq;
  if (name == "cirr") return BenchmarkKind::cirr;
  if (name == "circo") return BenchmarkKind::circo;
  if (name == "synthetic") return BenchmarkKind::synthetic;
  throw Error(ErrorKind::UnknownBenchmark, "unknown benchmark kind \"" + std::string(name) + "\"");
}

Hyperparams default_hyperparams(BenchmarkKind kind) {
  switch (kind) {
    case BenchmarkKind::fashioniq: return {1.0, 0.5};
    case BenchmarkKind::cirr: return {1.0, 0.3};
    case BenchmarkKind::circo: return {0.5, 0.3};
    case BenchmarkKind::synthetic: break;
  }
  throw Error(ErrorKind::UnknownBenchmark, "synthetic splits have no default (lambda, mu); supply them explicitly");
}

void validate_query(const ComposedQuery& q) {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::MalformedRecord, "query \"" + q.query_id + "\": " + why);
  };
  if (q.query_id.empty()) fail("empty query_id");
  if (q.reference_image.empty()) fail("empty reference_image");
  if (trim(q.modification_text).empty()) fail("modification_text is blank");
  if (q.targets.empty()) fail("targets must be non-empty");
  if (has_duplicates(q.targets)) fail("targets contain duplicates");
  if (q.subset) {
    const auto& subset = *q.subset;
    if (subset.size() != kSubsetSize) {
      fail("subset must have exactly 6 ids, got " + std::to_string(subset.size()));
    }
    if (has_duplicates(subset)) fail("subset contains duplicates");
    for (const auto& t : q.targets) {
      if (std::find(subset.begin(), subset.end(), t) == subset.end()) {
        fail("subset does not contain target \"" + t + "\"");
      }
    }
  }
}

void validate_split(const DatasetSplit& split) {
  if (split.gallery.entries.empty()) {
    throw Error(ErrorKind::MalformedRecord, "gallery must contain at least one image");
  }
  std::unordered_set<std::string_view> images;
  for (const auto& e : split.gallery.entries) {
    if (!images.insert(e.image_id).second) {
      throw Error(ErrorKind::DuplicateId, "duplicate image_id \"" + e.image_id + "\"");
    }
  }
  std::unordered_set<std::string_view> query_ids;
  for (const auto& q : split.queries) {
    validate_query(q);
    if (!query_ids.insert(q.query_id).second) {
      throw Error(ErrorKind::DuplicateId, "duplicate query_id \"" + q.query_id + "\"");
    }
    auto check = [&](const std::string& id, const char* role) {
      if (!images.contains(id)) {
        throw Error(ErrorKind::DanglingReference,
                    "query \"" + q.query_id + "\" " + role + " \"" + id + "\" is not in the gallery");
      }
    };
    for (const auto& t : q.targets) check(t, "target");
    if (q.subset) {
      for (const auto& s : *q.subset) check(s, "subset member");
    }
  }
}

GalleryManifest load_gallery(const std::filesystem::path& gallery_path) {
  const auto doc = read_jsonl(gallery_path, kGalleryFormat);
  GalleryManifest gallery;
  std::unordered_set<std::string> seen;
  for (const auto& [line, obj] : doc.records) {
    reject_unknown_keys(obj, {"image_id", "locator"}, gallery_path, line);
    GalleryEntry e{require_string(obj, "image_id", gallery_path, line),
                   require_string(obj, "locator", gallery_path, line)};
    if (e.image_id.empty()) malformed(gallery_path, line, "empty image_id");
    if (!seen.insert(e.image_id).second) {
      throw Error(ErrorKind::DuplicateId, gallery_path.string() + ":" + std::to_string(line) +
                                              ": duplicate image_id \"" + e.image_id + "\"");
    }
    gallery.entries.push_back(std::move(e));
  }
  if (gallery.entries.empty()) malformed(gallery_path, 1, "gallery must contain at least one image");
  return gallery;
}

DatasetSplit load_split(const std::filesystem::path& queries_path, const std::filesystem::path& gallery_path,
                        BenchmarkKind kind, std::optional<Hyperparams> hyperparams) {
  DatasetSplit split;
  split.name = queries_path.stem().string();
  if (split.name == "queries") {
    const auto parent = std::filesystem::absolute(queries_path).lexically_normal().parent_path().filename();
    if (!parent.empty()) split.name = parent.string();
  }
  split.benchmark_kind = kind;
  split.defaults = hyperparams ? *hyperparams : default_hyperparams(kind);
  split.gallery = load_gallery(gallery_path);

  std::unordered_set<std::string_view> images;
  for (const auto& e : split.gallery.entries) images.insert(e.image_id);

  const auto doc = read_jsonl(queries_path, kQueriesFormat);
  std::unordered_set<std::string> query_ids;
  for (const auto& [line, obj] : doc.records) {
    reject_unknown_keys(obj, {"query_id", "reference_image", "modification_text", "targets", "subset"},
                        queries_path, line);
    ComposedQuery q;
    q.query_id = require_string(obj, "query_id", queries_path, line);
    q.reference_image = require_string(obj, "reference_image", queries_path, line);
    q.modification_text = require_string(obj, "modification_text", queries_path, line);
    auto targets = obj.find("targets");
    if (targets == obj.end()) malformed(queries_path, line, "missing key \"targets\"");
    q.targets = require_string_array(*targets, "targets", queries_path, line);
    if (auto subset = obj.find("subset"); subset != obj.end()) {
      q.subset = require_string_array(*subset, "subset", queries_path, line);
    }
    try {
      validate_query(q);
    } catch (const Error& e) {
      malformed(queries_path, line, e.what());
    }
    if (!query_ids.insert(q.query_id).second) {
      throw Error(ErrorKind::DuplicateId, queries_path.string() + ":" + std::to_string(line) +
                                              ": duplicate query_id \"" + q.query_id + "\"");
    }
    auto check = [&](const std::string& id, const char* role) {
      if (!images.contains(id)) {
        throw Error(ErrorKind::DanglingReference, queries_path.string() + ":" + std::to_string(line) +
                                                      ": " + role + " \"" + id + "\" is not in the gallery");
      }
    };
    for (const auto& t : q.targets) check(t, "target");
    if (q.subset) {
      for (const auto& s : *q.subset) check(s, "subset member");
    }
    split.queries.push_back(std::move(q));
  }
  return split;
}

void write_queries(const std::vector<ComposedQuery>& queries, const std::filesystem::path& path) {
  std::vector<Json> records;
  records.reserve(queries.size());
  for (const auto& q : queries) {
    Json obj;
    obj["query_id"] = q.query_id;
    obj["reference_image"] = q.reference_image;
    obj["modification_text"] = q.modification_text;
    obj["targets"] = q.targets;
    if (q.subset) obj["subset"] = *q.subset;
    records.push_back(std::move(obj));
  }
  write_jsonl(path, Json{{"format", kQueriesFormat}}, records);
}

void write_gallery(const GalleryManifest& gallery, const std::filesystem::path& path) {
  std::vector<Json> records;
  records.reserve(gallery.entries.size());
  for (const auto& e : gallery.entries) {
    records.push_back(Json{{"image_id", e.image_id}, {"locator", e.locator}});
  }
  write_jsonl(path, Json{{"format", kGalleryFormat}}, records);
}

}  // namespace cotmr
