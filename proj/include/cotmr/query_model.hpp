#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cotmr {

enum class BenchmarkKind { fashioniq, cirr, circo, synthetic };

std::string_view to_string(BenchmarkKind kind);
BenchmarkKind parse_benchmark_kind(std::string_view name);

inline constexpr std::size_t kSubsetSize = 6;

// One retrieval request: reference image + modification text, with its ground truth.
struct ComposedQuery {
  std::string query_id;
  std::string reference_image;
  std::string modification_text;
  std::vector<std::string> targets;
  std::optional<std::vector<std::string>> subset;

  bool operator==(const ComposedQuery&) const = default;
};

struct GalleryEntry {
  std::string image_id;
  std::string locator;

  bool operator==(const GalleryEntry&) const = default;
};

// The candidate set D; N_D == entries.size().
struct GalleryManifest {
  std::vector<GalleryEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool operator==(const GalleryManifest&) const = default;
};

struct Hyperparams {
  double lambda = 1.0;
  double mu = 0.5;

  bool operator==(const Hyperparams&) const = default;
};

struct DatasetSplit {
  std::string name;
  BenchmarkKind benchmark_kind = BenchmarkKind::synthetic;
  std::vector<ComposedQuery> queries;
  GalleryManifest gallery;
  Hyperparams defaults;

  bool operator==(const DatasetSplit&) const = default;
};

// Per-benchmark (lambda, mu). Throws Error{UnknownBenchmark} for synthetic.
Hyperparams default_hyperparams(BenchmarkKind kind);

// Validates a single query in isolation (targets, subset shape, text).
// Throws Error{MalformedRecord}.
void validate_query(const ComposedQuery& query);

// Checks every split-level invariant: unique ids, resolvable references,
// N_D >= 1. Throws MalformedRecord / DuplicateId / DanglingReference.
void validate_split(const DatasetSplit& split);

// Reads the canonical cotmr-queries-v1 / cotmr-gallery-v1 files.
// hyperparams overrides the benchmark defaults and is required for synthetic.
DatasetSplit load_split(const std::filesystem::path& queries_path, const std::filesystem::path& gallery_path,
                        BenchmarkKind kind, std::optional<Hyperparams> hyperparams = std::nullopt);

GalleryManifest load_gallery(const std::filesystem::path& gallery_path);

void write_queries(const std::vector<ComposedQuery>& queries, const std::filesystem::path& path);
void write_gallery(const GalleryManifest& gallery, const std::filesystem::path& path);

}  // namespace cotmr
