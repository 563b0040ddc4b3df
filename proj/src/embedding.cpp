#include "cotmr/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "cotmr/error.hpp"
#include "cotmr/jsonl.hpp"

namespace cotmr {

std::string_view to_string(EmbedSource source) { return source == EmbedSource::text ? "text" : "image"; }

std::vector<double> normalize(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorKind::MalformedRecord, "cannot normalize a zero or non-finite vector");
  }
  std::vector<double> out(v.begin(), v.end());
  // Already-unit input is returned bit-for-bit so persisted indexes round-trip exactly.
  if (std::abs(norm - 1.0) <= 1e-12) return out;
  for (auto& x : out) x /= norm;
  return out;
}

GalleryIndex::GalleryIndex(std::vector<std::string> image_ids, std::vector<std::vector<double>> rows,
                           std::string model_id)
    : ids_(std::move(image_ids)), model_id_(std::move(model_id)) {
  if (ids_.size() != rows.size()) {
    throw Error(ErrorKind::LengthMismatch, "gallery index needs one row per image id");
  }
  dim_ = rows.empty() ? 0 : rows.front().size();
  data_.reserve(ids_.size() * dim_);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j].size() != dim_) {
      throw Error(ErrorKind::DimensionMismatch, "embedding of \"" + ids_[j] + "\" has dim " +
                                                    std::to_string(rows[j].size()) + ", expected " +
                                                    std::to_string(dim_));
    }
    const auto unit = normalize(rows[j]);
    data_.insert(data_.end(), unit.begin(), unit.end());
    if (!positions_.emplace(ids_[j], j).second) {
      throw Error(ErrorKind::DuplicateId, "duplicate image id \"" + ids_[j] + "\" in gallery index");
    }
  }
}

std::optional<std::size_t> GalleryIndex::position(const std::string& image_id) const {
  auto it = positions_.find(image_id);
  if (it == positions_.end()) return std::nullopt;
  return it->second;
}

std::vector<double> similarity_row(std::span<const double> text_vector, const GalleryIndex& index) {
  if (text_vector.size() != index.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "text vector has dim " + std::to_string(text_vector.size()) +
                                                  ", gallery has dim " + std::to_string(index.dim()));
  }
  std::vector<double> row(index.size());
  for (std::size_t j = 0; j < index.size(); ++j) {
    const auto img = index.vector(j);
    double s = 0.0;
    for (std::size_t d = 0; d < img.size(); ++d) s += text_vector[d] * img[d];
    row[j] = s;
  }
  return row;
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingsFile& file, const Json& extra_header) {
  Json header;
  header["format"] = kEmbeddingsFormat;
  header["dim"] = file.dim;
  header["model"] = file.model_id;
  header["normalized"] = true;
  for (const auto& [k, v] : extra_header.items()) header[k] = v;
  std::vector<Json> records;
  records.reserve(file.records.size());
  for (const auto& [id, v] : file.records) {
    if (v.size() != file.dim) {
      throw Error(ErrorKind::DimensionMismatch, "record \"" + id + "\" has dim " + std::to_string(v.size()));
    }
    records.push_back(Json{{"id", id}, {"v", normalize(v)}});
  }
  write_jsonl(path, header, records);
}

EmbeddingsFile read_embeddings(const std::filesystem::path& path) {
  const auto doc = read_jsonl(path, kEmbeddingsFormat);
  EmbeddingsFile file;
  const auto& h = doc.header;
  if (!h.contains("dim") || !h["dim"].is_number_unsigned() || !h.contains("model") || !h["model"].is_string()) {
    throw Error(ErrorKind::MalformedRecord, path.string() + ":1: header needs unsigned \"dim\" and string \"model\"");
  }
  file.dim = h["dim"].get<std::size_t>();
  file.model_id = h["model"].get<std::string>();
  for (const auto& [line, rec] : doc.records) {
    const auto where = path.string() + ":" + std::to_string(line);
    if (!rec.contains("id") || !rec["id"].is_string() || !rec.contains("v") || !rec["v"].is_array()) {
      throw Error(ErrorKind::MalformedRecord, where + ": record needs string \"id\" and array \"v\"");
    }
    std::vector<double> v;
    v.reserve(rec["v"].size());
    for (const auto& x : rec["v"]) {
      if (!x.is_number()) throw Error(ErrorKind::MalformedRecord, where + ": \"v\" must hold numbers");
      v.push_back(x.get<double>());
    }
    if (v.size() != file.dim) {
      throw Error(ErrorKind::DimensionMismatch,
                  where + ": vector has dim " + std::to_string(v.size()) + ", header says " + std::to_string(file.dim));
    }
    file.records.emplace_back(rec["id"].get<std::string>(), std::move(v));
  }
  return file;
}

void write_gallery_index(const std::filesystem::path& path, const GalleryIndex& index, const Json& extra_header) {
  EmbeddingsFile file;
  file.dim = index.dim();
  file.model_id = index.model_id();
  for (std::size_t j = 0; j < index.size(); ++j) {
    const auto v = index.vector(j);
    file.records.emplace_back(index.ids()[j], std::vector<double>(v.begin(), v.end()));
  }
  write_embeddings(path, file, extra_header);
}

GalleryIndex build_gallery_index(const GalleryManifest& manifest, EmbedBackend& backend, std::size_t batch_size) {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  ids.reserve(manifest.size());
  rows.reserve(manifest.size());
  std::optional<std::size_t> dim;
  for (std::size_t start = 0; start < manifest.size(); start += batch_size) {
    const std::size_t end = std::min(manifest.size(), start + batch_size);
    std::vector<std::string> locators;
    for (std::size_t i = start; i < end; ++i) locators.push_back(manifest.entries[i].locator);
    auto resp = backend.embed_images(locators);
    if (resp.vectors.size() != locators.size()) {
      throw Error(ErrorKind::LengthMismatch, "backend returned " + std::to_string(resp.vectors.size()) +
                                                 " vectors for " + std::to_string(locators.size()) + " locators");
    }
    for (std::size_t i = start; i < end; ++i) {
      auto& v = resp.vectors[i - start];
      if (!dim) dim = v.size();
      if (v.size() != *dim) {
        throw Error(ErrorKind::DimensionMismatch, "image \"" + manifest.entries[i].image_id + "\" has dim " +
                                                      std::to_string(v.size()) + ", expected " + std::to_string(*dim));
      }
      ids.push_back(manifest.entries[i].image_id);
      rows.push_back(std::move(v));
    }
  }
  return GalleryIndex(std::move(ids), std::move(rows), backend.model_id());
}

GalleryIndex build_gallery_index(const GalleryManifest& manifest, const std::filesystem::path& embeddings_path) {
  auto file = read_embeddings(embeddings_path);
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < file.records.size(); ++i) by_id.emplace(file.records[i].first, i);

  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  std::string missing;
  std::size_t n_missing = 0;
  for (const auto& e : manifest.entries) {
    auto it = by_id.find(e.image_id);
    if (it == by_id.end()) {
      if (n_missing++ < 20) missing += (missing.empty() ? "" : ", ") + e.image_id;
      continue;
    }
    ids.push_back(e.image_id);
    rows.push_back(file.records[it->second].second);
  }
  if (n_missing > 0) {
    throw Error(ErrorKind::MissingEmbedding, std::to_string(n_missing) + " gallery image(s) have no embedding in " +
                                                 embeddings_path.string() + ": " + missing +
                                                 (n_missing > 20 ? ", ..." : ""));
  }
  return GalleryIndex(std::move(ids), std::move(rows), file.model_id);
}

EmbeddingStore::EmbeddingStore(EmbedBackend& backend, std::optional<std::size_t> dim) : backend_(backend), dim_(dim) {}

std::vector<EmbeddingRecord> EmbeddingStore::embed_texts(const std::vector<std::string>& texts) {
  if (texts.empty()) throw Error(ErrorKind::InvalidConfig, "embed_texts needs at least one text");
  for (const auto& t : texts) {
    if (t.empty()) throw Error(ErrorKind::InvalidConfig, "cannot embed an empty text");
  }
  const std::string model = backend_.model_id();
  auto key = [&](const std::string& t) { return model + '\n' + t; };

  std::vector<std::string> missing;
  {
    std::lock_guard lock(mutex_);
    for (const auto& t : texts) {
      if (!cache_.contains(key(t)) && std::find(missing.begin(), missing.end(), t) == missing.end()) {
        missing.push_back(t);
      }
    }
  }
  if (!missing.empty()) {
    // The backend call happens outside the lock; concurrent duplicates are harmless.
    auto resp = backend_.embed_texts(missing);
    if (resp.vectors.size() != missing.size()) {
      throw Error(ErrorKind::LengthMismatch, "backend returned " + std::to_string(resp.vectors.size()) +
                                                 " vectors for " + std::to_string(missing.size()) + " texts");
    }
    std::lock_guard lock(mutex_);
    ++backend_calls_;
    for (std::size_t i = 0; i < missing.size(); ++i) {
      const auto& v = resp.vectors[i];
      if (!dim_) dim_ = v.size();
      if (v.size() != *dim_) {
        throw Error(ErrorKind::DimensionMismatch, "backend returned dim " + std::to_string(v.size()) +
                                                      " for a store of dim " + std::to_string(*dim_));
      }
      if (i < resp.truncated.size() && resp.truncated[i]) ++truncation_warnings_;
      cache_.emplace(key(missing[i]), normalize(v));
    }
  }

  std::vector<EmbeddingRecord> out;
  out.reserve(texts.size());
  std::lock_guard lock(mutex_);
  for (const auto& t : texts) out.push_back({t, cache_.at(key(t)), EmbedSource::text, model});
  return out;
}

std::vector<double> EmbeddingStore::embed_text(const std::string& text) {
  return std::move(embed_texts({text}).front().vector);
}

std::optional<std::size_t> EmbeddingStore::dim() const {
  std::lock_guard lock(mutex_);
  return dim_;
}

std::size_t EmbeddingStore::truncation_warnings() const {
  std::lock_guard lock(mutex_);
  return truncation_warnings_;
}

std::size_t EmbeddingStore::backend_calls() const {
  std::lock_guard lock(mutex_);
  return backend_calls_;
}

void EmbeddingStore::preload(const EmbeddingsFile& file) {
  std::lock_guard lock(mutex_);
  if (dim_ && file.dim != *dim_) {
    throw Error(ErrorKind::DimensionMismatch,
                "cache file has dim " + std::to_string(file.dim) + ", store has " + std::to_string(*dim_));
  }
  dim_ = file.dim;
  for (const auto& [text, v] : file.records) cache_.emplace(file.model_id + '\n' + text, normalize(v));
}

EmbeddingsFile EmbeddingStore::snapshot() const {
  std::lock_guard lock(mutex_);
  EmbeddingsFile file;
  file.dim = dim_.value_or(0);
  file.model_id = backend_.model_id();
  const std::string prefix = file.model_id + '\n';
  for (const auto& [k, v] : cache_) {
    if (k.starts_with(prefix)) file.records.emplace_back(k.substr(prefix.size()), v);
  }
  return file;
}

}  // namespace cotmr
