#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cotmr/query_model.hpp"
#include "cotmr/jsonl.hpp"

namespace cotmr {

enum class EmbedSource { text, image };

std::string_view to_string(EmbedSource source);

inline constexpr double kUnitNormTolerance = 1e-4;

struct EmbeddingRecord {
  std::string id;
  std::vector<double> vector;
  EmbedSource source = EmbedSource::text;
  std::string model_id;

  bool operator==(const EmbeddingRecord&) const = default;
};

struct EmbedResponse {
  std::size_t dim = 0;
  std::vector<std::vector<double>> vectors;
  std::vector<bool> truncated;
};

// A contrastive text/image encoder. Implementations must be thread-safe and
// throw Error{BackendUnavailable} when the model cannot be reached.
class EmbedBackend {
 public:
  virtual ~EmbedBackend() = default;
  virtual std::string model_id() const = 0;
  virtual EmbedResponse embed_texts(const std::vector<std::string>& texts) = 0;
  virtual EmbedResponse embed_images(const std::vector<std::string>& locators) = 0;
};

// L2-normalized copy. Throws Error{MalformedRecord} on a zero or non-finite vector.
std::vector<double> normalize(std::span<const double> v);

// Unit-norm image embeddings of the gallery, one row per image, manifest order.
class GalleryIndex {
 public:
  GalleryIndex() = default;
  // rows[j] is the embedding of image_ids[j]; rows are re-normalized.
  // Throws DimensionMismatch on ragged rows, DuplicateId on repeated ids.
  GalleryIndex(std::vector<std::string> image_ids, std::vector<std::vector<double>> rows, std::string model_id);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::string& model_id() const { return model_id_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const double> vector(std::size_t j) const { return {data_.data() + j * dim_, dim_}; }
  std::optional<std::size_t> position(const std::string& image_id) const;

  bool operator==(const GalleryIndex& other) const {
    return ids_ == other.ids_ && dim_ == other.dim_ && model_id_ == other.model_id_ && data_ == other.data_;
  }

 private:
  std::vector<std::string> ids_;
  std::size_t dim_ = 0;
  std::string model_id_;
  std::vector<double> data_;  // row-major, size() x dim()
  std::unordered_map<std::string, std::size_t> positions_;
};

// Cosine similarity of a text vector against every gallery image, in gallery order.
// Throws Error{DimensionMismatch}.
std::vector<double> similarity_row(std::span<const double> text_vector, const GalleryIndex& index);

inline constexpr std::string_view kEmbeddingsFormat = "cotmr-emb-v1";

struct EmbeddingsFile {
  std::size_t dim = 0;
  std::string model_id;
  std::vector<std::pair<std::string, std::vector<double>>> records;  // file order
};

// Writes records with full round-trip precision; vectors are normalized first.
// extra_header keys (e.g. a run fingerprint) are added to the header line.
void write_embeddings(const std::filesystem::path& path, const EmbeddingsFile& file,
                      const Json& extra_header = Json::object());
EmbeddingsFile read_embeddings(const std::filesystem::path& path);

void write_gallery_index(const std::filesystem::path& path, const GalleryIndex& index,
                         const Json& extra_header = Json::object());

// Embeds every manifest locator via the backend (batches of at most batch_size).
GalleryIndex build_gallery_index(const GalleryManifest& manifest, EmbedBackend& backend,
                                 std::size_t batch_size = 256);

// Reassembles the index from an embeddings file, in manifest order.
// Throws Error{MissingEmbedding} listing absent ids, DimensionMismatch on bad rows.
GalleryIndex build_gallery_index(const GalleryManifest& manifest, const std::filesystem::path& embeddings_path);

// Text-side embedding cache over a backend, keyed by (model_id, exact string).
// Vectors are normalized store-side whatever the backend returns.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(EmbedBackend& backend, std::optional<std::size_t> dim = std::nullopt);

  // One record per text, in order. Throws Error{InvalidConfig} on an empty
  // list or empty text, Error{DimensionMismatch} if the backend's dim differs
  // from the store's.
  std::vector<EmbeddingRecord> embed_texts(const std::vector<std::string>& texts);
  std::vector<double> embed_text(const std::string& text);

  std::optional<std::size_t> dim() const;
  std::string model_id() const { return backend_.model_id(); }
  std::size_t truncation_warnings() const;
  std::size_t backend_calls() const;

  // Adopts every (text, vector) of an embeddings file into the cache.
  void preload(const EmbeddingsFile& file);
  EmbeddingsFile snapshot() const;

 private:
  EmbedBackend& backend_;
  mutable std::mutex mutex_;
  std::optional<std::size_t> dim_;
  std::map<std::string, std::vector<double>> cache_;  // key: model_id + '\n' + text
  std::size_t truncation_warnings_ = 0;
  std::size_t backend_calls_ = 0;
};

}  // namespace cotmr
