#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cotmr/chat.hpp"
#include "cotmr/embedding.hpp"
#include "cotmr/synthetic.hpp"

namespace cotmr {

// Deterministic mock encoder: each (source, key) maps to a seeded,
// hash-derived unit vector, identical across processes and platforms.
class HashEmbedBackend : public EmbedBackend {
 public:
  explicit HashEmbedBackend(std::size_t dim, std::string model_id = "mock-hash");

  std::string model_id() const override { return model_id_; }
  EmbedResponse embed_texts(const std::vector<std::string>& texts) override;
  EmbedResponse embed_images(const std::vector<std::string>& locators) override;

  std::vector<double> vector_for(EmbedSource source, const std::string& key) const;

 private:
  std::size_t dim_;
  std::string model_id_;
};

// Mock encoder backed by explicit tables (planted fixtures); keys absent from
// the tables fall back to HashEmbedBackend vectors of the same dim.
class TableEmbedBackend : public EmbedBackend {
 public:
  TableEmbedBackend(std::size_t dim, std::map<std::string, std::vector<double>> texts,
                    std::map<std::string, std::vector<double>> images, std::string model_id = "mock-table");

  static TableEmbedBackend from_fixture(const SyntheticFixture& fixture);
  // Reads texts.emb.jsonl and images.emb.jsonl (cotmr-emb-v1, ids are the exact
  // text / locator strings) from dir.
  static TableEmbedBackend load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;

  std::string model_id() const override { return model_id_; }
  EmbedResponse embed_texts(const std::vector<std::string>& texts) override;
  EmbedResponse embed_images(const std::vector<std::string>& locators) override;

 private:
  std::size_t dim_;
  std::map<std::string, std::vector<double>> texts_;
  std::map<std::string, std::vector<double>> images_;
  std::string model_id_;
  HashEmbedBackend fallback_;
};

// One canned reply rule: when `match` occurs in the request's user text and the
// request asks for `scale`, reply with replies[min(attempt, size-1)], where
// attempt counts retry reminders already in the request.
struct CannedReply {
  std::string match;
  std::string scale;  // "image" | "object" | "merged"
  std::vector<std::string> replies;
};

inline constexpr std::string_view kCannedFormat = "cotmr-canned-v1";

// Mock chat backend serving fixture replies; unmatched requests get an empty reply.
class CannedChatBackend : public ChatBackend {
 public:
  explicit CannedChatBackend(std::vector<CannedReply> rules, std::string id = "mock-canned");

  static CannedChatBackend from_fixture(const SyntheticFixture& fixture);
  static CannedChatBackend load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::string id() const override { return id_; }
  std::string complete(const ChatRequest& request) override;

  // Scale a request asks for, judged by the markers in its contract.
  static std::string requested_scale(const ChatRequest& request);

 private:
  std::vector<CannedReply> rules_;
  std::string id_;
};

// Client for the model-adapter wire protocol (/v1/embed/text, /v1/embed/image,
// /v1/chat, /health). A bearer token is sent when given.
class HttpAdapterClient : public EmbedBackend, public ChatBackend {
 public:
  explicit HttpAdapterClient(std::string base_url, std::optional<std::string> token = std::nullopt,
                             std::size_t max_batch = 256);

  std::string id() const override { return base_url_; }
  std::string model_id() const override;
  EmbedResponse embed_texts(const std::vector<std::string>& texts) override;
  EmbedResponse embed_images(const std::vector<std::string>& locators) override;
  std::string complete(const ChatRequest& request) override;

  Json health() const;

  struct RawResponse {
    int status = 0;
    Json body;
  };
  // Unvalidated POST, for protocol conformance checks. Throws
  // Error{BackendUnavailable} only when no HTTP response arrives.
  RawResponse post(const std::string& path, const Json& body) const;

 private:
  EmbedResponse embed(const std::string& path, const char* key, const std::vector<std::string>& items);

  std::string base_url_;
  std::optional<std::string> token_;
  std::size_t max_batch_;
  mutable std::optional<std::string> model_id_;
};

}  // namespace cotmr
