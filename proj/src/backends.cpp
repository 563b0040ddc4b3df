#include "cotmr/backends.hpp"

#include <mutex>

#include <httplib.h>

#include "cotmr/error.hpp"
#include "cotmr/reasoning.hpp"
#include "cotmr/jsonl.hpp"
#include "cotmr/prompting.hpp"

namespace cotmr {

HashEmbedBackend::HashEmbedBackend(std::size_t dim, std::string model_id) : dim_(dim), model_id_(std::move(model_id)) {
  if (dim_ == 0) throw Error(ErrorKind::InvalidConfig, "embedding dim must be positive");
}

std::vector<double> HashEmbedBackend::vector_for(EmbedSource source, const std::string& key) const {
  std::string seed_bytes = model_id_;
  seed_bytes += '\0';
  seed_bytes += to_string(source);
  seed_bytes += '\0';
  seed_bytes += key;
  SplitMix64 rng(fnv1a64(seed_bytes));
  std::vector<double> v(dim_);
  for (auto& x : v) x = rng.normal();
  return normalize(v);
}

EmbedResponse HashEmbedBackend::embed_texts(const std::vector<std::string>& texts) {
  EmbedResponse r{dim_, {}, std::vector<bool>(texts.size(), false)};
  for (const auto& t : texts) r.vectors.push_back(vector_for(EmbedSource::text, t));
  return r;
}

EmbedResponse HashEmbedBackend::embed_images(const std::vector<std::string>& locators) {
  EmbedResponse r{dim_, {}, std::vector<bool>(locators.size(), false)};
  for (const auto& l : locators) r.vectors.push_back(vector_for(EmbedSource::image, l));
  return r;
}

TableEmbedBackend::TableEmbedBackend(std::size_t dim, std::map<std::string, std::vector<double>> texts,
                                     std::map<std::string, std::vector<double>> images, std::string model_id)
    : dim_(dim),
      texts_(std::move(texts)),
      images_(std::move(images)),
      model_id_(model_id),
      fallback_(dim, std::move(model_id)) {
  for (const auto* table : {&texts_, &images_}) {
    for (const auto& [k, v] : *table) {
      if (v.size() != dim_) {
        throw Error(ErrorKind::DimensionMismatch, "table vector for \"" + k + "\" has dim " + std::to_string(v.size()));
      }
    }
  }
}

TableEmbedBackend TableEmbedBackend::from_fixture(const SyntheticFixture& fixture) {
  return TableEmbedBackend(fixture.dim, fixture.text_vectors, fixture.image_vectors);
}

TableEmbedBackend TableEmbedBackend::load(const std::filesystem::path& dir) {
  auto texts = read_embeddings(dir / "texts.emb.jsonl");
  auto images = read_embeddings(dir / "images.emb.jsonl");
  if (texts.dim != images.dim) {
    throw Error(ErrorKind::DimensionMismatch, "text and image tables disagree on dim");
  }
  std::map<std::string, std::vector<double>> t(texts.records.begin(), texts.records.end());
  std::map<std::string, std::vector<double>> i(images.records.begin(), images.records.end());
  return TableEmbedBackend(texts.dim, std::move(t), std::move(i), texts.model_id);
}

void TableEmbedBackend::save(const std::filesystem::path& dir) const {
  EmbeddingsFile texts{dim_, model_id_, {texts_.begin(), texts_.end()}};
  EmbeddingsFile images{dim_, model_id_, {images_.begin(), images_.end()}};
  write_embeddings(dir / "texts.emb.jsonl", texts);
  write_embeddings(dir / "images.emb.jsonl", images);
}

EmbedResponse TableEmbedBackend::embed_texts(const std::vector<std::string>& texts) {
  EmbedResponse r{dim_, {}, std::vector<bool>(texts.size(), false)};
  for (const auto& t : texts) {
    auto it = texts_.find(t);
    r.vectors.push_back(it != texts_.end() ? it->second : fallback_.vector_for(EmbedSource::text, t));
  }
  return r;
}

EmbedResponse TableEmbedBackend::embed_images(const std::vector<std::string>& locators) {
  EmbedResponse r{dim_, {}, std::vector<bool>(locators.size(), false)};
  for (const auto& l : locators) {
    auto it = images_.find(l);
    r.vectors.push_back(it != images_.end() ? it->second : fallback_.vector_for(EmbedSource::image, l));
  }
  return r;
}

CannedChatBackend::CannedChatBackend(std::vector<CannedReply> rules, std::string id)
    : rules_(std::move(rules)), id_(std::move(id)) {}

CannedChatBackend CannedChatBackend::from_fixture(const SyntheticFixture& fixture) {
  std::vector<CannedReply> rules;
  for (std::size_t i = 0; i < fixture.planted.size(); ++i) {
    const auto& q = fixture.split.queries[i];
    const auto& p = fixture.planted[i];
    const std::string match = "\"" + q.modification_text + "\"";
    rules.push_back({match, "image", {synthetic_image_reply(p)}});
    rules.push_back({match, "object", {synthetic_object_reply(p)}});
    rules.push_back({match, "merged", {synthetic_merged_reply(p)}});
  }
  return CannedChatBackend(std::move(rules));
}

CannedChatBackend CannedChatBackend::load(const std::filesystem::path& path) {
  const auto doc = read_jsonl(path, kCannedFormat);
  std::vector<CannedReply> rules;
  for (const auto& [line, rec] : doc.records) {
    const auto where = path.string() + ":" + std::to_string(line);
    try {
      CannedReply r;
      r.match = rec.at("match").get<std::string>();
      r.scale = rec.at("scale").get<std::string>();
      if (rec.contains("reply")) {
        r.replies.push_back(rec.at("reply").get<std::string>());
      } else {
        r.replies = rec.at("replies").get<std::vector<std::string>>();
      }
      if (r.replies.empty()) throw Error(ErrorKind::MalformedRecord, where + ": no replies");
      rules.push_back(std::move(r));
    } catch (const Json::exception& e) {
      throw Error(ErrorKind::MalformedRecord, where + ": " + e.what());
    }
  }
  const std::string id = doc.header.contains("id") && doc.header["id"].is_string()
                             ? doc.header["id"].get<std::string>()
                             : "mock-canned";
  return CannedChatBackend(std::move(rules), id);
}

void CannedChatBackend::save(const std::filesystem::path& path) const {
  std::vector<Json> records;
  for (const auto& r : rules_) {
    Json j{{"match", r.match}, {"scale", r.scale}};
    if (r.replies.size() == 1) {
      j["reply"] = r.replies.front();
    } else {
      j["replies"] = r.replies;
    }
    records.push_back(std::move(j));
  }
  write_jsonl(path, Json{{"format", kCannedFormat}, {"id", id_}}, records);
}

std::string CannedChatBackend::requested_scale(const ChatRequest& request) {
  std::string text;
  for (const auto& m : request.messages) {
    if (m.role != Role::user) continue;
    for (const auto& p : m.parts) {
      if (p.type == Part::Type::text) text += p.data;
    }
  }
  const bool caption = text.find(kCaptionMarker) != std::string::npos;
  const bool objects = text.find(kNonexistentMarker) != std::string::npos;
  if (caption && objects) return "merged";
  return caption ? "image" : "object";
}

std::string CannedChatBackend::complete(const ChatRequest& request) {
  std::string text;
  std::size_t reminders = 0;
  for (const auto& m : request.messages) {
    if (m.role != Role::user) continue;
    for (const auto& p : m.parts) {
      if (p.type != Part::Type::text) continue;
      if (p.data == kRetryReminder) ++reminders;
      text += p.data;
      text += '\n';
    }
  }
  const auto scale = requested_scale(request);
  for (const auto& r : rules_) {
    if (r.scale != scale || text.find(r.match) == std::string::npos) continue;
    return r.replies[std::min(reminders, r.replies.size() - 1)];
  }
  return {};
}

HttpAdapterClient::HttpAdapterClient(std::string base_url, std::optional<std::string> token, std::size_t max_batch)
    : base_url_(std::move(base_url)), token_(std::move(token)), max_batch_(max_batch) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

namespace {

std::mutex& model_id_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

HttpAdapterClient::RawResponse HttpAdapterClient::post(const std::string& path, const Json& body) const {
  httplib::Client client(base_url_);
  client.set_connection_timeout(5);
  client.set_read_timeout(600);
  httplib::Headers headers;
  if (token_) headers.emplace("Authorization", "Bearer " + *token_);
  auto res = client.Post(path, headers, dump_compact(body), "application/json");
  if (!res) {
    throw Error(ErrorKind::BackendUnavailable,
                "no response from " + base_url_ + path + " (" + httplib::to_string(res.error()) + ")");
  }
  RawResponse out;
  out.status = res->status;
  try {
    out.body = res->body.empty() ? Json(nullptr) : Json::parse(res->body);
  } catch (const Json::exception&) {
    out.body = Json(res->body);
  }
  return out;
}

Json HttpAdapterClient::health() const {
  httplib::Client client(base_url_);
  client.set_connection_timeout(5);
  httplib::Headers headers;
  if (token_) headers.emplace("Authorization", "Bearer " + *token_);
  auto res = client.Get("/health", headers);
  if (!res) throw Error(ErrorKind::BackendUnavailable, "no response from " + base_url_ + "/health");
  if (res->status != 200) {
    throw Error(ErrorKind::BackendUnavailable, base_url_ + "/health returned " + std::to_string(res->status));
  }
  try {
    return Json::parse(res->body);
  } catch (const Json::exception&) {
    throw Error(ErrorKind::BackendUnavailable, base_url_ + "/health returned invalid JSON");
  }
}

std::string HttpAdapterClient::model_id() const {
  std::lock_guard lock(model_id_mutex());
  if (!model_id_) {
    const auto h = health();
    model_id_ = h.contains("embed_model") && h["embed_model"].is_string() ? h["embed_model"].get<std::string>()
                                                                        : base_url_;
  }
  return *model_id_;
}

namespace {

[[noreturn]] void raise_for_status(int status, const Json& body, const std::string& where) {
  const std::string detail = dump_compact(body);
  const auto msg = where + " returned HTTP " + std::to_string(status) + ": " + detail;
  switch (status) {
    case 400: throw Error(ErrorKind::InvalidConfig, msg);
    case 404: throw Error(ErrorKind::MissingEmbedding, msg);
    case 413: throw Error(ErrorKind::InvalidConfig, "context overflow: " + msg);
    default: throw Error(ErrorKind::BackendUnavailable, msg);
  }
}

}  // namespace

EmbedResponse HttpAdapterClient::embed(const std::string& path, const char* key, const std::vector<std::string>& items) {
  EmbedResponse out;
  for (std::size_t start = 0; start < items.size(); start += max_batch_) {
    const std::size_t end = std::min(items.size(), start + max_batch_);
    Json body;
    body[key] = std::vector<std::string>(items.begin() + static_cast<std::ptrdiff_t>(start),
                                         items.begin() + static_cast<std::ptrdiff_t>(end));
    const auto res = post(path, body);
    if (res.status != 200) raise_for_status(res.status, res.body, base_url_ + path);
    const auto& b = res.body;
    if (!b.is_object() || !b.contains("dim") || !b["dim"].is_number_unsigned() || !b.contains("vectors") ||
        !b["vectors"].is_array() || b["vectors"].size() != end - start) {
      throw Error(ErrorKind::MalformedRecord, base_url_ + path + " returned a body that violates the embed schema");
    }
    const auto dim = b["dim"].get<std::size_t>();
    if (out.dim == 0) out.dim = dim;
    if (dim != out.dim) throw Error(ErrorKind::DimensionMismatch, "adapter changed dim between batches");
    for (std::size_t i = 0; i < b["vectors"].size(); ++i) {
      const auto& v = b["vectors"][i];
      if (!v.is_array() || v.size() != dim) {
        throw Error(ErrorKind::DimensionMismatch, base_url_ + path + " vector " + std::to_string(i) + " has wrong dim");
      }
      std::vector<double> vec;
      vec.reserve(dim);
      for (const auto& x : v) {
        if (!x.is_number()) throw Error(ErrorKind::MalformedRecord, "non-numeric embedding component");
        vec.push_back(x.get<double>());
      }
      out.vectors.push_back(std::move(vec));
      bool truncated = false;
      if (b.contains("truncated") && b["truncated"].is_array() && i < b["truncated"].size() &&
          b["truncated"][i].is_boolean()) {
        truncated = b["truncated"][i].get<bool>();
      }
      out.truncated.push_back(truncated);
    }
  }
  return out;
}

EmbedResponse HttpAdapterClient::embed_texts(const std::vector<std::string>& texts) {
  return embed("/v1/embed/text", "texts", texts);
}

EmbedResponse HttpAdapterClient::embed_images(const std::vector<std::string>& locators) {
  return embed("/v1/embed/image", "locators", locators);
}

std::string HttpAdapterClient::complete(const ChatRequest& request) {
  const auto res = post("/v1/chat", to_wire(request));
  if (res.status != 200) raise_for_status(res.status, res.body, base_url_ + "/v1/chat");
  if (!res.body.is_object() || !res.body.contains("text") || !res.body["text"].is_string()) {
    throw Error(ErrorKind::MalformedRecord, base_url_ + "/v1/chat returned a body without \"text\"");
  }
  return res.body["text"].get<std::string>();
}

}  // namespace cotmr
