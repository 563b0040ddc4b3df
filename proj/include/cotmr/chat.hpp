#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cotmr/jsonl.hpp"

namespace cotmr {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);

struct Part {
  enum class Type { text, image };
  Type type = Type::text;
  std::string data;  // text, or an image locator / id

  static Part text(std::string s) { return {Type::text, std::move(s)}; }
  static Part image(std::string s) { return {Type::image, std::move(s)}; }

  bool operator==(const Part&) const = default;
};

struct Message {
  Role role = Role::user;
  std::vector<Part> parts;

  bool operator==(const Message&) const = default;
};

struct Decoding {
  double temperature = 0.0;
  int max_tokens = 1024;

  bool operator==(const Decoding&) const = default;
};

struct ChatRequest {
  std::vector<Message> messages;
  Decoding decoding;

  bool operator==(const ChatRequest&) const = default;
};

// Wire form used by POST /v1/chat.
Json to_wire(const ChatRequest& request);
// Throws Error{MalformedRecord} on schema violations.
ChatRequest chat_request_from_wire(const Json& body);

// Human-readable transcript of a request; what traces store and goldens pin.
std::string render_text(const ChatRequest& request);

// Concatenated text parts of the last user message.
std::string final_user_text(const ChatRequest& request);

// A vision-language chat model. Implementations must be safe to call from
// several threads at once; failures to reach the model throw
// Error{BackendUnavailable}.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string id() const = 0;
  virtual std::string complete(const ChatRequest& request) = 0;
};

}  // namespace cotmr
