#include "cotmr/chat.hpp"

#include "cotmr/error.hpp"

namespace cotmr {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Json to_wire(const ChatRequest& request) {
  Json messages = Json::array();
  for (const auto& m : request.messages) {
    Json parts = Json::array();
    for (const auto& p : m.parts) {
      parts.push_back(Json{{"type", p.type == Part::Type::text ? "text" : "image"}, {"data", p.data}});
    }
    messages.push_back(Json{{"role", to_string(m.role)}, {"parts", std::move(parts)}});
  }
  return Json{{"messages", std::move(messages)},
              {"temperature", request.decoding.temperature},
              {"max_tokens", request.decoding.max_tokens}};
}

ChatRequest chat_request_from_wire(const Json& body) {
  auto fail = [](const std::string& why) -> ChatRequest { throw Error(ErrorKind::MalformedRecord, why); };
  if (!body.is_object()) return fail("chat body must be an object");
  auto msgs = body.find("messages");
  if (msgs == body.end() || !msgs->is_array() || msgs->empty()) return fail("\"messages\" must be a non-empty array");
  ChatRequest req;
  for (const auto& m : *msgs) {
    if (!m.is_object()) return fail("message must be an object");
    auto role = m.find("role");
    auto parts = m.find("parts");
    if (role == m.end() || !role->is_string()) return fail("message.role must be a string");
    if (parts == m.end() || !parts->is_array()) return fail("message.parts must be an array");
    Message msg;
    const auto r = role->get<std::string>();
    if (r == "system") {
      msg.role = Role::system;
    } else if (r == "user") {
      msg.role = Role::user;
    } else if (r == "assistant") {
      msg.role = Role::assistant;
    } else {
      return fail("unknown role \"" + r + "\"");
    }
    for (const auto& p : *parts) {
      if (!p.is_object()) return fail("part must be an object");
      auto type = p.find("type");
      auto data = p.find("data");
      if (type == p.end() || !type->is_string() || data == p.end() || !data->is_string()) {
        return fail("part needs string \"type\" and \"data\"");
      }
      const auto t = type->get<std::string>();
      if (t == "text") {
        msg.parts.push_back(Part::text(data->get<std::string>()));
      } else if (t == "image") {
        msg.parts.push_back(Part::image(data->get<std::string>()));
      } else {
        return fail("unknown part type \"" + t + "\"");
      }
    }
    req.messages.push_back(std::move(msg));
  }
  if (auto t = body.find("temperature"); t != body.end()) {
    if (!t->is_number()) return fail("temperature must be a number");
    req.decoding.temperature = t->get<double>();
  }
  if (auto n = body.find("max_tokens"); n != body.end()) {
    if (!n->is_number_integer()) return fail("max_tokens must be an integer");
    req.decoding.max_tokens = n->get<int>();
  }
  return req;
}

std::string render_text(const ChatRequest& request) {
  std::string out;
  for (const auto& m : request.messages) {
    out += "[";
    out += to_string(m.role);
    out += "]\n";
    for (const auto& p : m.parts) {
      if (p.type == Part::Type::image) {
        out += "<image:" + p.data + ">\n";
      } else {
        out += p.data;
        if (p.data.empty() || p.data.back() != '\n') out += '\n';
      }
    }
  }
  return out;
}

std::string final_user_text(const ChatRequest& request) {
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role != Role::user) continue;
    std::string text;
    for (const auto& p : it->parts) {
      if (p.type == Part::Type::text) text += p.data;
    }
    return text;
  }
  return {};
}

}  // namespace cotmr
