#include "cotmr/contract.hpp"

#include <cmath>
#include <functional>

#include "cotmr/backends.hpp"
#include "cotmr/error.hpp"
#include "cotmr/prompting.hpp"

namespace cotmr {

namespace {

struct Failure {
  std::string why;
};

void expect(bool ok, const std::string& why) {
  if (!ok) throw Failure{why};
}

std::vector<std::vector<double>> vectors_of(const HttpAdapterClient::RawResponse& res, std::size_t n,
                                            std::size_t dim) {
  expect(res.status == 200, "HTTP " + std::to_string(res.status));
  const auto& b = res.body;
  expect(b.is_object() && b.contains("dim") && b.contains("vectors") && b.contains("truncated"),
         "body lacks dim/vectors/truncated");
  expect(b["dim"] == dim, "dim " + b["dim"].dump() + " differs from /health dim " + std::to_string(dim));
  expect(b["vectors"].is_array() && b["vectors"].size() == n, "expected " + std::to_string(n) + " vectors");
  expect(b["truncated"].is_array() && b["truncated"].size() == n, "expected " + std::to_string(n) + " truncated flags");
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = b["vectors"][i];
    expect(v.is_array() && v.size() == dim, "vector " + std::to_string(i) + " has wrong length");
    expect(b["truncated"][i].is_boolean(), "truncated flag " + std::to_string(i) + " is not a boolean");
    std::vector<double> x;
    double sq = 0.0;
    for (const auto& c : v) {
      expect(c.is_number(), "non-numeric component");
      x.push_back(c.get<double>());
      sq += x.back() * x.back();
    }
    expect(std::abs(std::sqrt(sq) - 1.0) <= kUnitNormTolerance,
           "vector " + std::to_string(i) + " has norm " + std::to_string(std::sqrt(sq)));
    out.push_back(std::move(x));
  }
  return out;
}

bool close(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > 1e-6) return false;
  }
  return true;
}

}  // namespace

std::vector<ContractCheck> run_contract_suite(const std::string& base_url, const ContractOptions& options) {
  HttpAdapterClient client(base_url, options.token);
  const Json health = client.health();
  std::vector<ContractCheck> checks;
  auto check = [&](std::string name, const std::function<void()>& body) {
    ContractCheck c{std::move(name), false, {}};
    try {
      body();
      c.passed = true;
    } catch (const Failure& f) {
      c.detail = f.why;
    } catch (const std::exception& e) {
      c.detail = e.what();
    }
    checks.push_back(std::move(c));
  };

  std::size_t dim = 0;
  check("health_fields", [&] {
    for (const char* k : {"mode", "embed_model", "chat_model"}) {
      expect(health.contains(k) && health[k].is_string(), std::string("/health lacks string \"") + k + "\"");
    }
    expect(health.contains("dim") && health["dim"].is_number_unsigned() && health["dim"] > 0,
           "/health lacks positive integer \"dim\"");
    dim = health["dim"].get<std::size_t>();
  });

  const std::vector<std::string> texts = {"a red dress with long sleeves", "two dogs on a beach", "a"};
  check("embed_text_unit_norm", [&] {
    vectors_of(client.post("/v1/embed/text", Json{{"texts", texts}}), texts.size(), dim);
  });
  check("embed_text_order_preserved", [&] {
    const auto fwd = vectors_of(client.post("/v1/embed/text", Json{{"texts", texts}}), texts.size(), dim);
    const std::vector<std::string> rev(texts.rbegin(), texts.rend());
    const auto back = vectors_of(client.post("/v1/embed/text", Json{{"texts", rev}}), rev.size(), dim);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      expect(close(fwd[i], back[texts.size() - 1 - i]), "vector for \"" + texts[i] + "\" depends on position");
    }
  });
  check("embed_text_deterministic", [&] {
    const auto a = vectors_of(client.post("/v1/embed/text", Json{{"texts", {"a"}}}), 1, dim);
    const auto b = vectors_of(client.post("/v1/embed/text", Json{{"texts", {"a"}}}), 1, dim);
    expect(a == b, "repeated request gave different vectors");
  });
  check("embed_text_empty_is_400", [&] {
    const auto res = client.post("/v1/embed/text", Json{{"texts", Json::array()}});
    expect(res.status == 400, "expected 400, got " + std::to_string(res.status));
  });

  check("embed_image_unit_norm", [&] {
    vectors_of(client.post("/v1/embed/image", Json{{"locators", options.image_locators}}),
               options.image_locators.size(), dim);
  });
  check("embed_image_order_preserved", [&] {
    const auto& locs = options.image_locators;
    const auto fwd = vectors_of(client.post("/v1/embed/image", Json{{"locators", locs}}), locs.size(), dim);
    const std::vector<std::string> rev(locs.rbegin(), locs.rend());
    const auto back = vectors_of(client.post("/v1/embed/image", Json{{"locators", rev}}), rev.size(), dim);
    for (std::size_t i = 0; i < locs.size(); ++i) {
      expect(close(fwd[i], back[locs.size() - 1 - i]), "vector for \"" + locs[i] + "\" depends on position");
    }
  });
  check("embed_image_deterministic", [&] {
    const Json body{{"locators", {options.image_locators.front()}}};
    expect(vectors_of(client.post("/v1/embed/image", body), 1, dim) ==
               vectors_of(client.post("/v1/embed/image", body), 1, dim),
           "repeated request gave different vectors");
  });
  check("embed_image_empty_is_400", [&] {
    const auto res = client.post("/v1/embed/image", Json{{"locators", Json::array()}});
    expect(res.status == 400, "expected 400, got " + std::to_string(res.status));
  });
  check("embed_image_unreadable_is_404", [&] {
    const auto res = client.post("/v1/embed/image", Json{{"locators", {options.unreadable_locator}}});
    expect(res.status == 404, "expected 404, got " + std::to_string(res.status));
    expect(res.body.dump().find(options.unreadable_locator) != std::string::npos, "404 body does not name the locator");
  });

  check("chat_greedy_deterministic", [&] {
    auto req = build_prompt(Scale::image, PromptMode::circot_few_shot, options.image_locators.front(),
                            "make it red and add a hat");
    req.decoding.temperature = 0.0;
    const auto a = client.post("/v1/chat", to_wire(req));
    const auto b = client.post("/v1/chat", to_wire(req));
    expect(a.status == 200 && b.status == 200, "expected 200, got " + std::to_string(a.status));
    expect(a.body.is_object() && a.body.contains("text") && a.body["text"].is_string(), "body lacks string \"text\"");
    expect(a.body == b.body, "identical greedy requests gave different replies");
  });
  check("chat_missing_messages_is_400", [&] {
    const auto res = client.post("/v1/chat", Json{{"temperature", 0.0}, {"max_tokens", 16}});
    expect(res.status == 400, "expected 400, got " + std::to_string(res.status));
  });
  return checks;
}

}  // namespace cotmr
