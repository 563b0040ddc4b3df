#pragma once

#include <optional>
#include <string>
#include <vector>

namespace cotmr {

struct ContractCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ContractOptions {
  std::optional<std::string> token;
  // Locators the adapter must be able to embed.
  std::vector<std::string> image_locators = {"synthetic://img_00000", "synthetic://img_00001"};
  // A locator the adapter must reject with 404 naming it.
  std::string unreadable_locator = "/nonexistent/cotmr-contract/missing.png";
};

// Wire-protocol conformance of a model adapter at base_url: /health fields,
// unit norms, order preservation, repeatability, greedy chat determinism and
// the documented error statuses. Throws Error{BackendUnavailable} when the
// adapter does not answer /health.
std::vector<ContractCheck> run_contract_suite(const std::string& base_url, const ContractOptions& options = {});

}  // namespace cotmr
