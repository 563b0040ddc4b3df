#include "cotmr/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_set>

#include "cotmr/error.hpp"

namespace cotmr {

namespace {

void check_k(std::size_t k, std::size_t limit, const std::string& query_id, const char* what) {
  if (k < 1 || k > limit) {
    throw Error(ErrorKind::KOutOfRange, "query \"" + query_id + "\": " + what + " k=" + std::to_string(k) +
                                            " outside [1, " + std::to_string(limit) + "]");
  }
}

void check_targets(const std::vector<std::string>& targets, const std::string& query_id) {
  if (targets.empty()) throw Error(ErrorKind::MalformedRecord, "query \"" + query_id + "\" has no targets");
}

}  // namespace

double recall_at_k(const Ranking& ranking, const std::vector<std::string>& targets, std::size_t k) {
  check_k(k, ranking.items.size(), ranking.query_id, "Recall@k");
  check_targets(targets, ranking.query_id);
  for (std::size_t i = 0; i < k; ++i) {
    if (std::find(targets.begin(), targets.end(), ranking.items[i].image_id) != targets.end()) return 1.0;
  }
  return 0.0;
}

double recall_subset_at_k(const Ranking& ranking, const std::vector<std::string>& subset,
                          const std::vector<std::string>& targets, std::size_t k) {
  check_k(k, subset.size(), ranking.query_id, "Recall_subset@k");
  check_targets(targets, ranking.query_id);
  const std::unordered_set<std::string_view> members(subset.begin(), subset.end());
  std::vector<std::string_view> restricted;
  restricted.reserve(subset.size());
  for (const auto& item : ranking.items) {
    if (members.contains(item.image_id)) restricted.push_back(item.image_id);
  }
  if (restricted.size() != members.size()) {
    throw Error(ErrorKind::SubsetNotInGallery,
                "query \"" + ranking.query_id + "\": subset ids missing from the ranked gallery");
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (std::find(targets.begin(), targets.end(), restricted[i]) != targets.end()) return 1.0;
  }
  return 0.0;
}

double average_precision_at_k(const Ranking& ranking, const std::vector<std::string>& targets, std::size_t k) {
  check_k(k, ranking.items.size(), ranking.query_id, "mAP@k");
  check_targets(targets, ranking.query_id);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (std::find(targets.begin(), targets.end(), ranking.items[i].image_id) != targets.end()) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(std::min(k, targets.size()));
}

std::size_t best_target_rank(const Ranking& ranking, const std::vector<std::string>& targets) {
  for (std::size_t i = 0; i < ranking.items.size(); ++i) {
    if (std::find(targets.begin(), targets.end(), ranking.items[i].image_id) != targets.end()) return i + 1;
  }
  throw Error(ErrorKind::DanglingReference, "query \"" + ranking.query_id + "\": no target appears in the ranking");
}

MetricPlan MetricPlan::named(std::string_view name) {
  MetricPlan p;
  p.name = std::string(name);
  if (name == "fashioniq") {
    p.recall_ks = {10, 50};
    p.r_mean = true;
  } else if (name == "cirr") {
    p.recall_ks = {1, 5, 10, 50};
    p.subset_ks = {1, 2, 3};
    p.cirr_avg = true;
  } else if (name == "circo") {
    p.map_ks = {5, 10, 25, 50};
  } else if (name == "synthetic") {
    p.recall_ks = {1, 5, 10};
    p.subset_ks = {1, 2, 3};
    p.map_ks = {5};
  } else {
    throw Error(ErrorKind::InvalidConfig,
                "unknown metric plan \"" + std::string(name) + "\" (expected fashioniq|cirr|circo|synthetic)");
  }
  return p;
}

MetricPlan MetricPlan::for_benchmark(BenchmarkKind kind) { return named(to_string(kind)); }

std::string percent(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", value * 100.0);
  return buf;
}

double EvalReport::metric(std::string_view name) const {
  for (const auto* list : {&metrics, &aggregates}) {
    for (const auto& [k, v] : *list) {
      if (k == name) return v;
    }
  }
  throw Error(ErrorKind::InvalidConfig, "report has no metric \"" + std::string(name) + "\"");
}

Json EvalReport::to_json() const {
  Json j;
  j["format"] = kReportFormat;
  j["split"] = split_name;
  j["plan"] = plan;
  Json m = Json::object(), m100 = Json::object(), a = Json::object(), a100 = Json::object();
  for (const auto& [k, v] : metrics) {
    m[k] = v;
    m100[k] = percent(v);
  }
  for (const auto& [k, v] : aggregates) {
    a[k] = v;
    a100[k] = percent(v);
  }
  j["metrics"] = std::move(m);
  j["metrics_x100"] = std::move(m100);
  j["aggregates"] = std::move(a);
  j["aggregates_x100"] = std::move(a100);
  j["n_queries"] = n_queries;
  j["n_evaluated"] = n_evaluated;
  j["n_failed"] = n_failed;
  j["failed_queries"] = failed_queries;
  j["mean_target_rank"] = mean_target_rank;
  j["fingerprint"] = fingerprint;
  return j;
}

std::string EvalReport::render_table() const {
  std::vector<std::pair<std::string, std::string>> cols;
  for (const auto& [k, v] : metrics) cols.emplace_back(k, percent(v));
  for (const auto& [k, v] : aggregates) cols.emplace_back(k, percent(v));
  std::string header, values;
  for (const auto& [k, v] : cols) {
    const std::size_t w = std::max<std::size_t>(std::max(k.size(), v.size()), 6) + 2;
    header += k + std::string(w - k.size(), ' ');
    values += v + std::string(w - v.size(), ' ');
  }
  auto rstrip = [](std::string s) {
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
  };
  std::string out = split_name + " (" + plan + "): " + std::to_string(n_evaluated) + " evaluated, " +
                    std::to_string(n_failed) + " failed\n";
  out += rstrip(header) + "\n" + rstrip(values) + "\n";
  return out;
}

EvalReport evaluate_split(const std::map<std::string, Ranking>& rankings, const DatasetSplit& split,
                          const MetricPlan& plan, const std::set<std::string>& failed, Json fingerprint) {
  EvalReport report;
  report.split_name = split.name;
  report.plan = plan.name;
  report.fingerprint = std::move(fingerprint);
  report.n_queries = split.queries.size();

  std::vector<const ComposedQuery*> evaluated;
  for (const auto& q : split.queries) {
    if (failed.contains(q.query_id)) {
      report.failed_queries.push_back(q.query_id);
      continue;
    }
    if (!rankings.contains(q.query_id)) {
      throw Error(ErrorKind::MissingRanking, "no ranking for query \"" + q.query_id + "\"");
    }
    if (!plan.subset_ks.empty() && !q.subset) {
      throw Error(ErrorKind::MissingRanking,
                  "plan \"" + plan.name + "\" needs subset rankings but query \"" + q.query_id + "\" has no subset");
    }
    evaluated.push_back(&q);
  }
  std::sort(evaluated.begin(), evaluated.end(),
            [](const ComposedQuery* a, const ComposedQuery* b) { return a->query_id < b->query_id; });
  std::sort(report.failed_queries.begin(), report.failed_queries.end());
  report.n_evaluated = evaluated.size();
  report.n_failed = report.failed_queries.size();

  auto mean_of = [&](auto per_query) {
    if (evaluated.empty()) return 0.0;
    double sum = 0.0;
    for (const auto* q : evaluated) sum += per_query(*q, rankings.at(q->query_id));
    return sum / static_cast<double>(evaluated.size());
  };

  for (auto k : plan.recall_ks) {
    report.metrics.emplace_back("R@" + std::to_string(k), mean_of([&](const ComposedQuery& q, const Ranking& r) {
                                  return recall_at_k(r, q.targets, k);
                                }));
  }
  for (auto k : plan.subset_ks) {
    report.metrics.emplace_back("R_sub@" + std::to_string(k), mean_of([&](const ComposedQuery& q, const Ranking& r) {
                                  return recall_subset_at_k(r, *q.subset, q.targets, k);
                                }));
  }
  for (auto k : plan.map_ks) {
    report.metrics.emplace_back("mAP@" + std::to_string(k), mean_of([&](const ComposedQuery& q, const Ranking& r) {
                                  return average_precision_at_k(r, q.targets, k);
                                }));
  }
  if (plan.r_mean) report.aggregates.emplace_back("R_mean", (report.metric("R@10") + report.metric("R@50")) / 2.0);
  if (plan.cirr_avg) report.aggregates.emplace_back("Avg", (report.metric("R@5") + report.metric("R_sub@1")) / 2.0);
  report.mean_target_rank = mean_of([](const ComposedQuery& q, const Ranking& r) {
    return static_cast<double>(best_target_rank(r, q.targets));
  });
  return report;
}

}  // namespace cotmr
