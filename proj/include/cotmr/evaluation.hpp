#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cotmr/jsonl.hpp"
#include "cotmr/query_model.hpp"
#include "cotmr/scoring.hpp"

namespace cotmr {

// 1 if any target is among the first k ranked ids, else 0.
// Throws Error{KOutOfRange} unless 1 <= k <= ranking length.
double recall_at_k(const Ranking& ranking, const std::vector<std::string>& targets, std::size_t k);

// Recall@k after restricting the ranking to the subset ids (relative order kept).
// Throws Error{SubsetNotInGallery} if a subset id is not ranked,
// Error{KOutOfRange} unless 1 <= k <= |subset|.
double recall_subset_at_k(const Ranking& ranking, const std::vector<std::string>& subset,
                          const std::vector<std::string>& targets, std::size_t k);

// AP@k = (1 / min(k, |targets|)) * sum_{i<=k} precision@i * rel(i).
double average_precision_at_k(const Ranking& ranking, const std::vector<std::string>& targets, std::size_t k);

// 1-based position of the best-ranked target.
std::size_t best_target_rank(const Ranking& ranking, const std::vector<std::string>& targets);

struct MetricPlan {
  std::string name;
  std::vector<std::size_t> recall_ks;
  std::vector<std::size_t> subset_ks;
  std::vector<std::size_t> map_ks;
  bool r_mean = false;    // mean(R@10, R@50)
  bool cirr_avg = false;  // mean(R@5, R_sub@1)

  // fashioniq | cirr | circo | synthetic
  static MetricPlan named(std::string_view name);
  static MetricPlan for_benchmark(BenchmarkKind kind);
};

struct EvalReport {
  std::string split_name;
  std::string plan;
  std::vector<std::pair<std::string, double>> metrics;     // name -> [0, 1], plan order
  std::vector<std::pair<std::string, double>> aggregates;  // R_mean / Avg
  std::size_t n_queries = 0;
  std::size_t n_evaluated = 0;
  std::size_t n_failed = 0;
  std::vector<std::string> failed_queries;
  double mean_target_rank = 0.0;
  Json fingerprint;

  double metric(std::string_view name) const;  // metrics and aggregates; throws if absent
  Json to_json() const;
  // Plain-text table: one header row of metric names, one row of x100 values.
  std::string render_table() const;
};

inline constexpr std::string_view kReportFormat = "cotmr-report-v1";

// Values rendered x100 with two decimals.
std::string percent(double value);

// One ranking per non-failed query is required. Means are summed in query_id
// order. Throws Error{MissingRanking} for an absent ranking or a query lacking
// the subset a subset metric needs.
EvalReport evaluate_split(const std::map<std::string, Ranking>& rankings, const DatasetSplit& split,
                          const MetricPlan& plan, const std::set<std::string>& failed = {},
                          Json fingerprint = Json::object());

}  // namespace cotmr
