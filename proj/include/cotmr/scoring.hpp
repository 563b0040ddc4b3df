#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cotmr/embedding.hpp"
#include "cotmr/reasoning.hpp"

namespace cotmr {

enum class Aggregation { concat, mean };

std::string_view to_string(Aggregation agg);
Aggregation parse_aggregation(std::string_view name);

// Separator used to join existent (or, in concat mode, nonexistent) objects
// into a single text before embedding.
inline constexpr std::string_view kObjectSeparator = ", ";

std::string concat_objects(const std::vector<std::string>& objects);

// Weights and switches of the reward-penalty score
//   S = S_base + lambda * S_pos - mu * S_neg.
// Defaults are the full mechanism: all components, EO concatenated, NEO averaged.
struct MgsConfig {
  double lambda = 1.0;
  double mu = 0.5;
  bool use_base = true;
  bool use_pos = true;
  bool use_neg = true;
  Aggregation eo_aggregation = Aggregation::concat;
  Aggregation neo_aggregation = Aggregation::mean;

  // Throws Error{InvalidConfig} for negative weights or no enabled component.
  void validate() const;
  // "base,pos,neg" style list of enabled components.
  std::string components() const;
  // Parses "base,pos,neg" / "all" into the use_* switches.
  void set_components(std::string_view list);

  bool operator==(const MgsConfig&) const = default;
};

struct ScoreBreakdown {
  std::string query_id;
  std::vector<double> base;
  std::vector<double> pos;
  std::vector<double> neg;
  std::vector<double> fused;
  MgsConfig config;
};

struct RankedItem {
  std::string image_id;
  double score = 0.0;

  bool operator==(const RankedItem&) const = default;
};

// Full-gallery ordering: non-increasing score, ties by ascending image_id.
struct Ranking {
  std::string query_id;
  std::vector<RankedItem> items;

  bool operator==(const Ranking&) const = default;
};

// Elementwise mean of equally long rows; all-zero row of length n when rows is empty.
std::vector<double> mean_rows(const std::vector<std::vector<double>>& rows, std::size_t n);

// S_base: similarity of the target caption with every candidate.
std::vector<double> score_base(const ReasoningOutput& reasoning, const GalleryIndex& index, EmbeddingStore& embedder);

// S_pos: concat embeds the joined EO text once; mean averages per-object rows.
// Empty EO gives an all-zero row.
std::vector<double> score_pos(const ReasoningOutput& reasoning, const GalleryIndex& index, EmbeddingStore& embedder,
                              Aggregation aggregation = Aggregation::concat);

// S_neg: mean averages per-object rows so each unwanted object counts equally;
// concat embeds the joined NEO text once. Empty NEO gives an all-zero row.
std::vector<double> score_neg(const ReasoningOutput& reasoning, const GalleryIndex& index, EmbeddingStore& embedder,
                              Aggregation aggregation = Aggregation::mean);

// Combines component rows per config. Rows of disabled components may be empty;
// they are stored as zeros. Throws Error{LengthMismatch} or Error{InvalidConfig}.
ScoreBreakdown fuse(const std::string& query_id, std::vector<double> base, std::vector<double> pos,
                    std::vector<double> neg, const MgsConfig& config);

// Computes only the enabled components, then fuses.
ScoreBreakdown score(const ReasoningOutput& reasoning, const GalleryIndex& index, EmbeddingStore& embedder,
                     const MgsConfig& config);

// Throws Error{LengthMismatch} if the breakdown does not cover the gallery.
Ranking rank(const ScoreBreakdown& breakdown, const GalleryIndex& index);
Ranking rank_scores(const std::string& query_id, std::span<const double> scores, const std::vector<std::string>& ids);

// Every similarity row a query can need, so parameter sweeps never re-embed.
struct ComponentRows {
  std::string query_id;
  std::vector<double> base;
  std::vector<double> pos_concat;
  std::vector<double> pos_mean;
  std::vector<double> neg_mean;
  std::vector<double> neg_concat;
};

ComponentRows component_rows(const ReasoningOutput& reasoning, const GalleryIndex& index, EmbeddingStore& embedder);
ScoreBreakdown fuse(const ComponentRows& rows, const MgsConfig& config);

}  // namespace cotmr
