#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cotmr/backends.hpp"
#include "cotmr/evaluation.hpp"
#include "cotmr/reasoning.hpp"
#include "cotmr/scoring.hpp"

namespace cotmr {

// Every effective value of a run. Keys of to_json()/from_json() double as the
// config-file keys and, with '_' spelled '-', as CLI flag names.
struct RunConfig {
  std::filesystem::path queries;
  std::filesystem::path gallery;
  std::string benchmark = "synthetic";
  std::optional<double> lambda;  // unset: benchmark default
  std::optional<double> mu;
  std::string components = "base,pos,neg";
  std::string eo_agg = "concat";
  std::string neo_agg = "mean";
  std::string plan;  // unset: benchmark name
  // "mock:<canned.jsonl>" or an adapter URL.
  std::string chat_backend;
  // "hash:<dim>", "table:<dir>" or an adapter URL.
  std::string embed_backend;
  std::string prompt_mode = "circot-fs";
  std::string process = "two";
  std::filesystem::path prompt_dir;  // empty: built-in templates
  std::filesystem::path out = "run";
  std::uint64_t seed = 0;
  int retry_budget = 2;
  std::size_t concurrency = 4;
  std::size_t embed_batch = 256;
  bool dump_scores = true;

  Json to_json() const;
  // Unknown keys and wrongly typed values throw Error{InvalidConfig}. Relative
  // paths are resolved against base_dir.
  static RunConfig from_json(const Json& object, const std::filesystem::path& base_dir = {});
  // "key = value" lines; '#' starts a comment.
  static Json parse_key_values(std::string_view text);
  // A config file holding either one JSON object or key=value lines.
  static RunConfig load(const std::filesystem::path& path);
  // Overlays the keys present in `overrides` onto this config.
  void merge(const Json& overrides, const std::filesystem::path& base_dir = {});

  BenchmarkKind benchmark_kind() const;
  Hyperparams hyperparams() const;  // explicit lambda/mu, else benchmark defaults
  MgsConfig mgs() const;
  MetricPlan metric_plan() const;
  PromptMode mode() const;
  ProcessPolicy policy() const;
};

inline constexpr std::string_view kEmbeddingsFile = "gallery.emb.jsonl";
inline constexpr std::string_view kRankingsFile = "rankings.jsonl";
inline constexpr std::string_view kScoresFile = "scores.jsonl";
inline constexpr std::string_view kReportFile = "report.json";
inline constexpr std::string_view kRankingsFormat = "cotmr-rankings-v1";
inline constexpr std::string_view kScoresFormat = "cotmr-scores-v1";

// {"hash": ..., "config": {...}}. Input files enter by content digest, not by
// path; the output directory, concurrency and embed batch size are left out,
// so runs that differ only in where or how fast they ran share a fingerprint.
Json fingerprint(const RunConfig& config);

// Reasoning-relevant slice of a fingerprint; traces are reusable across runs
// that agree on it.
Json reasoning_fingerprint(const Json& fingerprint);

std::unique_ptr<ChatBackend> make_chat_backend(const std::string& spec);
std::unique_ptr<EmbedBackend> make_embed_backend(const std::string& spec);

DatasetSplit load_run_split(const RunConfig& config);

struct EmbedSummary {
  std::filesystem::path path;
  std::size_t records = 0;
  std::size_t dim = 0;
};
EmbedSummary run_embed(const RunConfig& config);

// Writes <out>/traces.jsonl.
ReasonRun run_reason(const RunConfig& config);

struct RankingsFile {
  Json fingerprint;
  std::map<std::string, Ranking> rankings;
  std::map<std::string, std::string> failed;  // query_id -> error kind
  std::vector<std::string> order;             // record order
};

void write_rankings(const std::filesystem::path& path, const RankingsFile& file);
RankingsFile read_rankings(const std::filesystem::path& path);

struct RetrieveSummary {
  std::size_t ranked = 0;
  std::size_t failed = 0;
};
// Scores every query from <out>/traces.jsonl (plus edits), reasoning first when
// no traces exist. Writes rankings.jsonl and, when enabled, scores.jsonl.
// Throws Error{Io} naming `embed` when the embeddings file is absent, and
// Error{FingerprintMismatch} when traces were produced under another
// reasoning configuration and force is false.
RetrieveSummary run_retrieve(const RunConfig& config, bool force = false);

// Aggregates rankings files (shards are merged) against the split. All inputs
// must share one fingerprint whose split digests match the split evaluated,
// unless force. Writes <out>/report.json.
EvalReport run_evaluate(const RunConfig& config, const std::vector<std::filesystem::path>& rankings,
                        bool force = false);

struct AblationPoint {
  double lambda = 0.0;
  double mu = 0.0;
  std::string components;
  EvalReport report;
};
// One report per grid point from cached traces; similarity rows are computed
// once per query. Writes <out>/ablation.tsv and <out>/ablation.json.
// Throws Error{InvalidConfig} on an empty grid.
std::vector<AblationPoint> run_ablate(const RunConfig& config, const std::vector<double>& lambdas,
                                      const std::vector<double>& mus, const std::vector<std::string>& component_sets);

// Per-scale transcript of stored traces (all queries when query_id is empty).
// Throws Error{UnknownQuery}.
std::string trace_show(const RunConfig& config, const std::string& query_id = {});

// Stores an edited reply for one query and scale; see edit_and_replay.
ReasoningOutput trace_edit(const RunConfig& config, const std::string& query_id, Scale scale,
                           const std::string& reply);

struct ReplaySummary {
  std::vector<std::string> rescored;
  EvalReport report;
};
// Re-scores only the edited queries on top of <out>/rankings.jsonl, writing
// <out>/replay/{rankings.jsonl,scores.jsonl,report.json}.
ReplaySummary trace_replay(const RunConfig& config);

// Writes a synthetic fixture as a self-contained workspace: queries.jsonl,
// gallery.jsonl, canned.jsonl, encoder/, planted.json and a run.conf wired to
// the mock backends.
void write_synthetic_workspace(const SyntheticFixture& fixture, std::uint64_t seed, const std::filesystem::path& dir);

}  // namespace cotmr
