#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cotmr/chat.hpp"
#include "cotmr/prompting.hpp"
#include "cotmr/query_model.hpp"

namespace cotmr {

inline constexpr std::size_t kMaxObjects = 10;

// Parsed multi-scale result for one query.
struct ReasoningOutput {
  std::string query_id;
  std::string target_caption;
  std::vector<std::string> existent_objects;
  std::vector<std::string> nonexistent_objects;
  std::string trace_image_scale;   // raw reply that produced the caption
  std::string trace_object_scale;  // raw reply that produced the object lists

  bool operator==(const ReasoningOutput&) const = default;
};

enum class ProcessPolicy { two_process, one_process };

std::string_view to_string(ProcessPolicy policy);  // "two" | "one"
ProcessPolicy parse_process_policy(std::string_view name);

// Last "FINAL_CAPTION:" line, trimmed.
// Throws ParseError with kind MissingMarker or EmptyCaption.
std::string parse_image_reply(std::string_view raw);

struct ObjectLists {
  std::vector<std::string> existent;
  std::vector<std::string> nonexistent;

  bool operator==(const ObjectLists&) const = default;
};

// Last occurrence of each object marker; the bracketed payload must be a JSON
// array of strings. Items are trimmed, blanks dropped, deduplicated in order
// and capped at kMaxObjects. Throws ParseError with kind MissingMarker (naming
// the marker) or PayloadNotArray.
ObjectLists parse_object_reply(std::string_view raw);

inline constexpr std::string_view kRetryReminder =
    "Your previous reply omitted the required final markers. End with them now.";

enum class RetryAction { retry, escalate };

struct RetryPolicy {
  int budget = 2;

  // attempt counts failed parses so far (>= 1).
  RetryAction next(int attempt) const { return attempt <= budget ? RetryAction::retry : RetryAction::escalate; }
};

// Same request with the reminder appended as a further user message.
ChatRequest with_retry_reminder(const ChatRequest& request);

// What happened on one reasoning call (image, object, or merged).
struct ScaleTrace {
  std::string scale;  // "image" | "object" | "merged"
  std::string request_text;
  std::string raw_reply;  // last reply received
  int retry_count = 0;
  std::string backend_id;
  std::string timestamp;
  // Parse outcome of raw_reply: either parsed fields or an error kind.
  bool ok = false;
  std::string error;  // ErrorKind name when !ok
  std::string caption;
  ObjectLists objects;

  bool operator==(const ScaleTrace&) const = default;
};

struct ReasoningTrace {
  std::string query_id;
  std::string reference_image;
  std::string modification_text;
  std::string prompt_mode;
  std::string process_policy;
  bool edited = false;
  std::vector<ScaleTrace> scales;
  // Set when reasoning failed; holds the ErrorKind name.
  std::optional<std::string> failure;

  bool operator==(const ReasoningTrace&) const = default;
};

// Recomputes the parse outcome fields of a ScaleTrace from its raw reply.
void reparse(ScaleTrace& scale);

// Builds the structured output from a successful trace.
// Throws ParseError{ParseFailure} if any scale did not parse.
ReasoningOutput output_from_trace(const ReasoningTrace& trace);

struct ReasonOptions {
  RetryPolicy retry;
  const PromptLibrary* library = &PromptLibrary::builtin();
  Decoding decoding;
  // Timestamp source for traces; defaults to UTC wall-clock ISO-8601.
  std::function<std::string()> clock;
};

// Runs the reasoning passes for one query. two_process: image-scale call, then
// object-scale call. one_process: one merged call carrying all three markers.
// trace_out, when given, is filled before returning or throwing.
// Throws Error{BackendUnavailable}, ParseError{ParseFailure} or
// ParseError{EmptyCaption} once the retry budget is spent.
ReasoningOutput reason(const ComposedQuery& query, PromptMode mode, ProcessPolicy policy, ChatBackend& backend,
                       const ReasonOptions& options = {}, ReasoningTrace* trace_out = nullptr);

struct ReasonRun {
  std::vector<ReasoningTrace> traces;  // split order
  std::size_t failed = 0;
  bool backend_unavailable = false;
};

// Reasons every query with at most `concurrency` calls in flight. Per-query
// failures are recorded in the trace and counted. Output order follows the
// split regardless of completion order.
ReasonRun reason_split(const DatasetSplit& split, PromptMode mode, ProcessPolicy policy, ChatBackend& backend,
                       const ReasonOptions& options = {}, std::size_t concurrency = 4);

inline constexpr std::string_view kTraceFormat = "cotmr-trace-v1";
inline constexpr std::string_view kTraceFile = "traces.jsonl";
inline constexpr std::string_view kEditedTraceFile = "traces.edited.jsonl";

Json trace_to_json(const ReasoningTrace& trace);
ReasoningTrace trace_from_json(const Json& record);

// header may carry extra metadata (fingerprint); "format" is always set.
void write_traces(const std::filesystem::path& path, const std::vector<ReasoningTrace>& traces,
                  Json header = Json::object());
std::vector<ReasoningTrace> read_traces(const std::filesystem::path& path);

// Traces of a run directory with edited records (if any) replacing originals.
std::vector<ReasoningTrace> load_run_traces(const std::filesystem::path& dir);

// Replaces the stored reply of one query at one scale, re-parses it, and saves
// the edited trace (edited = true) to traces.edited.jsonl beside trace_path.
// The original file is left untouched. For one-process traces either scale
// addresses the single merged reply.
// Throws Error{UnknownQuery} or ParseError{ParseFailure}.
ReasoningOutput edit_and_replay(const std::filesystem::path& trace_path, const std::string& query_id, Scale scale,
                                const std::string& edited_reply);

}  // namespace cotmr
