#include "cotmr/reasoning.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <mutex>
#include <thread>
#include <unordered_set>

#include "cotmr/error.hpp"

namespace cotmr {

namespace {

constexpr std::string_view kWhitespace = " \t\r\n\f\v";

std::string_view trim_view(std::string_view s) {
  const auto first = s.find_first_not_of(kWhitespace);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(kWhitespace);
  return s.substr(first, last - first + 1);
}

bool is_word_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

// Position just past the last standalone occurrence of marker, or npos.
// "Standalone" rules out EXISTENT_OBJECTS: matching inside NONEXISTENT_OBJECTS:.
std::size_t find_last_marker(std::string_view raw, std::string_view marker) {
  auto pos = raw.rfind(marker);
  while (pos != std::string_view::npos) {
    if (pos == 0 || !is_word_char(raw[pos - 1])) return pos + marker.size();
    pos = raw.rfind(marker, pos - 1);
  }
  return std::string_view::npos;
}

[[noreturn]] void parse_fail(ErrorKind kind, const std::string& message, std::string_view raw) {
  throw ParseError(kind, kind, message, std::string(raw));
}

// Extent of a bracketed JSON array starting at raw[start] == '[', honoring
// string literals and escapes. Returns npos when unbalanced.
std::size_t matching_bracket(std::string_view raw, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = start; i < raw.size(); ++i) {
    const char c = raw[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '[') {
      ++depth;
    } else if (c == ']') {
      if (--depth == 0) return i;
    }
  }
  return std::string_view::npos;
}

std::vector<std::string> parse_object_payload(std::string_view raw, std::string_view marker) {
  const auto after = find_last_marker(raw, marker);
  if (after == std::string_view::npos) {
    parse_fail(ErrorKind::MissingMarker, "missing marker " + std::string(marker), raw);
  }
  const auto start = raw.find_first_not_of(kWhitespace, after);
  if (start == std::string_view::npos || raw[start] != '[') {
    parse_fail(ErrorKind::PayloadNotArray, std::string(marker) + " payload is not a bracketed array", raw);
  }
  const auto end = matching_bracket(raw, start);
  if (end == std::string_view::npos) {
    parse_fail(ErrorKind::PayloadNotArray, std::string(marker) + " payload has unbalanced brackets", raw);
  }
  Json payload;
  try {
    payload = Json::parse(raw.substr(start, end - start + 1));
  } catch (const Json::exception&) {
    parse_fail(ErrorKind::PayloadNotArray, std::string(marker) + " payload is not valid JSON", raw);
  }
  if (!payload.is_array()) {
    parse_fail(ErrorKind::PayloadNotArray, std::string(marker) + " payload is not an array", raw);
  }
  std::vector<std::string> items;
  std::unordered_set<std::string> seen;
  for (const auto& v : payload) {
    if (!v.is_string()) {
      parse_fail(ErrorKind::PayloadNotArray, std::string(marker) + " payload must contain only strings", raw);
    }
    std::string item(trim_view(v.get_ref<const std::string&>()));
    if (item.empty() || items.size() == kMaxObjects) continue;
    if (seen.insert(item).second) items.push_back(std::move(item));
  }
  return items;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Sends request, retrying on parse failures per policy. `parse` fills the
// outcome fields of the trace and throws ParseError on failure.
template <typename Parse>
void run_with_retries(const ChatRequest& request, ChatBackend& backend, const ReasonOptions& options,
                      ScaleTrace& trace, Parse parse) {
  trace.request_text = render_text(request);
  trace.backend_id = backend.id();
  trace.timestamp = options.clock ? options.clock() : utc_now();
  ChatRequest current = request;
  for (int attempt = 1;; ++attempt) {
    trace.raw_reply = backend.complete(current);
    try {
      parse(trace);
      trace.ok = true;
      trace.error.clear();
      return;
    } catch (const ParseError& e) {
      trace.ok = false;
      trace.error = std::string(to_string(e.cause()));
      if (options.retry.next(attempt) == RetryAction::escalate) {
        const ErrorKind kind = e.cause() == ErrorKind::EmptyCaption ? ErrorKind::EmptyCaption : ErrorKind::ParseFailure;
        throw ParseError(kind, e.cause(),
                         trace.scale + " reply unparseable after " + std::to_string(attempt) +
                             " attempt(s): " + e.what(),
                         trace.raw_reply, attempt);
      }
      ++trace.retry_count;
      current = with_retry_reminder(request);
    }
  }
}

void parse_scale_fields(ScaleTrace& s) {
  s.caption.clear();
  s.objects = {};
  if (s.scale == "image" || s.scale == "merged") s.caption = parse_image_reply(s.raw_reply);
  if (s.scale == "object" || s.scale == "merged") s.objects = parse_object_reply(s.raw_reply);
}

Json scale_to_json(const ScaleTrace& s) {
  Json outcome;
  outcome["ok"] = s.ok;
  if (s.ok) {
    if (s.scale != "object") outcome["caption"] = s.caption;
    if (s.scale != "image") {
      outcome["existent_objects"] = s.objects.existent;
      outcome["nonexistent_objects"] = s.objects.nonexistent;
    }
  } else {
    outcome["error"] = s.error;
  }
  Json j;
  j["scale"] = s.scale;
  j["request"] = s.request_text;
  j["reply"] = s.raw_reply;
  j["outcome"] = std::move(outcome);
  j["retry_count"] = s.retry_count;
  j["backend"] = s.backend_id;
  j["timestamp"] = s.timestamp;
  return j;
}

template <typename T>
T field(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorKind::MalformedRecord, std::string("trace record missing \"") + key + "\"");
  try {
    return it->get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorKind::MalformedRecord, std::string("trace field \"") + key + "\" has the wrong type");
  }
}

ScaleTrace scale_from_json(const Json& j) {
  ScaleTrace s;
  s.scale = field<std::string>(j, "scale");
  s.request_text = field<std::string>(j, "request");
  s.raw_reply = field<std::string>(j, "reply");
  s.retry_count = field<int>(j, "retry_count");
  s.backend_id = field<std::string>(j, "backend");
  s.timestamp = field<std::string>(j, "timestamp");
  const auto outcome = field<Json>(j, "outcome");
  s.ok = field<bool>(outcome, "ok");
  if (s.ok) {
    if (s.scale != "object") s.caption = field<std::string>(outcome, "caption");
    if (s.scale != "image") {
      s.objects.existent = field<std::vector<std::string>>(outcome, "existent_objects");
      s.objects.nonexistent = field<std::vector<std::string>>(outcome, "nonexistent_objects");
    }
  } else {
    s.error = field<std::string>(outcome, "error");
  }
  return s;
}

}  // namespace

std::string_view to_string(ProcessPolicy policy) { return policy == ProcessPolicy::two_process ? "two" : "one"; }

ProcessPolicy parse_process_policy(std::string_view name) {
  if (name == "two") return ProcessPolicy::two_process;
  if (name == "one") return ProcessPolicy::one_process;
  throw Error(ErrorKind::InvalidConfig, "unknown process policy \"" + std::string(name) + "\" (expected two|one)");
}

std::string parse_image_reply(std::string_view raw) {
  const auto after = find_last_marker(raw, kCaptionMarker);
  if (after == std::string_view::npos) {
    parse_fail(ErrorKind::MissingMarker, "missing marker " + std::string(kCaptionMarker), raw);
  }
  auto end = raw.find('\n', after);
  if (end == std::string_view::npos) end = raw.size();
  const auto caption = trim_view(raw.substr(after, end - after));
  if (caption.empty()) parse_fail(ErrorKind::EmptyCaption, "caption after FINAL_CAPTION: is empty", raw);
  return std::string(caption);
}

ObjectLists parse_object_reply(std::string_view raw) {
  ObjectLists lists;
  lists.existent = parse_object_payload(raw, kExistentMarker);
  lists.nonexistent = parse_object_payload(raw, kNonexistentMarker);
  return lists;
}

ChatRequest with_retry_reminder(const ChatRequest& request) {
  ChatRequest out = request;
  out.messages.push_back({Role::user, {Part::text(std::string(kRetryReminder))}});
  return out;
}

void reparse(ScaleTrace& scale) {
  try {
    parse_scale_fields(scale);
    scale.ok = true;
    scale.error.clear();
  } catch (const ParseError& e) {
    scale.ok = false;
    scale.error = std::string(to_string(e.cause()));
    scale.caption.clear();
    scale.objects = {};
  }
}

ReasoningOutput output_from_trace(const ReasoningTrace& trace) {
  ReasoningOutput out;
  out.query_id = trace.query_id;
  bool have_caption = false;
  bool have_objects = false;
  for (const auto& s : trace.scales) {
    if (!s.ok) {
      const ErrorKind cause = s.error == "EmptyCaption"     ? ErrorKind::EmptyCaption
                              : s.error == "PayloadNotArray" ? ErrorKind::PayloadNotArray
                                                             : ErrorKind::MissingMarker;
      throw ParseError(ErrorKind::ParseFailure, cause, "query \"" + trace.query_id + "\" " + s.scale + " reply: " + s.error,
                       s.raw_reply);
    }
    if (s.scale == "image" || s.scale == "merged") {
      out.target_caption = s.caption;
      out.trace_image_scale = s.raw_reply;
      have_caption = true;
    }
    if (s.scale == "object" || s.scale == "merged") {
      out.existent_objects = s.objects.existent;
      out.nonexistent_objects = s.objects.nonexistent;
      out.trace_object_scale = s.raw_reply;
      have_objects = true;
    }
  }
  if (!have_caption || !have_objects) {
    throw ParseError(ErrorKind::ParseFailure, ErrorKind::MissingMarker,
                     "query \"" + trace.query_id + "\" trace is incomplete", {});
  }
  return out;
}

ReasoningOutput reason(const ComposedQuery& query, PromptMode mode, ProcessPolicy policy, ChatBackend& backend,
                       const ReasonOptions& options, ReasoningTrace* trace_out) {
  ReasoningTrace local;
  ReasoningTrace& trace = trace_out ? *trace_out : local;
  trace = {};
  trace.query_id = query.query_id;
  trace.reference_image = query.reference_image;
  trace.modification_text = query.modification_text;
  trace.prompt_mode = std::string(to_string(mode));
  trace.process_policy = std::string(to_string(policy));

  auto run = [&](const std::string& scale_name, const ChatRequest& request) {
    ChatRequest req = request;
    req.decoding = options.decoding;
    trace.scales.push_back({});
    trace.scales.back().scale = scale_name;
    run_with_retries(req, backend, options, trace.scales.back(), parse_scale_fields);
  };

  try {
    if (policy == ProcessPolicy::two_process) {
      run("image", build_prompt(Scale::image, mode, query.reference_image, query.modification_text, *options.library));
      run("object",
          build_prompt(Scale::object, mode, query.reference_image, query.modification_text, *options.library));
    } else {
      run("merged", build_merged_prompt(mode, query.reference_image, query.modification_text, *options.library));
    }
  } catch (const Error& e) {
    trace.failure = std::string(to_string(e.kind()));
    throw;
  }
  return output_from_trace(trace);
}

ReasonRun reason_split(const DatasetSplit& split, PromptMode mode, ProcessPolicy policy, ChatBackend& backend,
                       const ReasonOptions& options, std::size_t concurrency) {
  ReasonRun run;
  run.traces.resize(split.queries.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> failed{0};
  std::atomic<bool> unavailable{false};

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= split.queries.size()) return;
      if (unavailable) {
        // Skip the call once the backend is known to be down.
        auto& t = run.traces[i];
        t.query_id = split.queries[i].query_id;
        t.reference_image = split.queries[i].reference_image;
        t.modification_text = split.queries[i].modification_text;
        t.prompt_mode = std::string(to_string(mode));
        t.process_policy = std::string(to_string(policy));
        t.failure = std::string(to_string(ErrorKind::BackendUnavailable));
        ++failed;
        continue;
      }
      try {
        reason(split.queries[i], mode, policy, backend, options, &run.traces[i]);
      } catch (const Error& e) {
        ++failed;
        if (e.kind() == ErrorKind::BackendUnavailable) unavailable = true;
      }
    }
  };

  const std::size_t n_threads = std::max<std::size_t>(1, std::min(concurrency, split.queries.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  }
  run.failed = failed;
  run.backend_unavailable = unavailable;
  return run;
}

Json trace_to_json(const ReasoningTrace& trace) {
  Json j;
  j["query_id"] = trace.query_id;
  j["reference_image"] = trace.reference_image;
  j["modification_text"] = trace.modification_text;
  j["prompt_mode"] = trace.prompt_mode;
  j["process"] = trace.process_policy;
  j["edited"] = trace.edited;
  Json scales = Json::array();
  for (const auto& s : trace.scales) scales.push_back(scale_to_json(s));
  j["scales"] = std::move(scales);
  j["failure"] = trace.failure ? Json(*trace.failure) : Json(nullptr);
  return j;
}

ReasoningTrace trace_from_json(const Json& record) {
  ReasoningTrace t;
  t.query_id = field<std::string>(record, "query_id");
  t.reference_image = field<std::string>(record, "reference_image");
  t.modification_text = field<std::string>(record, "modification_text");
  t.prompt_mode = field<std::string>(record, "prompt_mode");
  t.process_policy = field<std::string>(record, "process");
  t.edited = field<bool>(record, "edited");
  for (const auto& s : field<Json>(record, "scales")) t.scales.push_back(scale_from_json(s));
  const auto failure = field<Json>(record, "failure");
  if (failure.is_string()) t.failure = failure.get<std::string>();
  return t;
}

void write_traces(const std::filesystem::path& path, const std::vector<ReasoningTrace>& traces, Json header) {
  Json h;
  h["format"] = kTraceFormat;
  for (auto& [k, v] : header.items()) {
    if (k != "format") h[k] = v;
  }
  std::vector<Json> records;
  records.reserve(traces.size());
  for (const auto& t : traces) records.push_back(trace_to_json(t));
  write_jsonl(path, h, records);
}

std::vector<ReasoningTrace> read_traces(const std::filesystem::path& path) {
  const auto doc = read_jsonl(path, kTraceFormat);
  std::vector<ReasoningTrace> out;
  out.reserve(doc.records.size());
  for (const auto& [line, rec] : doc.records) {
    try {
      out.push_back(trace_from_json(rec));
    } catch (const Error& e) {
      throw Error(ErrorKind::MalformedRecord, path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ReasoningTrace> load_run_traces(const std::filesystem::path& dir) {
  auto traces = read_traces(dir / kTraceFile);
  const auto edited_path = dir / kEditedTraceFile;
  if (std::filesystem::exists(edited_path)) {
    for (auto& edited : read_traces(edited_path)) {
      for (auto& t : traces) {
        if (t.query_id == edited.query_id) t = edited;
      }
    }
  }
  return traces;
}

ReasoningOutput edit_and_replay(const std::filesystem::path& trace_path, const std::string& query_id, Scale scale,
                                const std::string& edited_reply) {
  const auto dir = trace_path.parent_path();
  const auto edited_path = dir / kEditedTraceFile;

  // Start from the latest edit of this query, if there is one, so edits compose.
  std::vector<ReasoningTrace> edited_traces;
  if (std::filesystem::exists(edited_path)) edited_traces = read_traces(edited_path);
  std::optional<ReasoningTrace> base;
  for (const auto& t : edited_traces) {
    if (t.query_id == query_id) base = t;
  }
  if (!base) {
    for (const auto& t : read_traces(trace_path)) {
      if (t.query_id == query_id) base = t;
    }
  }
  if (!base) throw Error(ErrorKind::UnknownQuery, "no trace for query \"" + query_id + "\" in " + trace_path.string());

  ReasoningTrace trace = *base;
  const std::string wanted(to_string(scale));
  ScaleTrace* target = nullptr;
  for (auto& s : trace.scales) {
    if (s.scale == wanted || s.scale == "merged") target = &s;
  }
  if (!target) {
    trace.scales.push_back({});
    target = &trace.scales.back();
    target->scale = wanted;
  }
  target->raw_reply = edited_reply;
  reparse(*target);
  if (!target->ok) {
    const ErrorKind cause = target->error == "EmptyCaption"     ? ErrorKind::EmptyCaption
                            : target->error == "PayloadNotArray" ? ErrorKind::PayloadNotArray
                                                                 : ErrorKind::MissingMarker;
    throw ParseError(ErrorKind::ParseFailure, cause, "edited " + wanted + " reply does not parse: " + target->error,
                     edited_reply);
  }
  trace.edited = true;
  trace.failure.reset();
  auto output = output_from_trace(trace);

  bool replaced = false;
  for (auto& t : edited_traces) {
    if (t.query_id == query_id) {
      t = trace;
      replaced = true;
    }
  }
  if (!replaced) edited_traces.push_back(trace);
  write_traces(edited_path, edited_traces, read_jsonl(trace_path, kTraceFormat).header);
  return output;
}

}  // namespace cotmr
