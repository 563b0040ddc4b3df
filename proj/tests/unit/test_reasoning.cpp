#include <gtest/gtest.h>

#include <chrono>
#include <functional>
#include <mutex>
#include <thread>

#include "cotmr/backends.hpp"
#include "cotmr/error.hpp"
#include "cotmr/reasoning.hpp"
#include "cotmr/synthetic.hpp"
#include "oracles.hpp"

namespace cotmr {
namespace {

namespace fs = std::filesystem;

// Replies via a callback; records every request.
class ScriptedBackend : public ChatBackend {
 public:
  explicit ScriptedBackend(std::function<std::string(const ChatRequest&)> fn) : fn_(std::move(fn)) {}
  std::string id() const override { return "scripted"; }
  std::string complete(const ChatRequest& request) override {
    {
      std::lock_guard lock(mu_);
      requests.push_back(request);
    }
    return fn_(request);
  }
  std::vector<ChatRequest> requests;

 private:
  std::function<std::string(const ChatRequest&)> fn_;
  std::mutex mu_;
};

const std::string kGoodImage = "reasoning\nFINAL_CAPTION: a red dress with a belt";
const std::string kGoodObject = "EXISTENT_OBJECTS: [\"red dress\", \"belt\"]\nNONEXISTENT_OBJECTS: [\"blue dress\"]";

ComposedQuery make_query(const std::string& id = "q1") {
  return {id, "img_ref", "make it red and add a belt", {"img_t"}, std::nullopt};
}

ReasonOptions fixed_clock_options(int budget = 2) {
  ReasonOptions o;
  o.retry.budget = budget;
  o.clock = [] { return std::string("2026-01-01T00:00:00Z"); };
  return o;
}

struct CorpusEntry {
  std::string name, scale, reply, expect, kind, cause, caption;
  std::vector<std::string> existent, nonexistent;
  bool has_caption = false, has_objects = false;
};

std::vector<CorpusEntry> load_corpus() {
  const auto doc = read_jsonl(fs::path(COTMR_TEST_DIR) / "data" / "parser_corpus.jsonl", "cotmr-parser-corpus-v1");
  std::vector<CorpusEntry> out;
  for (const auto& [line, r] : doc.records) {
    CorpusEntry e;
    e.name = r.at("name");
    e.scale = r.at("scale");
    e.reply = r.at("reply");
    e.expect = r.at("expect");
    e.kind = r.value("kind", "");
    e.cause = r.value("cause", "");
    if (r.contains("caption")) {
      e.has_caption = true;
      e.caption = r["caption"];
    }
    if (r.contains("existent")) {
      e.has_objects = true;
      e.existent = r["existent"].get<std::vector<std::string>>();
      e.nonexistent = r["nonexistent"].get<std::vector<std::string>>();
    }
    out.push_back(std::move(e));
  }
  return out;
}

TEST(Parser, ImageReplyExamples) {
  EXPECT_EQ(parse_image_reply("…\nFINAL_CAPTION: two manta rays in the ocean"), "two manta rays in the ocean");
  EXPECT_EQ(parse_image_reply("FINAL_CAPTION: a\nFINAL_CAPTION: b"), "b");
  try {
    parse_image_reply("no marker here");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingMarker);
  }
  try {
    parse_image_reply("FINAL_CAPTION:   ");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyCaption);
  }
}

TEST(Parser, ObjectReplyExamples) {
  const auto fig = parse_object_reply(
      "EXISTENT_OBJECTS: [\"Two manta rays\", \"yellow fish\", \"ocean\"]\nNONEXISTENT_OBJECTS: [\"human\", "
      "\"jellyfish\"]");
  EXPECT_EQ(fig.existent.size(), 3u);
  EXPECT_EQ(fig.nonexistent.size(), 2u);
  const auto dedup = parse_object_reply("...EXISTENT_OBJECTS: [\"a\",\"a\",\"b\"]\nNONEXISTENT_OBJECTS: []");
  EXPECT_EQ(dedup.existent, (std::vector<std::string>{"a", "b"}));
  EXPECT_TRUE(dedup.nonexistent.empty());
  try {
    parse_object_reply("EXISTENT_OBJECTS: [\"a\"]");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingMarker);
    EXPECT_NE(std::string(e.what()).find("NONEXISTENT_OBJECTS:"), std::string::npos) << "must name the marker";
  }
  try {
    parse_object_reply("EXISTENT_OBJECTS: [1,2]\nNONEXISTENT_OBJECTS: []");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PayloadNotArray);
  }
}

TEST(ParserCorpus, WellFormedEntriesParse) {
  std::size_t n = 0;
  for (const auto& e : load_corpus()) {
    if (e.expect != "ok") continue;
    ++n;
    SCOPED_TRACE(e.name);
    if (e.has_caption) EXPECT_EQ(parse_image_reply(e.reply), e.caption);
    if (e.has_objects) {
      const auto lists = parse_object_reply(e.reply);
      EXPECT_EQ(lists.existent, e.existent);
      EXPECT_EQ(lists.nonexistent, e.nonexistent);
    }
  }
  EXPECT_GE(n, 20u);
}

// Every malformed entry, served on every attempt, ends in the typed error once
// the retry budget is spent.
TEST(ParserCorpus, MalformedEntriesFailAfterRetryBudget) {
  std::size_t n = 0;
  for (const auto& e : load_corpus()) {
    if (e.expect != "error") continue;
    ++n;
    SCOPED_TRACE(e.name);
    ScriptedBackend backend([&](const ChatRequest& req) {
      const auto scale = CannedChatBackend::requested_scale(req);
      if (scale == e.scale) return e.reply;
      return scale == "image" ? kGoodImage : kGoodObject;
    });
    const auto policy = e.scale == "merged" ? ProcessPolicy::one_process : ProcessPolicy::two_process;
    ReasoningTrace trace;
    try {
      reason(make_query(), PromptMode::circot_few_shot, policy, backend, fixed_clock_options(2), &trace);
      ADD_FAILURE() << "no error";
    } catch (const ParseError& err) {
      EXPECT_EQ(to_string(err.kind()), e.kind);
      EXPECT_EQ(to_string(err.cause()), e.cause);
      EXPECT_EQ(err.attempts(), 3);
      EXPECT_EQ(err.raw_reply(), e.reply);
    }
    ASSERT_TRUE(trace.failure.has_value());
    EXPECT_EQ(*trace.failure, e.kind);
    EXPECT_EQ(trace.scales.back().retry_count, 2);
  }
  EXPECT_GE(n, 10u);
}

TEST(Retry, PolicyDecisions) {
  RetryPolicy two;
  EXPECT_EQ(two.next(1), RetryAction::retry);
  EXPECT_EQ(two.next(2), RetryAction::retry);
  EXPECT_EQ(two.next(3), RetryAction::escalate);
  RetryPolicy zero{0};
  EXPECT_EQ(zero.next(1), RetryAction::escalate);
}

TEST(Retry, ReminderIsAppendedAndDecodingKept) {
  const auto req = build_prompt(Scale::image, PromptMode::circot_zero_shot, "r", "t");
  const auto again = with_retry_reminder(req);
  ASSERT_EQ(again.messages.size(), req.messages.size() + 1);
  EXPECT_EQ(again.messages.back().role, Role::user);
  EXPECT_EQ(final_user_text(again), kRetryReminder);
  EXPECT_EQ(again.decoding, req.decoding);
  EXPECT_EQ(again.decoding.temperature, 0.0);
}

TEST(Reason, RecoversOnSecondAttempt) {
  int image_calls = 0;
  ScriptedBackend backend([&](const ChatRequest& req) -> std::string {
    if (CannedChatBackend::requested_scale(req) == "image") return ++image_calls == 1 ? "I forgot" : kGoodImage;
    return kGoodObject;
  });
  ReasoningTrace trace;
  const auto out = reason(make_query(), PromptMode::circot_few_shot, ProcessPolicy::two_process, backend,
                          fixed_clock_options(), &trace);
  EXPECT_EQ(out.target_caption, "a red dress with a belt");
  EXPECT_EQ(out.existent_objects, (std::vector<std::string>{"red dress", "belt"}));
  EXPECT_EQ(out.nonexistent_objects, (std::vector<std::string>{"blue dress"}));
  ASSERT_EQ(backend.requests.size(), 3u);
  EXPECT_EQ(final_user_text(backend.requests[1]), kRetryReminder);
  EXPECT_EQ(trace.scales[0].retry_count, 1);
  EXPECT_EQ(trace.scales[1].retry_count, 0);
  EXPECT_FALSE(trace.failure.has_value());
}

TEST(Reason, BudgetZeroFailsWithoutRetry) {
  ScriptedBackend backend([](const ChatRequest&) { return std::string("nothing useful"); });
  try {
    reason(make_query(), PromptMode::no_cot, ProcessPolicy::two_process, backend, fixed_clock_options(0));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseFailure);
    EXPECT_EQ(e.attempts(), 1);
  }
  EXPECT_EQ(backend.requests.size(), 1u);
}

TEST(Reason, TwoProcessOrderAndOneProcessSingleCall) {
  ScriptedBackend two([](const ChatRequest& req) {
    return CannedChatBackend::requested_scale(req) == "image" ? kGoodImage : kGoodObject;
  });
  reason(make_query(), PromptMode::circot_few_shot, ProcessPolicy::two_process, two, fixed_clock_options());
  ASSERT_EQ(two.requests.size(), 2u);
  EXPECT_EQ(CannedChatBackend::requested_scale(two.requests[0]), "image");
  EXPECT_EQ(CannedChatBackend::requested_scale(two.requests[1]), "object");

  ScriptedBackend one([](const ChatRequest&) { return kGoodImage + "\n" + kGoodObject; });
  ReasoningTrace trace;
  const auto out = reason(make_query(), PromptMode::circot_few_shot, ProcessPolicy::one_process, one,
                          fixed_clock_options(), &trace);
  ASSERT_EQ(one.requests.size(), 1u);
  EXPECT_EQ(CannedChatBackend::requested_scale(one.requests[0]), "merged");
  ASSERT_EQ(trace.scales.size(), 1u);
  EXPECT_EQ(trace.scales[0].scale, "merged");
  EXPECT_EQ(out.target_caption, "a red dress with a belt");
  EXPECT_EQ(out.nonexistent_objects.size(), 1u);
}

TEST(Reason, EveryRequestCarriesOneImageAndTheText) {
  ScriptedBackend backend([](const ChatRequest& req) {
    return CannedChatBackend::requested_scale(req) == "image" ? kGoodImage : kGoodObject;
  });
  reason(make_query(), PromptMode::circot_few_shot, ProcessPolicy::two_process, backend, fixed_clock_options());
  for (const auto& req : backend.requests) {
    std::size_t images = 0;
    for (const auto& m : req.messages) {
      for (const auto& p : m.parts) images += p.type == Part::Type::image;
    }
    EXPECT_EQ(images, 1u);
    EXPECT_NE(final_user_text(req).find("make it red and add a belt"), std::string::npos);
  }
}

TEST(Reason, BackendUnavailablePropagates) {
  ScriptedBackend backend(
      [](const ChatRequest&) -> std::string { throw Error(ErrorKind::BackendUnavailable, "down"); });
  ReasoningTrace trace;
  try {
    reason(make_query(), PromptMode::circot_few_shot, ProcessPolicy::two_process, backend, fixed_clock_options(),
           &trace);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BackendUnavailable);
  }
  EXPECT_EQ(trace.failure, std::optional<std::string>("BackendUnavailable"));
}

DatasetSplit many_queries(std::size_t n) {
  DatasetSplit split;
  split.gallery.entries.push_back({"img_t", "x"});
  for (std::size_t i = 0; i < n; ++i) {
    auto q = make_query("q" + std::to_string(1000 + i));
    q.modification_text = "edit number " + std::to_string(i);
    split.queries.push_back(q);
  }
  return split;
}

TEST(ReasonSplit, OutputOrderIndependentOfCompletionOrder) {
  const auto split = many_queries(40);
  auto fn = [](const ChatRequest& req) {
    const auto text = render_text(req);
    const auto h = fnv1a64(text);
    std::this_thread::sleep_for(std::chrono::microseconds(h % 2000));
    // One query fails on every attempt.
    if (text.find("edit number 7\"") != std::string::npos) return std::string("never parses");
    return CannedChatBackend::requested_scale(req) == "image" ? "FINAL_CAPTION: c " + std::to_string(h % 97)
                                                                : kGoodObject;
  };
  ScriptedBackend serial(fn), parallel(fn);
  const auto a = reason_split(split, PromptMode::circot_few_shot, ProcessPolicy::two_process, serial,
                              fixed_clock_options(), 1);
  const auto b = reason_split(split, PromptMode::circot_few_shot, ProcessPolicy::two_process, parallel,
                              fixed_clock_options(), 8);
  EXPECT_EQ(a.traces, b.traces);
  EXPECT_EQ(a.failed, 1u);
  EXPECT_EQ(b.failed, 1u);
  for (std::size_t i = 0; i < split.queries.size(); ++i) EXPECT_EQ(b.traces[i].query_id, split.queries[i].query_id);
}

TEST(ReasonSplit, UnavailableBackendIsFlagged) {
  const auto split = many_queries(5);
  ScriptedBackend backend(
      [](const ChatRequest&) -> std::string { throw Error(ErrorKind::BackendUnavailable, "down"); });
  const auto run = reason_split(split, PromptMode::circot_few_shot, ProcessPolicy::two_process, backend,
                                fixed_clock_options(), 2);
  EXPECT_TRUE(run.backend_unavailable);
  EXPECT_EQ(run.failed, 5u);
  for (const auto& t : run.traces) EXPECT_EQ(t.failure, std::optional<std::string>("BackendUnavailable"));
}

class TraceFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = oracle::fresh_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
    auto split = many_queries(3);
    ScriptedBackend backend([](const ChatRequest& req) {
      return CannedChatBackend::requested_scale(req) == "image"
                 ? std::string("step 4\nFINAL_CAPTION: a red surface")
                 : kGoodObject;
    });
    run = reason_split(split, PromptMode::circot_few_shot, ProcessPolicy::two_process, backend,
                       fixed_clock_options(), 2);
    write_traces(dir / kTraceFile, run.traces, Json{{"fingerprint", {{"hash", "abc"}}}});
  }
  fs::path dir;
  ReasonRun run;
};

TEST_F(TraceFiles, JsonRoundTrip) {
  EXPECT_EQ(read_traces(dir / kTraceFile), run.traces);
  for (const auto& t : run.traces) EXPECT_EQ(trace_from_json(trace_to_json(t)), t);
  EXPECT_EQ(read_jsonl(dir / kTraceFile, kTraceFormat).header["fingerprint"]["hash"], "abc");
}

TEST_F(TraceFiles, EditReplacesCaptionOnly) {
  const auto before = read_text_file(dir / kTraceFile);
  const auto original = output_from_trace(run.traces[1]);
  const auto out = edit_and_replay(dir / kTraceFile, "q1001", Scale::image, "step 4\nFINAL_CAPTION: a blue surface");
  EXPECT_EQ(out.target_caption, "a blue surface");
  EXPECT_EQ(out.existent_objects, original.existent_objects);
  EXPECT_EQ(out.nonexistent_objects, original.nonexistent_objects);
  EXPECT_EQ(read_text_file(dir / kTraceFile), before) << "original trace must be preserved";
  const auto edited = read_traces(dir / kEditedTraceFile);
  ASSERT_EQ(edited.size(), 1u);
  EXPECT_TRUE(edited[0].edited);
  const auto merged = load_run_traces(dir);
  EXPECT_EQ(output_from_trace(merged[1]).target_caption, "a blue surface");
  EXPECT_EQ(merged[0], run.traces[0]);
}

TEST_F(TraceFiles, EditsComposeAcrossScales) {
  edit_and_replay(dir / kTraceFile, "q1000", Scale::image, "FINAL_CAPTION: x");
  const auto out = edit_and_replay(dir / kTraceFile, "q1000", Scale::object,
                                   "EXISTENT_OBJECTS: [\"y\"]\nNONEXISTENT_OBJECTS: []");
  EXPECT_EQ(out.target_caption, "x");
  EXPECT_EQ(out.existent_objects, std::vector<std::string>{"y"});
  EXPECT_EQ(read_traces(dir / kEditedTraceFile).size(), 1u);
}

TEST_F(TraceFiles, ReplayWithUneditedReplyIsIdentity) {
  const auto original = output_from_trace(run.traces[2]);
  const auto out = edit_and_replay(dir / kTraceFile, "q1002", Scale::image, run.traces[2].scales[0].raw_reply);
  EXPECT_EQ(out, original);
}

TEST_F(TraceFiles, EditErrors) {
  try {
    edit_and_replay(dir / kTraceFile, "q1000", Scale::image, "no marker at all");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseFailure);
  }
  try {
    edit_and_replay(dir / kTraceFile, "nope", Scale::image, "FINAL_CAPTION: x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownQuery);
  }
  EXPECT_FALSE(fs::exists(dir / kEditedTraceFile));
}

TEST(ParserFuzz, RandomStringsNeverCrash) {
  SplitMix64 rng(99);
  const std::string alphabet = "[]\"\\,: \n\tabcEXISTENT_OBJECTS:NONEXISTENT_OBJECTS:FINAL_CAPTION:{}0123456789\x80\xff";
  for (int i = 0; i < 20000; ++i) {
    std::string s;
    const auto len = rng.below(120);
    for (std::size_t j = 0; j < len; ++j) s += alphabet[rng.below(alphabet.size())];
    try {
      parse_image_reply(s);
    } catch (const ParseError&) {
    }
    try {
      parse_object_reply(s);
    } catch (const ParseError&) {
    }
  }
}

}  // namespace
}  // namespace cotmr
