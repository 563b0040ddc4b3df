#include <gtest/gtest.h>

#include "cotmr/error.hpp"
#include "cotmr/jsonl.hpp"
#include "cotmr/query_model.hpp"
#include "oracles.hpp"

namespace cotmr {
namespace {

namespace fs = std::filesystem;

struct SplitFiles {
  fs::path dir, queries, gallery;
};

SplitFiles write_files(const std::string& name, const std::string& queries_body, const std::string& gallery_body) {
  SplitFiles f;
  f.dir = oracle::fresh_dir(name);
  f.queries = f.dir / "queries.jsonl";
  f.gallery = f.dir / "gallery.jsonl";
  write_text_file(f.queries, "{\"format\":\"cotmr-queries-v1\"}\n" + queries_body);
  write_text_file(f.gallery, "{\"format\":\"cotmr-gallery-v1\"}\n" + gallery_body);
  return f;
}

const std::string kGallery3 =
    "{\"image_id\":\"a\",\"locator\":\"/img/a.png\"}\n"
    "{\"image_id\":\"b\",\"locator\":\"/img/b.png\"}\n"
    "{\"image_id\":\"c\",\"locator\":\"/img/c.png\"}\n";

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Io;
}

TEST(QueryModel, LoadsTwoQueriesAgainstThreeImages) {
  const auto f = write_files("qm-ok",
                             "{\"query_id\":\"q1\",\"reference_image\":\"a\",\"modification_text\":\"make it red\","
                             "\"targets\":[\"b\"]}\n"
                             "\n"
                             "{\"query_id\":\"q2\",\"reference_image\":\"b\",\"modification_text\":\"add a hat\","
                             "\"targets\":[\"c\",\"a\"]}\n",
                             kGallery3);
  const auto split = load_split(f.queries, f.gallery, BenchmarkKind::fashioniq);
  ASSERT_EQ(split.queries.size(), 2u);
  EXPECT_EQ(split.gallery.size(), 3u);
  EXPECT_EQ(split.queries[1].targets, (std::vector<std::string>{"c", "a"}));
  EXPECT_EQ(split.defaults, (Hyperparams{1.0, 0.5}));
  EXPECT_NO_THROW(validate_split(split));
}

TEST(QueryModel, TargetOutsideGalleryIsDangling) {
  const auto f = write_files("qm-dangling",
                             "{\"query_id\":\"q1\",\"reference_image\":\"a\",\"modification_text\":\"x\","
                             "\"targets\":[\"zzz\"]}\n",
                             kGallery3);
  EXPECT_EQ(kind_of([&] { load_split(f.queries, f.gallery, BenchmarkKind::circo); }), ErrorKind::DanglingReference);
}

TEST(QueryModel, FiveElementSubsetIsMalformed) {
  const auto f = write_files("qm-subset",
                             "{\"query_id\":\"q1\",\"reference_image\":\"a\",\"modification_text\":\"x\","
                             "\"targets\":[\"b\"],\"subset\":[\"a\",\"b\",\"c\",\"d\",\"e\"]}\n",
                             kGallery3);
  EXPECT_EQ(kind_of([&] { load_split(f.queries, f.gallery, BenchmarkKind::cirr); }), ErrorKind::MalformedRecord);
}

TEST(QueryModel, MalformedRecordNamesTheLine) {
  const auto f = write_files("qm-line",
                             "{\"query_id\":\"q1\",\"reference_image\":\"a\",\"modification_text\":\"x\","
                             "\"targets\":[\"b\"]}\n"
                             "{\"query_id\":\"q2\",\"reference_image\":\"a\",\"modification_text\":\"x\","
                             "\"targets\":[\"b\"],\"color\":\"red\"}\n",
                             kGallery3);
  try {
    load_split(f.queries, f.gallery, BenchmarkKind::cirr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedRecord);
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("color"), std::string::npos);
  }
}

TEST(QueryModel, DuplicateIdsAreRejected) {
  const auto dup_query = write_files("qm-dupq",
                                     "{\"query_id\":\"q1\",\"reference_image\":\"a\",\"modification_text\":\"x\","
                                     "\"targets\":[\"b\"]}\n"
                                     "{\"query_id\":\"q1\",\"reference_image\":\"a\",\"modification_text\":\"y\","
                                     "\"targets\":[\"c\"]}\n",
                                     kGallery3);
  EXPECT_EQ(kind_of([&] { load_split(dup_query.queries, dup_query.gallery, BenchmarkKind::cirr); }),
            ErrorKind::DuplicateId);
  const auto dup_image = write_files("qm-dupi", "", kGallery3 + "{\"image_id\":\"a\",\"locator\":\"/x\"}\n");
  EXPECT_EQ(kind_of([&] { load_gallery(dup_image.gallery); }), ErrorKind::DuplicateId);
}

TEST(QueryModel, RejectsBlankTextEmptyTargetsAndBadJson) {
  ComposedQuery q{"q", "a", "   ", {"b"}, std::nullopt};
  EXPECT_EQ(kind_of([&] { validate_query(q); }), ErrorKind::MalformedRecord);
  q.modification_text = "ok";
  q.targets.clear();
  EXPECT_EQ(kind_of([&] { validate_query(q); }), ErrorKind::MalformedRecord);
  q.targets = {"b"};
  q.subset = std::vector<std::string>{"a", "c", "d", "e", "f", "g"};
  EXPECT_EQ(kind_of([&] { validate_query(q); }), ErrorKind::MalformedRecord);  // target not in subset

  const auto f = write_files("qm-json", "{not json}\n", kGallery3);
  EXPECT_EQ(kind_of([&] { load_split(f.queries, f.gallery, BenchmarkKind::cirr); }), ErrorKind::MalformedRecord);
  EXPECT_EQ(kind_of([&] { load_gallery(f.dir / "absent.jsonl"); }), ErrorKind::Io);
}

TEST(QueryModel, BenchmarkDefaults) {
  EXPECT_EQ(default_hyperparams(BenchmarkKind::fashioniq), (Hyperparams{1.0, 0.5}));
  EXPECT_EQ(default_hyperparams(BenchmarkKind::cirr), (Hyperparams{1.0, 0.3}));
  EXPECT_EQ(default_hyperparams(BenchmarkKind::circo), (Hyperparams{0.5, 0.3}));
  EXPECT_EQ(kind_of([] { default_hyperparams(BenchmarkKind::synthetic); }), ErrorKind::UnknownBenchmark);
  EXPECT_EQ(kind_of([] { parse_benchmark_kind("coco"); }), ErrorKind::UnknownBenchmark);
  for (auto k : {BenchmarkKind::fashioniq, BenchmarkKind::cirr, BenchmarkKind::circo, BenchmarkKind::synthetic}) {
    EXPECT_EQ(parse_benchmark_kind(to_string(k)), k);
  }
}

TEST(QueryModel, SyntheticNeedsExplicitWeights) {
  const auto f = write_files("qm-synth",
                             "{\"query_id\":\"q1\",\"reference_image\":\"a\",\"modification_text\":\"x\","
                             "\"targets\":[\"b\"]}\n",
                             kGallery3);
  EXPECT_EQ(kind_of([&] { load_split(f.queries, f.gallery, BenchmarkKind::synthetic); }),
            ErrorKind::UnknownBenchmark);
  const auto split = load_split(f.queries, f.gallery, BenchmarkKind::synthetic, Hyperparams{2.0, 0.1});
  EXPECT_EQ(split.defaults, (Hyperparams{2.0, 0.1}));
}

TEST(QueryModel, WriteThenLoadRoundTrips) {
  DatasetSplit split;
  split.benchmark_kind = BenchmarkKind::cirr;
  split.defaults = default_hyperparams(BenchmarkKind::cirr);
  for (const char* id : {"i1", "i2", "i3", "i4", "i5", "i6", "i7"}) {
    split.gallery.entries.push_back({id, std::string("file:///data/") + id + ".jpg"});
  }
  split.queries.push_back({"q1", "i1", "add a \"quoted\" ünïcode hat", {"i2"},
                           std::vector<std::string>{"i2", "i3", "i4", "i5", "i6", "i7"}});
  split.queries.push_back({"q2", "i3", "remove the dog", {"i4", "i5"}, std::nullopt});
  const auto dir = oracle::fresh_dir("qm-roundtrip");
  write_queries(split.queries, dir / "queries.jsonl");
  write_gallery(split.gallery, dir / "gallery.jsonl");
  auto loaded = load_split(dir / "queries.jsonl", dir / "gallery.jsonl", BenchmarkKind::cirr);
  loaded.name.clear();
  EXPECT_EQ(loaded, split);
}

}  // namespace
}  // namespace cotmr
