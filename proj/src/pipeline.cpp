#include "cotmr/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cotmr/error.hpp"
#include "prompt_data.hpp"

namespace cotmr {

namespace fs = std::filesystem;

namespace {

const char* const kPathKeys[] = {"queries", "gallery", "prompt_dir", "out"};

bool is_url(std::string_view s) { return s.starts_with("http://") || s.starts_with("https://"); }

[[noreturn]] void bad_key(const std::string& key, const char* expected) {
  throw Error(ErrorKind::InvalidConfig, "config key \"" + key + "\" expects " + expected);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::string resolve_backend(const std::string& spec, const fs::path& base) {
  for (const char* prefix : {"mock:", "table:"}) {
    if (spec.starts_with(prefix)) {
      const std::string rest = spec.substr(std::string_view(prefix).size());
      return prefix + resolve(rest, base).string();
    }
  }
  return spec;
}

std::string file_digest(const fs::path& path) {
  return fnv1a64_hex(read_text_file(path));
}

std::string backend_digest(const std::string& spec) {
  if (spec.starts_with("mock:")) return "mock:" + file_digest(spec.substr(5));
  if (spec.starts_with("table:")) {
    const fs::path dir = spec.substr(6);
    return "table:" + fnv1a64_hex(read_text_file(dir / "texts.emb.jsonl") + "\n" +
                                  read_text_file(dir / "images.emb.jsonl"));
  }
  return spec;
}

std::string prompt_digest(const fs::path& dir) {
  std::string all;
  if (dir.empty()) {
    for (auto text : {prompt_data::image_scale, prompt_data::image_examples, prompt_data::object_scale,
                      prompt_data::object_examples}) {
      all += text;
      all += '\0';
    }
  } else {
    for (const char* name : {"image_scale.txt", "image_examples.txt", "object_scale.txt", "object_examples.txt"}) {
      all += read_text_file(dir / name);
      all += '\0';
    }
  }
  return fnv1a64_hex(all);
}

std::string dump_pretty(const Json& j) { return j.dump(2, ' ', false, Json::error_handler_t::replace) + "\n"; }

fs::path traces_path(const RunConfig& c) { return c.out / kTraceFile; }
fs::path embeddings_path(const RunConfig& c) { return c.out / kEmbeddingsFile; }

GalleryIndex load_index(const RunConfig& config, const DatasetSplit& split) {
  const auto path = embeddings_path(config);
  if (!fs::exists(path)) {
    throw Error(ErrorKind::Io, "embeddings file " + path.string() + " not found; run `cotmr embed` first");
  }
  return build_gallery_index(split.gallery, path);
}

std::map<std::string, ReasoningTrace> traces_by_id(std::vector<ReasoningTrace> traces) {
  std::map<std::string, ReasoningTrace> out;
  for (auto& t : traces) out.emplace(t.query_id, std::move(t));
  return out;
}

// Outcome of scoring one query: a breakdown, or the error kind that stopped it.
struct Scored {
  std::optional<ScoreBreakdown> breakdown;
  std::string failure;
};

template <typename Fn>
Scored guarded(const std::string& query_id, const std::map<std::string, ReasoningTrace>& traces, Fn fn) {
  Scored s;
  const auto it = traces.find(query_id);
  if (it == traces.end()) {
    s.failure = std::string(to_string(ErrorKind::UnknownQuery));
    return s;
  }
  if (it->second.failure) {
    s.failure = *it->second.failure;
    return s;
  }
  try {
    s.breakdown = fn(output_from_trace(it->second));
  } catch (const ParseError& e) {
    s.failure = std::string(to_string(e.cause()));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::BackendUnavailable) throw;
    s.failure = std::string(to_string(e.kind()));
  }
  return s;
}

Json scores_record(const ScoreBreakdown& b) {
  Json scores;
  scores["base"] = b.base;
  scores["pos"] = b.pos;
  scores["neg"] = b.neg;
  scores["fused"] = b.fused;
  return Json{{"query_id", b.query_id}, {"scores", std::move(scores)}};
}

void write_scores(const fs::path& path, const Json& fp, const std::vector<Json>& records) {
  write_jsonl(path, Json{{"format", kScoresFormat}, {"fingerprint", fp}}, records);
}

void check_traces_fingerprint(const RunConfig& config, const Json& current, bool force) {
  const auto header = read_jsonl(traces_path(config), kTraceFormat).header;
  if (force) return;
  const Json stored = header.contains("fingerprint") ? reasoning_fingerprint(header["fingerprint"]) : Json();
  if (stored != reasoning_fingerprint(current)) {
    throw Error(ErrorKind::FingerprintMismatch,
                traces_path(config).string() +
                    " was produced under a different reasoning configuration (rerun `reason` or pass --force)");
  }
}

}  // namespace

Json RunConfig::to_json() const {
  Json j;
  j["queries"] = queries.string();
  j["gallery"] = gallery.string();
  j["benchmark"] = benchmark;
  j["lambda"] = lambda ? Json(*lambda) : Json();
  j["mu"] = mu ? Json(*mu) : Json();
  j["components"] = components;
  j["eo_agg"] = eo_agg;
  j["neo_agg"] = neo_agg;
  j["plan"] = plan;
  j["chat_backend"] = chat_backend;
  j["embed_backend"] = embed_backend;
  j["prompt_mode"] = prompt_mode;
  j["process"] = process;
  j["prompt_dir"] = prompt_dir.string();
  j["out"] = out.string();
  j["seed"] = seed;
  j["retry_budget"] = retry_budget;
  j["concurrency"] = concurrency;
  j["embed_batch"] = embed_batch;
  j["dump_scores"] = dump_scores;
  return j;
}

void RunConfig::merge(const Json& overrides, const fs::path& base_dir) {
  if (!overrides.is_object()) throw Error(ErrorKind::InvalidConfig, "config must be a single JSON object");
  for (const auto& [key, v] : overrides.items()) {
    auto str = [&, &key = key]() {
      if (v.is_number() || v.is_boolean()) return v.dump();
      if (!v.is_string()) bad_key(key, "a string");
      return v.get<std::string>();
    };
    auto num = [&, &key = key]() {
      if (!v.is_number()) bad_key(key, "a number");
      return v.get<double>();
    };
    auto count = [&, &key = key]() -> std::uint64_t {
      if (!v.is_number_unsigned()) bad_key(key, "a non-negative integer");
      return v.get<std::uint64_t>();
    };
    bool is_path = false;
    for (const char* p : kPathKeys) is_path = is_path || key == p;

    if (is_path) {
      const fs::path p = resolve(str(), base_dir);
      if (key == "queries") queries = p;
      else if (key == "gallery") gallery = p;
      else if (key == "prompt_dir") prompt_dir = p;
      else out = p;
    } else if (key == "split") {
      const fs::path dir = resolve(str(), base_dir);
      queries = dir / "queries.jsonl";
      gallery = dir / "gallery.jsonl";
    } else if (key == "benchmark") {
      benchmark = str();
    } else if (key == "lambda") {
      lambda = v.is_null() ? std::nullopt : std::optional<double>(num());
    } else if (key == "mu") {
      mu = v.is_null() ? std::nullopt : std::optional<double>(num());
    } else if (key == "components") {
      components = str();
    } else if (key == "eo_agg") {
      eo_agg = str();
    } else if (key == "neo_agg") {
      neo_agg = str();
    } else if (key == "plan") {
      plan = str();
    } else if (key == "chat_backend") {
      chat_backend = resolve_backend(str(), base_dir);
    } else if (key == "embed_backend") {
      embed_backend = resolve_backend(str(), base_dir);
    } else if (key == "prompt_mode") {
      prompt_mode = str();
    } else if (key == "process") {
      process = str();
    } else if (key == "seed") {
      seed = count();
    } else if (key == "retry_budget") {
      retry_budget = static_cast<int>(count());
    } else if (key == "concurrency") {
      concurrency = count();
      if (concurrency == 0) bad_key(key, "a positive integer");
    } else if (key == "embed_batch") {
      embed_batch = count();
      if (embed_batch == 0 || embed_batch > 256) bad_key(key, "an integer in [1, 256]");
    } else if (key == "dump_scores") {
      if (!v.is_boolean()) bad_key(key, "true or false");
      dump_scores = v.get<bool>();
    } else {
      throw Error(ErrorKind::InvalidConfig, "unknown config key \"" + key + "\"");
    }
  }
}

RunConfig RunConfig::from_json(const Json& object, const fs::path& base_dir) {
  RunConfig c;
  c.merge(object, base_dir);
  return c;
}

Json RunConfig::parse_key_values(std::string_view text) {
  Json out = Json::object();
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::InvalidConfig, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(std::string_view(t).substr(0, eq));
    const auto value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw Error(ErrorKind::InvalidConfig, "config line " + std::to_string(line_no) + ": empty key");
    // Scalars that read as JSON keep their type; anything else is a string.
    Json parsed = Json::parse(value, nullptr, false);
    if (parsed.is_discarded() || parsed.is_object() || parsed.is_array()) parsed = value;
    if (parsed.is_string() && value.size() >= 2 && value.front() == '"') parsed = parsed.get<std::string>();
    out[key] = parsed;
  }
  return out;
}

RunConfig RunConfig::load(const fs::path& path) {
  const auto text = read_text_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  const fs::path base = path.parent_path();
  if (first != std::string::npos && text[first] == '{') {
    Json j = Json::parse(text, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::InvalidConfig, path.string() + ": not valid JSON");
    return from_json(j, base);
  }
  return from_json(parse_key_values(text), base);
}

BenchmarkKind RunConfig::benchmark_kind() const { return parse_benchmark_kind(benchmark); }

Hyperparams RunConfig::hyperparams() const {
  const auto kind = benchmark_kind();
  Hyperparams h;
  if (lambda && mu) {
    h = {*lambda, *mu};
  } else if (kind == BenchmarkKind::synthetic) {
    throw Error(ErrorKind::InvalidConfig, "benchmark \"synthetic\" has no default weights; set lambda and mu");
  } else {
    h = default_hyperparams(kind);
    if (lambda) h.lambda = *lambda;
    if (mu) h.mu = *mu;
  }
  return h;
}

MgsConfig RunConfig::mgs() const {
  MgsConfig m;
  const auto h = hyperparams();
  m.lambda = h.lambda;
  m.mu = h.mu;
  m.set_components(components);
  m.eo_aggregation = parse_aggregation(eo_agg);
  m.neo_aggregation = parse_aggregation(neo_agg);
  m.validate();
  return m;
}

MetricPlan RunConfig::metric_plan() const { return MetricPlan::named(plan.empty() ? benchmark : plan); }
PromptMode RunConfig::mode() const { return parse_prompt_mode(prompt_mode); }
ProcessPolicy RunConfig::policy() const { return parse_process_policy(process); }

Json fingerprint(const RunConfig& c) {
  const auto m = c.mgs();
  Json j;
  j["queries_digest"] = c.queries.empty() ? std::string() : file_digest(c.queries);
  j["gallery_digest"] = c.gallery.empty() ? std::string() : file_digest(c.gallery);
  j["benchmark"] = c.benchmark;
  j["lambda"] = m.lambda;
  j["mu"] = m.mu;
  j["components"] = m.components();
  j["eo_agg"] = to_string(m.eo_aggregation);
  j["neo_agg"] = to_string(m.neo_aggregation);
  j["plan"] = c.metric_plan().name;
  j["chat_backend"] = backend_digest(c.chat_backend);
  j["embed_backend"] = backend_digest(c.embed_backend);
  j["prompt_mode"] = to_string(c.mode());
  j["process"] = to_string(c.policy());
  j["prompts"] = prompt_digest(c.prompt_dir);
  j["seed"] = c.seed;
  j["retry_budget"] = c.retry_budget;
  j["dump_scores"] = c.dump_scores;
  Json fp;
  fp["hash"] = fnv1a64_hex(dump_compact(j));
  fp["config"] = std::move(j);
  return fp;
}

Json reasoning_fingerprint(const Json& fp) {
  Json out = Json::object();
  if (!fp.is_object() || !fp.contains("config")) return out;
  const auto& c = fp["config"];
  for (const char* key : {"queries_digest", "chat_backend", "prompt_mode", "process", "prompts", "retry_budget"}) {
    if (c.contains(key)) out[key] = c[key];
  }
  return out;
}

std::unique_ptr<ChatBackend> make_chat_backend(const std::string& spec) {
  if (spec.starts_with("mock:")) return std::make_unique<CannedChatBackend>(CannedChatBackend::load(spec.substr(5)));
  if (is_url(spec)) {
    std::optional<std::string> token;
    if (const char* t = std::getenv("COTMR_BACKEND_TOKEN"); t && *t) token = t;
    return std::make_unique<HttpAdapterClient>(spec, token);
  }
  throw Error(ErrorKind::InvalidConfig,
              "chat backend \"" + spec + "\" must be mock:<canned.jsonl> or an http(s) adapter URL");
}

std::unique_ptr<EmbedBackend> make_embed_backend(const std::string& spec) {
  if (spec.starts_with("hash:")) {
    const auto digits = spec.substr(5);
    std::size_t dim = 0;
    try {
      std::size_t used = 0;
      dim = std::stoul(digits, &used);
      if (used != digits.size()) dim = 0;
    } catch (const std::exception&) {
      dim = 0;
    }
    if (dim == 0) throw Error(ErrorKind::InvalidConfig, "embed backend \"" + spec + "\": expected hash:<dim>");
    return std::make_unique<HashEmbedBackend>(dim);
  }
  if (spec.starts_with("table:")) return std::make_unique<TableEmbedBackend>(TableEmbedBackend::load(spec.substr(6)));
  if (is_url(spec)) {
    std::optional<std::string> token;
    if (const char* t = std::getenv("COTMR_BACKEND_TOKEN"); t && *t) token = t;
    return std::make_unique<HttpAdapterClient>(spec, token);
  }
  throw Error(ErrorKind::InvalidConfig,
              "embed backend \"" + spec + "\" must be hash:<dim>, table:<dir> or an http(s) adapter URL");
}

DatasetSplit load_run_split(const RunConfig& config) {
  if (config.queries.empty() || config.gallery.empty()) {
    throw Error(ErrorKind::InvalidConfig, "both queries and gallery paths are required");
  }
  return load_split(config.queries, config.gallery, config.benchmark_kind(), config.hyperparams());
}

EmbedSummary run_embed(const RunConfig& config) {
  if (config.gallery.empty()) throw Error(ErrorKind::InvalidConfig, "gallery path is required");
  const auto manifest = load_gallery(config.gallery);
  const auto fp = fingerprint(config);
  auto backend = make_embed_backend(config.embed_backend);
  const auto index = build_gallery_index(manifest, *backend, config.embed_batch);
  fs::create_directories(config.out);
  EmbedSummary s{embeddings_path(config), index.size(), index.dim()};
  write_gallery_index(s.path, index, Json{{"fingerprint", fp}});
  return s;
}

ReasonRun run_reason(const RunConfig& config) {
  const auto split = load_run_split(config);
  const auto fp = fingerprint(config);
  auto backend = make_chat_backend(config.chat_backend);
  std::optional<PromptLibrary> custom;
  ReasonOptions opts;
  opts.retry.budget = config.retry_budget;
  if (!config.prompt_dir.empty()) {
    custom = PromptLibrary::load(config.prompt_dir);
    opts.library = &*custom;
  }
  auto run = reason_split(split, config.mode(), config.policy(), *backend, opts, config.concurrency);
  fs::create_directories(config.out);
  write_traces(traces_path(config), run.traces, Json{{"fingerprint", fp}});
  return run;
}

void write_rankings(const fs::path& path, const RankingsFile& file) {
  std::vector<Json> records;
  records.reserve(file.order.size());
  for (const auto& qid : file.order) {
    if (const auto f = file.failed.find(qid); f != file.failed.end()) {
      records.push_back(Json{{"query_id", qid}, {"failed", f->second}});
      continue;
    }
    const auto& r = file.rankings.at(qid);
    Json ids = Json::array(), scores = Json::array();
    for (const auto& item : r.items) {
      ids.push_back(item.image_id);
      scores.push_back(item.score);
    }
    records.push_back(Json{{"query_id", qid}, {"ids", std::move(ids)}, {"scores", std::move(scores)}});
  }
  write_jsonl(path, Json{{"format", kRankingsFormat}, {"fingerprint", file.fingerprint}}, records);
}

RankingsFile read_rankings(const fs::path& path) {
  const auto doc = read_jsonl(path, kRankingsFormat);
  RankingsFile file;
  file.fingerprint = doc.header.contains("fingerprint") ? doc.header["fingerprint"] : Json::object();
  for (const auto& [line, rec] : doc.records) {
    const auto where = path.string() + ":" + std::to_string(line);
    if (!rec.is_object() || !rec.contains("query_id") || !rec["query_id"].is_string()) {
      throw Error(ErrorKind::MalformedRecord, where + ": record needs string \"query_id\"");
    }
    const auto qid = rec["query_id"].get<std::string>();
    if (file.rankings.contains(qid) || file.failed.contains(qid)) {
      throw Error(ErrorKind::DuplicateId, where + ": query \"" + qid + "\" ranked twice");
    }
    file.order.push_back(qid);
    if (rec.contains("failed")) {
      if (!rec["failed"].is_string()) throw Error(ErrorKind::MalformedRecord, where + ": \"failed\" must be a string");
      file.failed.emplace(qid, rec["failed"].get<std::string>());
      continue;
    }
    if (!rec.contains("ids") || !rec["ids"].is_array() || !rec.contains("scores") || !rec["scores"].is_array() ||
        rec["ids"].size() != rec["scores"].size()) {
      throw Error(ErrorKind::MalformedRecord, where + ": record needs equally long \"ids\" and \"scores\" arrays");
    }
    Ranking r;
    r.query_id = qid;
    for (std::size_t i = 0; i < rec["ids"].size(); ++i) {
      const auto& id = rec["ids"][i];
      const auto& s = rec["scores"][i];
      if (!id.is_string() || !s.is_number()) throw Error(ErrorKind::MalformedRecord, where + ": bad ranking entry");
      r.items.push_back({id.get<std::string>(), s.get<double>()});
    }
    file.rankings.emplace(qid, std::move(r));
  }
  return file;
}

RetrieveSummary run_retrieve(const RunConfig& config, bool force) {
  const auto split = load_run_split(config);
  const auto fp = fingerprint(config);
  const auto mgs = config.mgs();
  const auto index = load_index(config, split);

  if (!fs::exists(traces_path(config))) {
    run_reason(config);
  } else {
    check_traces_fingerprint(config, fp, force);
  }
  const auto traces = traces_by_id(load_run_traces(config.out));

  auto backend = make_embed_backend(config.embed_backend);
  if (!force && backend->model_id() != index.model_id()) {
    throw Error(ErrorKind::FingerprintMismatch, "gallery embeddings come from model \"" + index.model_id() +
                                                    "\" but the text encoder is \"" + backend->model_id() +
                                                    "\" (rerun `embed` or pass --force)");
  }
  EmbeddingStore store(*backend, index.dim());

  RankingsFile out;
  out.fingerprint = fp;
  std::vector<Json> score_records;
  RetrieveSummary summary;
  for (const auto& q : split.queries) {
    out.order.push_back(q.query_id);
    auto s = guarded(q.query_id, traces,
                     [&](const ReasoningOutput& r) { return score(r, index, store, mgs); });
    if (!s.breakdown) {
      out.failed.emplace(q.query_id, s.failure);
      ++summary.failed;
      continue;
    }
    out.rankings.emplace(q.query_id, rank(*s.breakdown, index));
    if (config.dump_scores) score_records.push_back(scores_record(*s.breakdown));
    ++summary.ranked;
  }
  write_rankings(config.out / kRankingsFile, out);
  if (config.dump_scores) write_scores(config.out / kScoresFile, fp, score_records);
  return summary;
}

EvalReport run_evaluate(const RunConfig& config, const std::vector<fs::path>& rankings_paths, bool force) {
  const auto split = load_run_split(config);
  std::vector<fs::path> paths = rankings_paths;
  if (paths.empty()) paths.push_back(config.out / kRankingsFile);

  std::map<std::string, Ranking> rankings;
  std::set<std::string> failed;
  std::optional<Json> fp;
  for (const auto& p : paths) {
    auto file = read_rankings(p);
    if (!fp) {
      fp = file.fingerprint;
    } else if (!force && file.fingerprint.value("hash", Json()) != fp->value("hash", Json())) {
      throw Error(ErrorKind::FingerprintMismatch,
                  p.string() + " has a different fingerprint than " + paths.front().string() + " (pass --force)");
    }
    for (auto& [qid, r] : file.rankings) {
      if (!rankings.emplace(qid, std::move(r)).second || failed.contains(qid)) {
        throw Error(ErrorKind::DuplicateId, "query \"" + qid + "\" is ranked in more than one input");
      }
    }
    for (const auto& [qid, kind] : file.failed) {
      if (rankings.contains(qid) || !failed.insert(qid).second) {
        throw Error(ErrorKind::DuplicateId, "query \"" + qid + "\" appears in more than one input");
      }
    }
  }
  if (!force) {
    const Json& stored = fp->contains("config") ? (*fp)["config"] : Json::object();
    const auto here_q = file_digest(config.queries);
    const auto here_g = file_digest(config.gallery);
    if (stored.value("queries_digest", std::string()) != here_q ||
        stored.value("gallery_digest", std::string()) != here_g) {
      throw Error(ErrorKind::FingerprintMismatch,
                  "rankings were produced for a different split than the one being evaluated (pass --force)");
    }
  }
  auto report = evaluate_split(rankings, split, config.metric_plan(), failed, *fp);
  fs::create_directories(config.out);
  write_text_file(config.out / kReportFile, dump_pretty(report.to_json()));
  return report;
}

std::vector<AblationPoint> run_ablate(const RunConfig& config, const std::vector<double>& lambdas,
                                      const std::vector<double>& mus, const std::vector<std::string>& component_sets) {
  if (lambdas.empty() || mus.empty() || component_sets.empty()) {
    throw Error(ErrorKind::InvalidConfig, "ablation grid is empty (need at least one lambda, mu and component set)");
  }
  const auto split = load_run_split(config);
  if (!fs::exists(traces_path(config))) {
    throw Error(ErrorKind::Io, traces_path(config).string() + " not found; run `cotmr reason` first");
  }
  check_traces_fingerprint(config, fingerprint(config), false);
  const auto index = load_index(config, split);
  const auto traces = traces_by_id(load_run_traces(config.out));
  auto backend = make_embed_backend(config.embed_backend);
  EmbeddingStore store(*backend, index.dim());
  const auto plan = config.metric_plan();
  const auto base_mgs = config.mgs();

  std::vector<ComponentRows> rows;
  std::set<std::string> failed;
  for (const auto& q : split.queries) {
    std::optional<ComponentRows> cr;
    auto s = guarded(q.query_id, traces, [&](const ReasoningOutput& r) {
      cr = component_rows(r, index, store);
      return ScoreBreakdown{};
    });
    if (cr) {
      rows.push_back(std::move(*cr));
    } else {
      failed.insert(q.query_id);
    }
  }

  std::vector<AblationPoint> points;
  for (const auto& comps : component_sets) {
    for (double l : lambdas) {
      for (double m : mus) {
        MgsConfig mgs = base_mgs;
        mgs.lambda = l;
        mgs.mu = m;
        mgs.set_components(comps);
        RunConfig point_cfg = config;
        point_cfg.lambda = l;
        point_cfg.mu = m;
        point_cfg.components = comps;
        std::map<std::string, Ranking> rankings;
        for (const auto& r : rows) rankings.emplace(r.query_id, rank(fuse(r, mgs), index));
        points.push_back({l, m, mgs.components(), evaluate_split(rankings, split, plan, failed, fingerprint(point_cfg))});
      }
    }
  }

  std::string tsv = "components\tlambda\tmu";
  for (const auto& [name, v] : points.front().report.metrics) tsv += "\t" + name;
  for (const auto& [name, v] : points.front().report.aggregates) tsv += "\t" + name;
  tsv += "\tmean_target_rank\n";
  Json json_points = Json::array();
  for (const auto& p : points) {
    tsv += p.components + "\t" + Json(p.lambda).dump() + "\t" + Json(p.mu).dump();
    for (const auto& [name, v] : p.report.metrics) tsv += "\t" + percent(v);
    for (const auto& [name, v] : p.report.aggregates) tsv += "\t" + percent(v);
    tsv += "\t" + Json(p.report.mean_target_rank).dump() + "\n";
    json_points.push_back(
        Json{{"components", p.components}, {"lambda", p.lambda}, {"mu", p.mu}, {"report", p.report.to_json()}});
  }
  fs::create_directories(config.out);
  write_text_file(config.out / "ablation.tsv", tsv);
  write_text_file(config.out / "ablation.json",
                  dump_pretty(Json{{"format", "cotmr-ablation-v1"}, {"points", std::move(json_points)}}));
  return points;
}

std::string trace_show(const RunConfig& config, const std::string& query_id) {
  const auto traces = load_run_traces(config.out);
  std::ostringstream os;
  bool found = false;
  for (const auto& t : traces) {
    if (!query_id.empty() && t.query_id != query_id) continue;
    found = true;
    os << "=== query " << t.query_id << " (" << t.prompt_mode << ", process " << t.process_policy
       << (t.edited ? ", edited" : "") << ")\n";
    os << "reference: " << t.reference_image << "\nmodification: " << t.modification_text << "\n";
    for (const auto& s : t.scales) {
      os << "--- " << s.scale << " scale, backend " << s.backend_id << ", retries " << s.retry_count << "\n";
      os << "[request]\n" << s.request_text;
      if (!s.request_text.ends_with('\n')) os << '\n';
      os << "[reply]\n" << s.raw_reply;
      if (!s.raw_reply.ends_with('\n')) os << '\n';
      if (!s.ok) {
        os << "[parse] " << s.error << "\n";
        continue;
      }
      if (!s.caption.empty()) os << "[caption] " << s.caption << "\n";
      if (s.scale != "image") {
        os << "[existent] " << Json(s.objects.existent).dump() << "\n";
        os << "[nonexistent] " << Json(s.objects.nonexistent).dump() << "\n";
      }
    }
    if (t.failure) os << "failed: " << *t.failure << "\n";
  }
  if (!found) throw Error(ErrorKind::UnknownQuery, "no trace for query \"" + query_id + "\"");
  return os.str();
}

ReasoningOutput trace_edit(const RunConfig& config, const std::string& query_id, Scale scale,
                           const std::string& reply) {
  return edit_and_replay(traces_path(config), query_id, scale, reply);
}

ReplaySummary trace_replay(const RunConfig& config) {
  const auto split = load_run_split(config);
  const auto rankings_path = config.out / kRankingsFile;
  if (!fs::exists(rankings_path)) {
    throw Error(ErrorKind::Io, rankings_path.string() + " not found; run `cotmr retrieve` first");
  }
  auto file = read_rankings(rankings_path);
  std::vector<ReasoningTrace> edited;
  if (fs::exists(config.out / kEditedTraceFile)) edited = read_traces(config.out / kEditedTraceFile);

  ReplaySummary summary;
  const fs::path replay_dir = config.out / "replay";
  fs::create_directories(replay_dir);

  std::map<std::string, Json> new_scores;
  if (!edited.empty()) {
    const auto index = load_index(config, split);
    auto backend = make_embed_backend(config.embed_backend);
    EmbeddingStore store(*backend, index.dim());
    const auto mgs = config.mgs();
    const auto traces = traces_by_id(std::move(edited));
    for (const auto& [qid, t] : traces) {
      if (std::find(file.order.begin(), file.order.end(), qid) == file.order.end()) {
        throw Error(ErrorKind::UnknownQuery, "edited query \"" + qid + "\" is not in " + rankings_path.string());
      }
      auto s = guarded(qid, traces, [&](const ReasoningOutput& r) { return score(r, index, store, mgs); });
      file.rankings.erase(qid);
      file.failed.erase(qid);
      if (s.breakdown) {
        file.rankings.emplace(qid, rank(*s.breakdown, index));
        new_scores.emplace(qid, scores_record(*s.breakdown));
      } else {
        file.failed.emplace(qid, s.failure);
      }
      summary.rescored.push_back(qid);
    }
  }
  write_rankings(replay_dir / kRankingsFile, file);

  if (fs::exists(config.out / kScoresFile)) {
    const auto doc = read_jsonl(config.out / kScoresFile, kScoresFormat);
    std::map<std::string, Json> old_scores;
    for (const auto& [line, rec] : doc.records) old_scores.emplace(rec.value("query_id", std::string()), rec);
    std::vector<Json> records;
    for (const auto& qid : file.order) {
      if (const auto it = new_scores.find(qid); it != new_scores.end()) {
        records.push_back(it->second);
      } else if (const auto old = old_scores.find(qid);
                 old != old_scores.end() && !file.failed.contains(qid)) {
        records.push_back(old->second);
      }
    }
    write_jsonl(replay_dir / kScoresFile, doc.header, records);
  }

  std::set<std::string> failed;
  for (const auto& [qid, kind] : file.failed) failed.insert(qid);
  summary.report = evaluate_split(file.rankings, split, config.metric_plan(), failed, file.fingerprint);
  write_text_file(replay_dir / kReportFile, dump_pretty(summary.report.to_json()));
  return summary;
}

void write_synthetic_workspace(const SyntheticFixture& fixture, std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir / "encoder");
  write_queries(fixture.split.queries, dir / "queries.jsonl");
  write_gallery(fixture.split.gallery, dir / "gallery.jsonl");
  CannedChatBackend::from_fixture(fixture).save(dir / "canned.jsonl");
  TableEmbedBackend::from_fixture(fixture).save(dir / "encoder");
  Json planted = Json::array();
  for (const auto& p : fixture.planted) {
    planted.push_back(Json{{"query_id", p.query_id},
                           {"target_id", p.target_id},
                           {"distractor_id", p.distractor_id},
                           {"target_caption", p.target_caption},
                           {"existent_objects", p.existent_objects},
                           {"nonexistent_objects", p.nonexistent_objects}});
  }
  write_text_file(dir / "planted.json", planted.dump(2) + "\n");
  std::ostringstream conf;
  conf << "# synthetic split, seed " << seed << "\n"
       << "queries = queries.jsonl\ngallery = gallery.jsonl\nbenchmark = synthetic\n"
       << "lambda = " << Json(kSyntheticHyperparams.lambda).dump() << "\nmu = "
       << Json(kSyntheticHyperparams.mu).dump() << "\n"
       << "chat_backend = mock:canned.jsonl\nembed_backend = table:encoder\nout = run\nseed = " << seed << "\n";
  write_text_file(dir / "run.conf", conf.str());
}

}  // namespace cotmr
