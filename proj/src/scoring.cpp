#include "cotmr/scoring.hpp"

#include <algorithm>
#include <numeric>

#include "cotmr/error.hpp"

namespace cotmr {

std::string_view to_string(Aggregation agg) { return agg == Aggregation::concat ? "concat" : "mean"; }

Aggregation parse_aggregation(std::string_view name) {
  if (name == "concat") return Aggregation::concat;
  if (name == "mean") return Aggregation::mean;
  throw Error(ErrorKind::InvalidConfig, "unknown aggregation \"" + std::string(name) + "\" (expected concat|mean)");
}

std::string concat_objects(const std::vector<std::string>& objects) {
  std::string out;
  for (const auto& o : objects) {
    if (!out.empty()) out += kObjectSeparator;
    out += o;
  }
  return out;
}

void MgsConfig::validate() const {
  if (!(lambda >= 0.0)) throw Error(ErrorKind::InvalidConfig, "lambda must be >= 0");
  if (!(mu >= 0.0)) throw Error(ErrorKind::InvalidConfig, "mu must be >= 0");
  if (!use_base && !use_pos && !use_neg) {
    throw Error(ErrorKind::InvalidConfig, "at least one of base, pos, neg must be enabled");
  }
}

std::string MgsConfig::components() const {
  std::string s;
  auto add = [&](const char* name) { s += (s.empty() ? "" : ",") + std::string(name); };
  if (use_base) add("base");
  if (use_pos) add("pos");
  if (use_neg) add("neg");
  return s;
}

void MgsConfig::set_components(std::string_view list) {
  if (list == "all") {
    use_base = use_pos = use_neg = true;
    return;
  }
  use_base = use_pos = use_neg = false;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto end = list.find(',', start);
    if (end == std::string_view::npos) end = list.size();
    const auto item = list.substr(start, end - start);
    if (item == "base") {
      use_base = true;
    } else if (item == "pos") {
      use_pos = true;
    } else if (item == "neg") {
      use_neg = true;
    } else {
      throw Error(ErrorKind::InvalidConfig, "unknown score component \"" + std::string(item) + "\" (expected base,pos,neg)");
    }
    start = end + 1;
  }
  validate();
}

std::vector<double> mean_rows(const std::vector<std::vector<double>>& rows, std::size_t n) {
  std::vector<double> out(n, 0.0);
  if (rows.empty()) return out;
  for (const auto& r : rows) {
    if (r.size() != n) throw Error(ErrorKind::LengthMismatch, "similarity rows differ in length");
    for (std::size_t j = 0; j < n; ++j) out[j] += r[j];
  }
  const double count = static_cast<double>(rows.size());
  for (auto& x : out) x /= count;
  return out;
}

namespace {

std::vector<double> text_row(const std::string& text, const GalleryIndex& index, EmbeddingStore& embedder) {
  return similarity_row(embedder.embed_text(text), index);
}

std::vector<double> object_score(const std::vector<std::string>& objects, const GalleryIndex& index,
                                 EmbeddingStore& embedder, Aggregation aggregation) {
  if (objects.empty()) return std::vector<double>(index.size(), 0.0);
  if (aggregation == Aggregation::concat) return text_row(concat_objects(objects), index, embedder);
  std::vector<std::vector<double>> rows;
  rows.reserve(objects.size());
  for (const auto& rec : embedder.embed_texts(objects)) rows.push_back(similarity_row(rec.vector, index));
  return mean_rows(rows, index.size());
}

}  // namespace

std::vector<double> score_base(const ReasoningOutput& reasoning, const GalleryIndex& index, EmbeddingStore& embedder) {
  if (reasoning.target_caption.empty()) {
    throw Error(ErrorKind::EmptyCaption, "query \"" + reasoning.query_id + "\" has no target caption");
  }
  return text_row(reasoning.target_caption, index, embedder);
}

std::vector<double> score_pos(const ReasoningOutput& reasoning, const GalleryIndex& index, EmbeddingStore& embedder,
                              Aggregation aggregation) {
  return object_score(reasoning.existent_objects, index, embedder, aggregation);
}

std::vector<double> score_neg(const ReasoningOutput& reasoning, const GalleryIndex& index, EmbeddingStore& embedder,
                              Aggregation aggregation) {
  return object_score(reasoning.nonexistent_objects, index, embedder, aggregation);
}

ScoreBreakdown fuse(const std::string& query_id, std::vector<double> base, std::vector<double> pos,
                    std::vector<double> neg, const MgsConfig& config) {
  config.validate();
  std::size_t n = 0;
  bool have_n = false;
  auto take = [&](std::vector<double>& row, bool enabled, const char* name) {
    if (!enabled) return;
    if (!have_n) {
      n = row.size();
      have_n = true;
    } else if (row.size() != n) {
      throw Error(ErrorKind::LengthMismatch, std::string(name) + " row has length " + std::to_string(row.size()) +
                                                 ", expected " + std::to_string(n));
    }
  };
  take(base, config.use_base, "base");
  take(pos, config.use_pos, "pos");
  take(neg, config.use_neg, "neg");

  ScoreBreakdown b;
  b.query_id = query_id;
  b.config = config;
  b.base = config.use_base ? std::move(base) : std::vector<double>(n, 0.0);
  b.pos = config.use_pos ? std::move(pos) : std::vector<double>(n, 0.0);
  b.neg = config.use_neg ? std::move(neg) : std::vector<double>(n, 0.0);
  b.fused.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    if (config.use_base) s += b.base[j];
    if (config.use_pos) s += config.lambda * b.pos[j];
    if (config.use_neg) s -= config.mu * b.neg[j];
    b.fused[j] = s;
  }
  return b;
}

ScoreBreakdown score(const ReasoningOutput& reasoning, const GalleryIndex& index, EmbeddingStore& embedder,
                     const MgsConfig& config) {
  config.validate();
  std::vector<double> base, pos, neg;
  if (config.use_base) base = score_base(reasoning, index, embedder);
  if (config.use_pos) pos = score_pos(reasoning, index, embedder, config.eo_aggregation);
  if (config.use_neg) neg = score_neg(reasoning, index, embedder, config.neo_aggregation);
  return fuse(reasoning.query_id, std::move(base), std::move(pos), std::move(neg), config);
}

Ranking rank_scores(const std::string& query_id, std::span<const double> scores, const std::vector<std::string>& ids) {
  if (scores.size() != ids.size()) {
    throw Error(ErrorKind::LengthMismatch, "query \"" + query_id + "\": " + std::to_string(scores.size()) +
                                               " scores for " + std::to_string(ids.size()) + " gallery images");
  }
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  Ranking r;
  r.query_id = query_id;
  r.items.reserve(ids.size());
  for (auto j : order) r.items.push_back({ids[j], scores[j]});
  return r;
}

Ranking rank(const ScoreBreakdown& breakdown, const GalleryIndex& index) {
  return rank_scores(breakdown.query_id, breakdown.fused, index.ids());
}

ComponentRows component_rows(const ReasoningOutput& reasoning, const GalleryIndex& index, EmbeddingStore& embedder) {
  ComponentRows rows;
  rows.query_id = reasoning.query_id;
  rows.base = score_base(reasoning, index, embedder);
  rows.pos_concat = score_pos(reasoning, index, embedder, Aggregation::concat);
  rows.pos_mean = score_pos(reasoning, index, embedder, Aggregation::mean);
  rows.neg_mean = score_neg(reasoning, index, embedder, Aggregation::mean);
  rows.neg_concat = score_neg(reasoning, index, embedder, Aggregation::concat);
  return rows;
}

ScoreBreakdown fuse(const ComponentRows& rows, const MgsConfig& config) {
  return fuse(rows.query_id, rows.base,
              config.eo_aggregation == Aggregation::concat ? rows.pos_concat : rows.pos_mean,
              config.neo_aggregation == Aggregation::mean ? rows.neg_mean : rows.neg_concat, config);
}

}  // namespace cotmr
