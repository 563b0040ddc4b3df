#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cotmr/query_model.hpp"

namespace cotmr {

// Portable deterministic generator (splitmix64); the standard distributions are
// implementation-defined, so fixtures use this instead.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  double uniform();  // [0, 1)
  double normal();   // Box-Muller, N(0, 1)
  std::size_t below(std::size_t n);

 private:
  std::uint64_t state_;
};

// What the mock reasoner is supposed to say for one synthetic query.
struct PlantedQuery {
  std::string query_id;
  std::string target_caption;
  std::vector<std::string> existent_objects;
  std::vector<std::string> nonexistent_objects;
  std::string target_id;
  std::string distractor_id;
};

struct SyntheticFixture {
  DatasetSplit split;
  std::size_t dim = 0;
  // Exact input string -> planted unit vector.
  std::map<std::string, std::vector<double>> text_vectors;
  // Gallery locator -> planted unit vector.
  std::map<std::string, std::vector<double>> image_vectors;
  std::vector<PlantedQuery> planted;
};

// Weights the planted construction is designed around.
inline constexpr Hyperparams kSyntheticHyperparams{1.0, 0.5};

// Each query gets orthonormal caption / EO / NEO directions c, e, n. The target
// embeds as normalize(c + e); one distractor embeds as normalize(1.5 c + n), so
// it wins on caption similarity alone but loses once EO reward and NEO penalty
// apply. All other images are random unit vectors.
// Throws Error{InvalidSize} unless n_queries >= 1, gallery_size >= max(6, 2 n_queries)
// and dim >= 4.
SyntheticFixture generate_synthetic_split(std::uint64_t seed, std::size_t n_queries, std::size_t gallery_size,
                                          std::size_t dim);

// Canned LVLM transcripts for a planted query, in the marker grammar.
std::string synthetic_image_reply(const PlantedQuery& q);
std::string synthetic_object_reply(const PlantedQuery& q);
std::string synthetic_merged_reply(const PlantedQuery& q);

}  // namespace cotmr
