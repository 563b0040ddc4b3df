#include "cotmr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "cotmr/error.hpp"
#include "cotmr/jsonl.hpp"

namespace cotmr {

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double SplitMix64::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t SplitMix64::below(std::size_t n) { return static_cast<std::size_t>(next() % n); }

namespace {

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Vec normalized(Vec v) {
  const double n = std::sqrt(dot(v, v));
  for (auto& x : v) x /= n;
  return v;
}

Vec random_unit(SplitMix64& rng, std::size_t dim) {
  Vec v(dim);
  for (auto& x : v) x = rng.normal();
  return normalized(std::move(v));
}

// Random unit vector orthogonal to every vector in basis (assumed orthonormal).
Vec random_orthogonal(SplitMix64& rng, std::size_t dim, const std::vector<Vec>& basis) {
  Vec v = random_unit(rng, dim);
  for (const auto& b : basis) {
    const double p = dot(v, b);
    for (std::size_t i = 0; i < dim; ++i) v[i] -= p * b[i];
  }
  return normalized(std::move(v));
}

Vec combine(double a, const Vec& x, double b, const Vec& y) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
  return normalized(std::move(out));
}

std::string numbered(const char* fmt, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, i);
  return buf;
}

std::string json_array(const std::vector<std::string>& items) { return dump_compact(Json(items)); }

}  // namespace

SyntheticFixture generate_synthetic_split(std::uint64_t seed, std::size_t n_queries, std::size_t gallery_size,
                                          std::size_t dim) {
  if (n_queries < 1) throw Error(ErrorKind::InvalidSize, "n_queries must be >= 1");
  if (gallery_size < kSubsetSize) throw Error(ErrorKind::InvalidSize, "gallery_size must be >= 6");
  if (gallery_size < 2 * n_queries) {
    throw Error(ErrorKind::InvalidSize, "gallery_size must be >= 2 * n_queries (one target and one distractor each)");
  }
  if (dim < 4) throw Error(ErrorKind::InvalidSize, "dim must be >= 4");

  SplitMix64 rng(seed);
  SyntheticFixture fx;
  fx.dim = dim;
  fx.split.name = "synthetic";
  fx.split.benchmark_kind = BenchmarkKind::synthetic;
  fx.split.defaults = kSyntheticHyperparams;

  // Random placement of gallery slots: slot_of[k] is the gallery position of the k-th planted image.
  std::vector<std::size_t> slot_of(gallery_size);
  for (std::size_t i = 0; i < gallery_size; ++i) slot_of[i] = i;
  for (std::size_t i = gallery_size - 1; i > 0; --i) std::swap(slot_of[i], slot_of[rng.below(i + 1)]);

  std::vector<Vec> image_vecs(gallery_size);
  for (std::size_t i = 0; i < gallery_size; ++i) {
    fx.split.gallery.entries.push_back({numbered("img_%05zu", i), numbered("synthetic://img_%05zu", i)});
  }

  for (std::size_t q = 0; q < n_queries; ++q) {
    const Vec caption_dir = random_unit(rng, dim);
    const Vec eo_dir = random_orthogonal(rng, dim, {caption_dir});
    const Vec neo_dir = random_orthogonal(rng, dim, {caption_dir, eo_dir});

    const std::size_t target_slot = slot_of[2 * q];
    const std::size_t distractor_slot = slot_of[2 * q + 1];
    image_vecs[target_slot] = combine(1.0, caption_dir, 1.0, eo_dir);
    image_vecs[distractor_slot] = combine(1.5, caption_dir, 1.0, neo_dir);

    PlantedQuery pq;
    pq.query_id = numbered("q%05zu", q);
    pq.target_caption = numbered("a planted scene number %zu", q);
    pq.existent_objects = {numbered("key object alpha %zu", q), numbered("key object beta %zu", q)};
    pq.nonexistent_objects = {numbered("unwanted object %zu", q), numbered("stray clutter %zu", q)};
    pq.target_id = fx.split.gallery.entries[target_slot].image_id;
    pq.distractor_id = fx.split.gallery.entries[distractor_slot].image_id;

    fx.text_vectors[pq.target_caption] = caption_dir;
    fx.text_vectors[pq.existent_objects[0] + ", " + pq.existent_objects[1]] = eo_dir;
    for (const auto& obj : pq.existent_objects) {
      fx.text_vectors[obj] = combine(1.0, eo_dir, 0.5, random_unit(rng, dim));
    }
    fx.text_vectors[pq.nonexistent_objects[0]] = neo_dir;
    fx.text_vectors[pq.nonexistent_objects[1]] = random_unit(rng, dim);
    fx.text_vectors[pq.nonexistent_objects[0] + ", " + pq.nonexistent_objects[1]] =
        combine(1.0, neo_dir, 1.0, fx.text_vectors[pq.nonexistent_objects[1]]);

    ComposedQuery cq;
    cq.query_id = pq.query_id;
    cq.modification_text = numbered("apply planted edit %zu to the scene", q);
    cq.targets = {pq.target_id};

    // Reference image and subset fillers come from outside this query's planted pair.
    auto random_other = [&](const std::vector<std::string>& taken) {
      for (;;) {
        const auto& id = fx.split.gallery.entries[rng.below(gallery_size)].image_id;
        if (std::find(taken.begin(), taken.end(), id) == taken.end()) return id;
      }
    };
    cq.reference_image = random_other({pq.target_id, pq.distractor_id});
    std::vector<std::string> subset{pq.target_id, pq.distractor_id};
    while (subset.size() < kSubsetSize) subset.push_back(random_other(subset));
    // Deterministic shuffle so the target is not always first.
    for (std::size_t i = subset.size() - 1; i > 0; --i) std::swap(subset[i], subset[rng.below(i + 1)]);
    cq.subset = std::move(subset);

    fx.split.queries.push_back(std::move(cq));
    fx.planted.push_back(std::move(pq));
  }

  for (std::size_t i = 0; i < gallery_size; ++i) {
    if (image_vecs[i].empty()) image_vecs[i] = random_unit(rng, dim);
    fx.image_vectors[fx.split.gallery.entries[i].locator] = std::move(image_vecs[i]);
  }
  return fx;
}

std::string synthetic_image_reply(const PlantedQuery& q) {
  return "1. Image understanding: the reference image shows an unremarkable scene.\n"
         "2. Modification text understanding: the edit asks for the planted change.\n"
         "3. Modification implementation: apply the change while keeping the layout.\n"
         "4. Target image caption generation: describe the edited scene in one sentence.\n"
         "FINAL_CAPTION: " +
         q.target_caption + "\n";
}

std::string synthetic_object_reply(const PlantedQuery& q) {
  return "1. Describe the Reference Image: a generic scene with some clutter.\n"
         "2. Understand the Modification Instructions: introduce the key objects.\n"
         "3. Apply the Modifications: keep the key objects, drop the unwanted ones.\n"
         "4. Determine the Content of the Target Image: list what must and must not appear.\n"
         "EXISTENT_OBJECTS: " +
         json_array(q.existent_objects) + "\nNONEXISTENT_OBJECTS: " + json_array(q.nonexistent_objects) + "\n";
}

std::string synthetic_merged_reply(const PlantedQuery& q) {
  return "1. Image understanding: the reference image shows an unremarkable scene.\n"
         "2. Modification text understanding: the edit asks for the planted change.\n"
         "3. Modification implementation: apply the change while keeping the layout.\n"
         "4. Target image caption generation: describe the scene and list the objects.\n"
         "FINAL_CAPTION: " +
         q.target_caption + "\nEXISTENT_OBJECTS: " + json_array(q.existent_objects) +
         "\nNONEXISTENT_OBJECTS: " + json_array(q.nonexistent_objects) + "\n";
}

}  // namespace cotmr
