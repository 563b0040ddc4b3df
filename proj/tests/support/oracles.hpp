#pragma once

// Brute-force reference implementations used to check the engine. They work
// on raw (unnormalized) vectors and plain loops, sharing no code with it.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

namespace cotmr::oracle {

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct MgsInstance {
  std::vector<std::vector<double>> gallery;        // raw image vectors
  std::vector<double> caption;                     // raw caption vector
  std::vector<double> eo_concat;                   // vector of the joined EO text
  std::vector<std::vector<double>> eo_items;       // per-object EO vectors
  std::vector<double> neo_concat;                  // vector of the joined NEO text
  std::vector<std::vector<double>> neo_items;      // per-object NEO vectors
  double lambda = 1.0;
  double mu = 0.5;
  bool use_base = true, use_pos = true, use_neg = true;
  bool eo_mean = false;   // default: concat
  bool neo_concat_mode = false;  // default: mean
};

// S_j = [base] cos(c, g_j) + [pos] lambda * P_j - [neg] mu * N_j.
inline std::vector<double> mgs_scores(const MgsInstance& in) {
  std::vector<double> out;
  for (const auto& g : in.gallery) {
    double base = cosine(in.caption, g);
    double pos = 0.0;
    if (!in.eo_items.empty()) {
      if (in.eo_mean) {
        for (const auto& e : in.eo_items) pos += cosine(e, g);
        pos /= static_cast<double>(in.eo_items.size());
      } else {
        pos = cosine(in.eo_concat, g);
      }
    }
    double neg = 0.0;
    if (!in.neo_items.empty()) {
      if (in.neo_concat_mode) {
        neg = cosine(in.neo_concat, g);
      } else {
        for (const auto& n : in.neo_items) neg += cosine(n, g);
        neg /= static_cast<double>(in.neo_items.size());
      }
    }
    double s = 0.0;
    if (in.use_base) s += base;
    if (in.use_pos) s += in.lambda * pos;
    if (in.use_neg) s -= in.mu * neg;
    out.push_back(s);
  }
  return out;
}

// Selection order: highest score first, equal scores by smaller id.
inline std::vector<std::string> rank_ids(const std::vector<double>& scores, const std::vector<std::string>& ids) {
  std::vector<bool> used(ids.size(), false);
  std::vector<std::string> out;
  for (std::size_t round = 0; round < ids.size(); ++round) {
    std::size_t best = ids.size();
    for (std::size_t j = 0; j < ids.size(); ++j) {
      if (used[j]) continue;
      if (best == ids.size() || scores[j] > scores[best] || (scores[j] == scores[best] && ids[j] < ids[best])) best = j;
    }
    used[best] = true;
    out.push_back(ids[best]);
  }
  return out;
}

inline bool contains(const std::vector<std::string>& v, const std::string& x) {
  for (const auto& y : v) {
    if (y == x) return true;
  }
  return false;
}

inline double recall(const std::vector<std::string>& ranked, const std::vector<std::string>& targets, std::size_t k) {
  for (std::size_t i = 0; i < k; ++i) {
    if (contains(targets, ranked[i])) return 1.0;
  }
  return 0.0;
}

inline double recall_subset(const std::vector<std::string>& ranked, const std::vector<std::string>& subset,
                            const std::vector<std::string>& targets, std::size_t k) {
  std::vector<std::string> restricted;
  for (const auto& id : ranked) {
    if (contains(subset, id)) restricted.push_back(id);
  }
  return recall(restricted, targets, k);
}

inline double average_precision(const std::vector<std::string>& ranked, const std::vector<std::string>& targets,
                                std::size_t k) {
  double sum = 0.0;
  for (std::size_t i = 1; i <= k; ++i) {
    if (!contains(targets, ranked[i - 1])) continue;
    std::size_t hits = 0;
    for (std::size_t j = 0; j < i; ++j) hits += contains(targets, ranked[j]) ? 1 : 0;
    sum += static_cast<double>(hits) / static_cast<double>(i);
  }
  const std::size_t norm = k < targets.size() ? k : targets.size();
  return sum / static_cast<double>(norm);
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cotmr-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace cotmr::oracle
