// cotmr: composed image retrieval pipeline driver.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cotmr/backends.hpp"
#include "cotmr/contract.hpp"
#include "cotmr/error.hpp"
#include "cotmr/pipeline.hpp"
#include "cotmr/synthetic.hpp"

namespace fs = std::filesystem;
using namespace cotmr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitUsage = 2;
constexpr int kExitBackend = 3;

// Config keys exposed as flags on every pipeline subcommand.
struct ConfigKey {
  const char* key;
  const char* flags;
  const char* help;
};

const ConfigKey kConfigKeys[] = {
    {"split", "--split", "directory holding queries.jsonl and gallery.jsonl"},
    {"queries", "--queries", "cotmr-queries-v1 file"},
    {"gallery", "--gallery", "cotmr-gallery-v1 file"},
    {"benchmark", "--benchmark", "fashioniq|cirr|circo|synthetic"},
    {"lambda", "--lambda", "weight of the existent-object reward"},
    {"mu", "--mu", "weight of the nonexistent-object penalty"},
    {"components", "--components", "enabled score components, e.g. base,pos,neg"},
    {"eo_agg", "--eo-agg", "existent-object aggregation: concat|mean"},
    {"neo_agg", "--neo-agg", "nonexistent-object aggregation: mean|concat"},
    {"plan", "--plan", "metric plan: fashioniq|cirr|circo|synthetic"},
    {"chat_backend", "--chat-backend,--backend", "mock:<canned.jsonl> or adapter URL"},
    {"embed_backend", "--embed-backend", "hash:<dim>, table:<dir> or adapter URL"},
    {"prompt_mode", "--prompt-mode", "no-cot|circot-0|circot-fs"},
    {"process", "--process", "two|one"},
    {"prompt_dir", "--prompt-dir", "directory overriding the built-in prompt templates"},
    {"out", "--out", "run directory"},
    {"seed", "--seed", "run seed"},
    {"retry_budget", "--retry-budget", "re-prompts allowed after a malformed reply"},
    {"concurrency", "--concurrency", "reasoning calls in flight"},
    {"embed_batch", "--embed-batch", "images per embed request (<= 256)"},
    {"dump_scores", "--dump-scores", "write per-component score dumps (true|false)"},
};

struct ConfigFlags {
  std::string config_path;
  std::vector<std::pair<std::string, CLI::Option*>> options;
  std::map<std::string, std::string> values;
};

void add_config_flags(CLI::App* app, ConfigFlags& flags) {
  app->add_option("--config", flags.config_path, "config file: one JSON object or key = value lines");
  for (const auto& k : kConfigKeys) {
    auto* opt = app->add_option(k.flags, flags.values[k.key], k.help);
    flags.options.emplace_back(k.key, opt);
  }
}

Json scalar(const std::string& text) {
  Json v = Json::parse(text, nullptr, false);
  if (v.is_discarded() || v.is_structured()) return Json(text);
  return v;
}

RunConfig resolve_config(const ConfigFlags& flags) {
  RunConfig config = flags.config_path.empty() ? RunConfig{} : RunConfig::load(flags.config_path);
  Json overrides = Json::object();
  for (const auto& [key, opt] : flags.options) {
    if (opt->count() == 0) continue;
    overrides[key] = scalar(flags.values.at(key));
  }
  config.merge(overrides);
  return config;
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto& item : split_list(s, ',')) {
    const Json v = Json::parse(item, nullptr, false);
    if (!v.is_number()) throw Error(ErrorKind::InvalidConfig, std::string(what) + ": \"" + item + "\" is not a number");
    out.push_back(v.get<double>());
  }
  return out;
}

int write_synth(std::uint64_t seed, std::size_t n, std::size_t gallery_size, std::size_t dim, const fs::path& dir) {
  write_synthetic_workspace(generate_synthetic_split(seed, n, gallery_size, dim), seed, dir);
  std::cout << "wrote synthetic split (" << n << " queries, " << gallery_size << " images, dim " << dim << ") to "
            << dir.string() << "\n";
  return kExitOk;
}

int exit_code_for(const Error& e) {
  return e.kind() == ErrorKind::BackendUnavailable ? kExitBackend : kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cotmr: training-free composed image retrieval with multi-scale reasoning"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write a seeded planted synthetic split with mock fixtures");
  std::uint64_t synth_seed = 7;
  std::size_t synth_n = 200, synth_gallery = 1000, synth_dim = 32;
  std::string synth_out = "synthetic";
  synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
  synth->add_option("--n-queries", synth_n, "number of queries")->capture_default_str();
  synth->add_option("--gallery-size", synth_gallery, "number of gallery images")->capture_default_str();
  synth->add_option("--dim", synth_dim, "embedding dimension")->capture_default_str();
  synth->add_option("--out", synth_out, "output directory")->capture_default_str();

  // prompt
  auto* prompt = app.add_subcommand("prompt", "print the request sent for one query");
  ConfigFlags prompt_flags;
  add_config_flags(prompt, prompt_flags);
  std::string prompt_scale = "image", prompt_query, prompt_ref, prompt_text;
  prompt->add_option("--scale", prompt_scale, "image|object|merged")->capture_default_str();
  prompt->add_option("--query-id", prompt_query, "query of the configured split");
  prompt->add_option("--reference", prompt_ref, "reference image id (instead of --query-id)");
  prompt->add_option("--text", prompt_text, "modification text (instead of --query-id)");

  auto stage = [&](const char* name, const char* help, ConfigFlags& flags) {
    auto* sub = app.add_subcommand(name, help);
    add_config_flags(sub, flags);
    return sub;
  };
  ConfigFlags embed_flags, reason_flags, retrieve_flags, eval_flags, ablate_flags, show_flags, edit_flags,
      replay_flags;
  auto* embed = stage("embed", "embed the gallery into <out>/gallery.emb.jsonl", embed_flags);
  auto* reason = stage("reason", "run multi-scale reasoning into <out>/traces.jsonl", reason_flags);
  auto* retrieve = stage("retrieve", "score and rank the gallery for every query", retrieve_flags);
  bool retrieve_force = false;
  retrieve->add_flag("--force", retrieve_force, "accept traces or embeddings from another configuration");

  auto* evaluate = stage("evaluate", "aggregate rankings into a metric report", eval_flags);
  std::vector<std::string> eval_rankings;
  bool eval_force = false;
  evaluate->add_option("--rankings", eval_rankings, "rankings files (default <out>/rankings.jsonl)");
  evaluate->add_flag("--force", eval_force, "aggregate despite fingerprint mismatches");

  auto* ablate = stage("ablate", "sweep lambda x mu x component sets over cached traces", ablate_flags);
  std::string ablate_lambdas, ablate_mus, ablate_sets;
  auto* lambdas_opt = ablate->add_option("--lambdas", ablate_lambdas, "comma-separated lambda values");
  auto* mus_opt = ablate->add_option("--mus", ablate_mus, "comma-separated mu values");
  auto* sets_opt =
      ablate->add_option("--component-sets", ablate_sets, "';'-separated component sets, e.g. \"base;base,pos,neg\"");

  auto* trace = app.add_subcommand("trace", "inspect and correct reasoning traces");
  trace->require_subcommand(1);
  auto* show = trace->add_subcommand("show", "print per-scale transcripts");
  add_config_flags(show, show_flags);
  std::string show_query;
  show->add_option("--query-id", show_query, "only this query");
  auto* edit = trace->add_subcommand("edit", "replace one stored reply and re-parse it");
  add_config_flags(edit, edit_flags);
  std::string edit_query, edit_scale = "image", edit_reply, edit_reply_file;
  edit->add_option("--query-id", edit_query, "query to edit")->required();
  edit->add_option("--scale", edit_scale, "image|object")->capture_default_str();
  auto* reply_opt = edit->add_option("--reply", edit_reply, "replacement reply text");
  auto* reply_file_opt = edit->add_option("--reply-file", edit_reply_file, "file holding the replacement reply");
  reply_opt->excludes(reply_file_opt);
  auto* replay = trace->add_subcommand("replay", "re-score edited queries and re-evaluate");
  add_config_flags(replay, replay_flags);

  auto* contract = app.add_subcommand("contract", "check a model adapter against the wire protocol");
  std::string contract_url;
  contract->add_option("--url", contract_url, "adapter base URL")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return write_synth(synth_seed, synth_n, synth_gallery, synth_dim, synth_out);

    if (*prompt) {
      const auto config = resolve_config(prompt_flags);
      std::optional<PromptLibrary> custom;
      if (!config.prompt_dir.empty()) custom = PromptLibrary::load(config.prompt_dir);
      const PromptLibrary& lib = custom ? *custom : PromptLibrary::builtin();
      std::string ref = prompt_ref, text = prompt_text;
      if (!prompt_query.empty()) {
        const auto split = load_run_split(config);
        bool found = false;
        for (const auto& q : split.queries) {
          if (q.query_id == prompt_query) {
            ref = q.reference_image;
            text = q.modification_text;
            found = true;
          }
        }
        if (!found) throw Error(ErrorKind::UnknownQuery, "no query \"" + prompt_query + "\" in the split");
      } else if (ref.empty() || text.empty()) {
        throw Error(ErrorKind::InvalidConfig, "give --query-id, or both --reference and --text");
      }
      const auto req = prompt_scale == "merged" ? build_merged_prompt(config.mode(), ref, text, lib)
                                                : build_prompt(parse_scale(prompt_scale), config.mode(), ref, text, lib);
      std::cout << render_text(req);
      return kExitOk;
    }

    if (*embed) {
      const auto s = run_embed(resolve_config(embed_flags));
      std::cout << "wrote " << s.records << " embeddings (dim " << s.dim << ") to " << s.path.string() << "\n";
      return kExitOk;
    }

    if (*reason) {
      const auto config = resolve_config(reason_flags);
      const auto run = run_reason(config);
      std::cout << "reasoned " << run.traces.size() - run.failed << "/" << run.traces.size() << " queries into "
                << (config.out / kTraceFile).string() << "\n";
      if (run.backend_unavailable && run.failed == run.traces.size()) return kExitBackend;
      return run.failed > 0 ? kExitPartial : kExitOk;
    }

    if (*retrieve) {
      const auto config = resolve_config(retrieve_flags);
      const auto s = run_retrieve(config, retrieve_force);
      std::cout << "ranked " << s.ranked << " queries (" << s.failed << " failed) into "
                << (config.out / kRankingsFile).string() << "\n";
      return s.failed > 0 ? kExitPartial : kExitOk;
    }

    if (*evaluate) {
      const auto config = resolve_config(eval_flags);
      std::vector<fs::path> paths(eval_rankings.begin(), eval_rankings.end());
      const auto report = run_evaluate(config, paths, eval_force);
      std::cout << report.render_table();
      return report.n_failed > 0 ? kExitPartial : kExitOk;
    }

    if (*ablate) {
      const auto config = resolve_config(ablate_flags);
      const auto mgs = config.mgs();
      const auto lambdas = lambdas_opt->count() ? parse_doubles(ablate_lambdas, "--lambdas") : std::vector{mgs.lambda};
      const auto mus = mus_opt->count() ? parse_doubles(ablate_mus, "--mus") : std::vector{mgs.mu};
      const auto sets = sets_opt->count() ? split_list(ablate_sets, ';') : std::vector{mgs.components()};
      const auto points = run_ablate(config, lambdas, mus, sets);
      std::cout << read_text_file(config.out / "ablation.tsv");
      return points.front().report.n_failed > 0 ? kExitPartial : kExitOk;
    }

    if (*show) {
      std::cout << trace_show(resolve_config(show_flags), show_query);
      return kExitOk;
    }

    if (*edit) {
      const auto config = resolve_config(edit_flags);
      if (reply_opt->count() == 0 && reply_file_opt->count() == 0) {
        throw Error(ErrorKind::InvalidConfig, "give --reply or --reply-file");
      }
      const std::string reply = reply_file_opt->count() ? read_text_file(edit_reply_file) : edit_reply;
      const auto out = trace_edit(config, edit_query, parse_scale(edit_scale), reply);
      std::cout << "edited " << edit_query << ": caption \"" << out.target_caption << "\", "
                << out.existent_objects.size() << " existent, " << out.nonexistent_objects.size()
                << " nonexistent objects\n";
      return kExitOk;
    }

    if (*replay) {
      const auto s = trace_replay(resolve_config(replay_flags));
      std::cout << "re-scored " << s.rescored.size() << " edited queries\n" << s.report.render_table();
      return s.report.n_failed > 0 ? kExitPartial : kExitOk;
    }

    if (*contract) {
      ContractOptions opts;
      if (const char* t = std::getenv("COTMR_BACKEND_TOKEN"); t && *t) opts.token = t;
      const auto checks = run_contract_suite(contract_url, opts);
      bool all = true;
      for (const auto& c : checks) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : ": " + c.detail) << "\n";
        all = all && c.passed;
      }
      return all ? kExitOk : kExitPartial;
    }
  } catch (const Error& e) {
    std::cerr << "cotmr: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "cotmr: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
