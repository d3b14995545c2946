#include <cstdio>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "genrec/pipeline.hpp"

namespace {

void print_error(const std::string& code, const std::string& message) {
  nlohmann::json j;
  j["error"] = code;
  j["message"] = message;
  std::cerr << j.dump() << std::endl;
}

struct Common {
  std::string config;
  std::string workdir = "work";
  std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "INI configuration file");
  cmd->add_option("--seed", c.seed, "Global RNG seed (overrides the config and GENREC_SEED)");
  cmd->add_option("--workdir", c.workdir, "Pipeline working directory");
}

genrec::PipelineConfig resolve(const Common& c) {
  auto cfg = c.config.empty() ? genrec::default_config() : genrec::load_config(c.config);
  if (const char* env = std::getenv("GENREC_SEED"); env && *env) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (*end) throw genrec::Error("invalid_config", "GENREC_SEED is not an integer");
    cfg.apply_seed(v);
  }
  if (c.seed) cfg.apply_seed(*c.seed);
  return cfg;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  genrec::tune_allocator();
  CLI::App app{"Generative sequential recommender pipeline"};
  app.require_subcommand(1);
  Common common;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus into <workdir>/raw");
  add_common(synth, common);
  std::optional<std::string> pattern;
  std::optional<int> items, users;
  synth->add_option("--pattern", pattern, "chain or clustered");
  synth->add_option("--items", items, "Catalog size (chain pattern)");
  synth->add_option("--users", users, "Number of users (default: twice the catalog)");

  auto* ingest = app.add_subcommand("ingest", "Filter, split and store a corpus");
  add_common(ingest, common);
  std::string interactions, metadata;
  ingest->add_option("--interactions", interactions, "Interaction TSV (default: <workdir>/raw/interactions.tsv)");
  ingest->add_option("--metadata", metadata, "Item metadata JSONL (default: <workdir>/raw/items.jsonl)");

  auto* embed = app.add_subcommand("embed", "Compute semantic and behavioural item embeddings");
  add_common(embed, common);
  auto* index = app.add_subcommand("index", "Build dual-source item indices");
  add_common(index, common);
  auto* train_initial = app.add_subcommand("train-initial", "Initial multi-task training");
  add_common(train_initial, common);
  auto* train_anneal = app.add_subcommand("train-anneal", "Annealing adapter tuning");
  add_common(train_anneal, common);

  auto* rec = app.add_subcommand("recommend", "Top-k recommendations for one user");
  add_common(rec, common);
  std::string user;
  int k = 10;
  rec->add_option("--user", user, "User id")->required();
  rec->add_option("--k", k, "Number of items");

  auto* evaluate = app.add_subcommand("evaluate", "Leave-one-out test metrics");
  add_common(evaluate, common);
  auto* ablate = app.add_subcommand("ablate", "Run the configured ablation plan");
  add_common(ablate, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("usage", e.what());
    return 2;
  }

  try {
    auto cfg = resolve(common);
    const genrec::Workdir wd{common.workdir};
    genrec::WorkdirLock lock(wd);
    if (synth->parsed()) {
      if (pattern) cfg.synth.pattern = *pattern;
      if (items) cfg.synth.items = *items;
      if (users) cfg.synth.users = *users;
      genrec::run_synth(cfg, wd.path("raw"));
    } else if (ingest->parsed()) {
      cfg.interactions = !interactions.empty() ? interactions
                         : !cfg.interactions.empty() ? cfg.interactions
                                                     : wd.path("raw/interactions.tsv");
      cfg.metadata = !metadata.empty() ? metadata : !cfg.metadata.empty() ? cfg.metadata : wd.path("raw/items.jsonl");
      genrec::run_ingest(cfg, wd);
    } else if (embed->parsed()) {
      genrec::run_embed(cfg, wd);
    } else if (index->parsed()) {
      genrec::run_index(cfg, wd);
    } else if (train_initial->parsed()) {
      genrec::run_train_initial(cfg, wd, log_line);
    } else if (train_anneal->parsed()) {
      genrec::run_train_anneal(cfg, wd, log_line);
    } else if (rec->parsed()) {
      const auto out = genrec::run_recommend(cfg, wd, user, k);
      for (size_t i = 0; i < out.size(); ++i)
        std::printf("%s\t%zu\t%s\t%.6f\n", user.c_str(), i + 1, out[i].item_id.c_str(), out[i].log_prob);
    } else if (evaluate->parsed()) {
      const auto rep = genrec::run_evaluate(cfg, wd);
      std::cout << rep.to_jsonl();
    } else if (ablate->parsed()) {
      genrec::run_ablate(cfg, wd, log_line);
      std::cout << genrec::read_file(wd.report("ablation.tsv"));
    }
  } catch (const genrec::Error& e) {
    print_error(e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
