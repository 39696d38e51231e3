#include "drgr/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "drgr/agent.hpp"
#include "drgr/dataprep.hpp"
#include "drgr/envsim.hpp"
#include "drgr/evalkit.hpp"
#include "drgr/manifest.hpp"

namespace drgr::pipeline {

namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void check_common(const RunConfig& cfg) {
  if (cfg.workspace.empty()) throw UsageError("workspace must not be empty");
  if (cfg.threads < 1) throw UsageError("threads must be >= 1");
  if (cfg.history_len < 1) throw UsageError("history_len must be >= 1");
  if (cfg.episode_len < 1) throw UsageError("episode_len must be >= 1");
}

env::EnvConfig env_config(const RunConfig& cfg) {
  env::EnvConfig ec;
  ec.history_len = cfg.history_len;
  ec.gamma = cfg.gamma;
  ec.episode_len = cfg.episode_len;
  ec.reward_override = cfg.reward_override;
  return ec;
}

agent::TrainConfig train_config(const RunConfig& cfg, std::uint64_t seed) {
  agent::TrainConfig tc;
  tc.gamma = cfg.gamma;
  tc.batch = cfg.batch_size;
  tc.lr = cfg.agent_lr;
  tc.weight_decay = cfg.weight_decay;
  tc.episodes = cfg.episodes;
  tc.episode_len = cfg.episode_len;
  tc.tau = cfg.tau;
  tc.replay_capacity = cfg.replay_capacity;
  tc.ou_theta = cfg.ou_theta;
  tc.ou_sigma_start = cfg.ou_sigma_start;
  tc.ou_sigma_end = cfg.ou_sigma_end;
  tc.td_clip = cfg.td_clip;
  tc.action_penalty = cfg.action_penalty;
  tc.freeze_item_embeddings = cfg.freeze_item_embeddings;
  tc.eval_every = cfg.eval_every;
  tc.seed = seed;
  return tc;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void cmd_prepare(const RunConfig& cfg) {
  check_common(cfg);
  if (cfg.ratings_csv.empty()) throw UsageError("ratings_csv is not set");
  if (!fs::exists(cfg.ratings_csv))
    throw UsageError("ratings file does not exist: " + cfg.ratings_csv);
  Paths paths(cfg.workspace);
  fs::create_directories(paths.data());
  auto t0 = std::chrono::steady_clock::now();

  std::cout << "[prepare] loading " << cfg.ratings_csv << "\n";
  auto raw = data::load_ratings(cfg.ratings_csv);
  std::cout << "[prepare] " << raw.size() << " ratings loaded\n";

  data::SynthesisConfig sc;
  sc.n_groups = cfg.n_groups;
  sc.size_min = cfg.group_size_min;
  sc.size_max = cfg.group_size_max;
  sc.min_ratings = cfg.min_ratings;
  sc.n_negatives = cfg.n_negatives;
  sc.split = {cfg.split_train, cfg.split_val, cfg.split_test};
  sc.seed = cfg.stage_seed("prepare");
  auto ds = data::synthesize_dataset(raw, sc);
  data::write_dataset(ds, paths.data());
  std::cout << "[prepare] " << ds.groups.size() << " groups, " << ds.n_users << " users, "
            << ds.n_items << " items, " << ds.group_ratings.total() << " group ratings\n";

  Manifest manifest = Manifest::create(cfg, hash_file(cfg.ratings_csv));
  manifest.record_stage("prepare", sc.seed,
                        {paths.data() + "/groupMember.dat", paths.data() + "/groupRatingTrain.dat",
                         paths.data() + "/groupRatingVal.dat", paths.data() + "/groupRatingTest.dat",
                         paths.data() + "/negative.dat", paths.data() + "/userRating.dat",
                         paths.data() + "/idmap_users.dat", paths.data() + "/idmap_items.dat"},
                        seconds_since(t0));
  manifest.save(paths.manifest());
}

void cmd_stats(const RunConfig& cfg) {
  check_common(cfg);
  Paths paths(cfg.workspace);
  Manifest manifest = Manifest::load(paths.manifest());
  manifest.require_stage("prepare");
  auto t0 = std::chrono::steady_clock::now();

  auto ds = data::read_dataset(paths.data());
  data::write_stats_csv(ds, paths.stats());
  auto s = data::summarize(ds);
  std::cout << "[stats] users=" << s.n_users << " items=" << s.n_items
            << " groups=" << s.n_groups << " user_ratings=" << s.n_user_ratings
            << " group_ratings=" << s.n_group_ratings << "\n"
            << "[stats] avg_ratings_per_user=" << fmt(s.avg_ratings_per_user)
            << " avg_ratings_per_group=" << fmt(s.avg_ratings_per_group)
            << " avg_group_size=" << fmt(s.avg_group_size) << "\n";

  manifest.record_stage("stats", cfg.stage_seed("stats"),
                        {paths.stats() + "/summary.csv", paths.stats() + "/ratings_per_month.csv",
                         paths.stats() + "/item_rating_profile.csv",
                         paths.stats() + "/rating_vs_item_age.csv",
                         paths.stats() + "/group_size_rating.csv"},
                        seconds_since(t0));
  manifest.save(paths.manifest());
}

void cmd_train_env(const RunConfig& cfg) {
  check_common(cfg);
  Paths paths(cfg.workspace);
  Manifest manifest = Manifest::load(paths.manifest());
  manifest.require_stage("prepare");
  fs::create_directories(paths.models());
  fs::create_directories(paths.reports());
  auto t0 = std::chrono::steady_clock::now();

  auto ds = data::read_dataset(paths.data());
  env::MfConfig mc;
  mc.components = cfg.mf_components;
  mc.lr = cfg.mf_lr;
  mc.l2 = cfg.mf_l2;
  mc.epochs = cfg.mf_epochs;
  mc.use_biases = cfg.mf_use_biases;
  mc.seed = cfg.stage_seed("train-env");
  std::vector<env::MfEpochStats> history;
  auto model = env::train_mf(ds.group_ratings.train, ds.group_ratings.val, static_cast<int>(ds.groups.size()),
                             ds.n_items, mc, &history);
  nn::save_checkpoint(paths.mf_checkpoint(), model.to_checkpoint());
  {
    std::ofstream out(paths.env_curve());
    out << "epoch,train_loss,train_rmse,val_rmse\n";
    for (const auto& st : history)
      out << st.epoch << ',' << fmt(st.train_loss) << ',' << fmt(st.train_rmse) << ','
          << fmt(st.val_rmse) << '\n';
  }
  if (!history.empty())
    std::cout << "[train-env] final train_rmse=" << fmt(history.back().train_rmse)
              << " val_rmse=" << fmt(history.back().val_rmse) << "\n";

  manifest.record_stage("train-env", mc.seed, {paths.mf_checkpoint(), paths.env_curve()},
                        seconds_since(t0));
  manifest.save(paths.manifest());
}

void cmd_train_agent(const RunConfig& cfg) {
  check_common(cfg);
  Paths paths(cfg.workspace);
  Manifest manifest = Manifest::load(paths.manifest());
  manifest.require_stage("prepare");
  manifest.require_stage("train-env");
  fs::create_directories(paths.models());
  fs::create_directories(paths.reports());
  auto t0 = std::chrono::steady_clock::now();

  auto ds = data::read_dataset(paths.data());
  auto model = env::MfModel::from_checkpoint(nn::load_checkpoint(paths.mf_checkpoint()));
  env::Environment environment(model, ds.group_ratings.train, env_config(cfg));
  auto groups = agent::make_group_table(ds.groups);

  const std::uint64_t seed = cfg.stage_seed("train-agent");
  agent::AgentConfig ac;
  ac.embedding_dim = cfg.embedding_dim;
  ac.attention_dim = cfg.attention_dim;
  ac.history_len = cfg.history_len;
  ac.actor_hidden = cfg.actor_hidden;
  ac.critic_hidden = cfg.critic_hidden;
  Rng rng = Rng::substream(seed, 0xA6E);
  auto initial = agent::AgentParams::init(static_cast<std::size_t>(ds.n_users),
                                          static_cast<std::size_t>(ds.n_items), ac, rng);
  if (cfg.freeze_item_embeddings) {
    if (static_cast<std::size_t>(cfg.mf_components) != cfg.embedding_dim)
      throw UsageError("freeze_item_embeddings needs mf_components == embedding_dim");
    initial.embedder.item_embeddings.rows = model.item_factors;
  }

  // best-checkpoint selection on validation Recall@10
  eval::CaseSet val_cases = eval::build_test_cases(ds.group_ratings.val, ds.negatives,
                                                   ds.group_ratings.train, env_config(cfg));
  std::function<double(const agent::AgentParams&)> scorer;
  if (!val_cases.cases.empty()) {
    scorer = [&](const agent::AgentParams& p) {
      eval::DrgrRanker ranker(p, groups);
      auto rep = eval::evaluate(ranker, val_cases, {10}, cfg.threads);
      return rep.recall[0];
    };
  }
  std::cout << "[train-agent] " << environment.eligible_groups().size() << " eligible groups, "
            << val_cases.cases.size() << " validation cases\n";

  auto result = agent::train_loop(environment, groups, std::move(initial),
                                  train_config(cfg, seed), scorer);
  nn::save_checkpoint(paths.agent_checkpoint(), result.agent.to_checkpoint());
  {
    std::ofstream out(paths.train_curve());
    out << "episode,mean_reward,critic_loss,actor_loss\n";
    for (const auto& st : result.curve)
      out << st.episode << ',' << fmt(st.mean_reward) << ',' << fmt(st.critic_loss) << ','
          << fmt(st.actor_loss) << '\n';
  }
  if (result.best_episode >= 0)
    std::cout << "[train-agent] best validation recall@10=" << fmt(result.best_score)
              << " at episode " << result.best_episode << "\n";

  manifest.record_stage("train-agent", seed, {paths.agent_checkpoint(), paths.train_curve()},
                        seconds_since(t0));
  manifest.save(paths.manifest());
}

void cmd_evaluate(const RunConfig& cfg) {
  check_common(cfg);
  Paths paths(cfg.workspace);
  Manifest manifest = Manifest::load(paths.manifest());
  manifest.require_stage("prepare");
  manifest.require_stage("train-env");
  manifest.require_stage("train-agent");
  fs::create_directories(paths.reports());
  auto t0 = std::chrono::steady_clock::now();

  auto ds = data::read_dataset(paths.data());
  auto model = env::MfModel::from_checkpoint(nn::load_checkpoint(paths.mf_checkpoint()));
  auto params = agent::AgentParams::from_checkpoint(nn::load_checkpoint(paths.agent_checkpoint()));
  auto groups = agent::make_group_table(ds.groups);
  env::TrainLookup lookup(ds.group_ratings.train);

  eval::CaseSet cases = eval::build_test_cases(ds.group_ratings.test, ds.negatives,
                                               ds.group_ratings.train, env_config(cfg));
  if (cases.cases.empty()) throw UsageError("no evaluable test cases (too few positives?)");
  std::cout << "[evaluate] " << cases.cases.size() << " test cases (" << cases.skipped
            << " skipped)\n";

  eval::DrgrRanker drgr(params, groups);
  eval::PopularityRanker popularity(ds.group_ratings.train, ds.n_items);
  eval::RandomRanker random(cfg.stage_seed("evaluate"));
  eval::MfOracleRanker oracle(model, lookup, cfg.reward_override);
  std::vector<eval::MetricsReport> reports;
  for (const eval::Ranker* r :
       std::initializer_list<const eval::Ranker*>{&drgr, &popularity, &random, &oracle})
    reports.push_back(eval::evaluate(*r, cases, cfg.eval_ks, cfg.threads));
  eval::write_metrics_csv(paths.metrics(), reports);
  for (const auto& rep : reports) {
    std::cout << "[evaluate] " << rep.ranker << ":";
    for (std::size_t j = 0; j < rep.ks.size(); ++j)
      std::cout << " R@" << rep.ks[j] << "=" << fmt(rep.recall[j]);
    for (std::size_t j = 0; j < rep.ks.size(); ++j)
      std::cout << " N@" << rep.ks[j] << "=" << fmt(rep.ndcg[j]);
    std::cout << "\n";
  }

  manifest.record_stage("evaluate", cfg.stage_seed("evaluate"), {paths.metrics()},
                        seconds_since(t0));
  manifest.save(paths.manifest());
}

void cmd_compare(const RunConfig& cfg) {
  check_common(cfg);
  Paths paths(cfg.workspace);
  Manifest manifest = Manifest::load(paths.manifest());
  manifest.require_stage("evaluate");
  auto t0 = std::chrono::steady_clock::now();

  auto reports = eval::read_metrics_csv(paths.metrics());
  if (reports.empty()) throw UsageError("metrics.csv holds no reports");
  const auto& ks = reports.front().ks;
  std::ofstream out(paths.comparison());
  out << "ranker";
  for (auto k : ks) out << ",R@" << k;
  for (auto k : ks) out << ",N@" << k;
  out << "\n";
  std::printf("%-12s", "ranker");
  for (auto k : ks) std::printf(" %8s", ("R@" + std::to_string(k)).c_str());
  for (auto k : ks) std::printf(" %8s", ("N@" + std::to_string(k)).c_str());
  std::printf("\n");
  for (const auto& rep : reports) {
    out << rep.ranker;
    std::printf("%-12s", rep.ranker.c_str());
    for (std::size_t j = 0; j < ks.size(); ++j) {
      out << ',' << fmt(rep.recall[j]);
      std::printf(" %8.4f", rep.recall[j]);
    }
    for (std::size_t j = 0; j < ks.size(); ++j) {
      out << ',' << fmt(rep.ndcg[j]);
      std::printf(" %8.4f", rep.ndcg[j]);
    }
    out << '\n';
    std::printf("\n");
  }

  manifest.record_stage("compare", cfg.stage_seed("compare"), {paths.comparison()},
                        seconds_since(t0));
  manifest.save(paths.manifest());
}

void run_stage(const std::string& verb, const RunConfig& cfg) {
  if (verb == "prepare") cmd_prepare(cfg);
  else if (verb == "stats") cmd_stats(cfg);
  else if (verb == "train-env") cmd_train_env(cfg);
  else if (verb == "train-agent") cmd_train_agent(cfg);
  else if (verb == "evaluate") cmd_evaluate(cfg);
  else if (verb == "compare") cmd_compare(cfg);
  else throw UsageError("unknown verb '" + verb + "'");
}

}  // namespace drgr::pipeline
