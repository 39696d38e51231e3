#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace drgr {

/// Raised for bad usage, bad configuration, or missing inputs; the CLI maps
/// it to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat configuration for the whole pipeline. Every key can come from a
/// `key = value` config file or a `--key value` command-line override, and the
/// defaults follow the DRGR hyperparameter table where one exists.
struct RunConfig {
  // paths / infrastructure
  std::string ratings_csv;
  std::string workspace = "workspace";
  int threads = 1;
  std::uint64_t seed = 42;

  // dataset synthesis
  std::size_t n_groups = 1000;
  int group_size_min = 2;
  int group_size_max = 5;
  std::size_t min_ratings = 20;
  std::size_t n_negatives = 100;
  double split_train = 0.7;
  double split_val = 0.1;
  double split_test = 0.2;

  // environment simulator
  int mf_components = 32;
  double mf_lr = 0.01;
  double mf_l2 = 1e-5;
  int mf_epochs = 50;
  bool mf_use_biases = true;
  bool reward_override = true;

  // agent
  std::size_t embedding_dim = 32;
  std::size_t attention_dim = 32;
  int history_len = 5;
  std::vector<std::size_t> actor_hidden = {128, 64};
  std::vector<std::size_t> critic_hidden = {32, 16};
  double gamma = 0.9;
  std::size_t batch_size = 64;
  double agent_lr = 1e-4;
  double weight_decay = 1e-6;
  int episodes = 1000;
  int episode_len = 20;
  double tau = 0.001;
  std::size_t replay_capacity = 100000;
  double ou_theta = 0.15;
  double ou_sigma_start = 0.2;
  double ou_sigma_end = 0.01;
  double td_clip = 10.0;
  double action_penalty = 1.0;
  bool freeze_item_embeddings = false;
  int eval_every = 50;

  // evaluation
  std::vector<std::size_t> eval_ks = {5, 10, 20};

  /// Sets one key; throws UsageError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);

  /// Every key with its current value, in a stable order (for the manifest).
  std::map<std::string, std::string> to_map() const;

  /// Stage seeds all derive from the master seed.
  std::uint64_t stage_seed(const std::string& stage) const;
};

/// Parses a flat `key = value` file ('#' starts a comment).
RunConfig load_config(const std::string& path);

void apply_config_file(RunConfig& cfg, const std::string& path);

}  // namespace drgr
