#pragma once

#include <optional>
#include <unordered_map>
#include <vector>

#include "drgr/core.hpp"
#include "drgr/dataprep.hpp"
#include "drgr/nn.hpp"

namespace drgr::env {

struct MfConfig {
  int components = 32;
  double lr = 0.01;
  double l2 = 1e-5;
  int epochs = 50;
  bool use_biases = true;
  std::uint64_t seed = 0;
};

/// Matrix factorization reward model. Group ratings carry binary labels; the
/// trainer maps them to targets {-1, +1} and predictions are clamped to
/// [-1, 1], so the sign of a simulated reward is meaningful.
struct MfModel {
  Mat group_factors;  // [n_groups x components]
  Mat item_factors;   // [n_items x components]
  Vec group_bias, item_bias;
  double global_bias = 0.0;
  bool use_biases = true;

  int n_groups() const { return static_cast<int>(group_factors.rows); }
  int n_items() const { return static_cast<int>(item_factors.rows); }

  double predict_raw(int group, int item) const;  // unclamped score

  nn::Checkpoint to_checkpoint() const;
  static MfModel from_checkpoint(const nn::Checkpoint& ckpt);
};

struct MfEpochStats {
  int epoch = 0;
  double train_loss = 0.0;  // mean per-sample objective over the train set
  double train_rmse = 0.0;
  double val_rmse = 0.0;  // NaN when no validation data
};

/// Per-sample objective: (pred - target)^2 + l2 * (|p_g|^2 + |q_i|^2 + b_g^2 + b_i^2).
double mf_sample_loss(const MfModel& m, int group, int item, double target, double l2);

struct MfSampleGrads {
  Vec group_factors, item_factors;  // [components]
  double group_bias = 0, item_bias = 0, global_bias = 0;
};
MfSampleGrads mf_sample_grads(const MfModel& m, int group, int item, double target, double l2);

/// SGD over shuffled samples, one pass per epoch, deterministic per seed.
MfModel train_mf(const std::vector<data::GroupRating>& train,
                 const std::vector<data::GroupRating>& val, int n_groups, int n_items,
                 const MfConfig& cfg, std::vector<MfEpochStats>* history = nullptr);

inline double label_target(int label) { return label == 1 ? 1.0 : -1.0; }

struct EnvConfig {
  int history_len = 5;
  double gamma = 0.9;
  int episode_len = 20;
  bool reward_override = true;  // observed train pairs beat the MF prediction
};

struct EnvState {
  int group_id = 0;
  std::vector<int> history;  // exactly history_len item ids, oldest first
};

enum class RewardSource { kObserved, kSimulated };

struct StepOutcome {
  EnvState next;
  double reward = 0.0;
  RewardSource source = RewardSource::kSimulated;
};

/// Train-split (group, item) -> label lookup.
class TrainLookup {
 public:
  TrainLookup() = default;
  explicit TrainLookup(const std::vector<data::GroupRating>& train);
  std::optional<int> label(int group, int item) const;

 private:
  std::unordered_map<std::int64_t, int> labels_;
};

/// Observed train pairs return the label mapped to {-1, +1}; everything else
/// is the clamped MF score.
std::pair<double, RewardSource> predict_reward(const MfModel& model, int group, int item,
                                               const TrainLookup& train,
                                               bool override_observed);

/// Starting state: the group's earliest history_len positively labeled train
/// items in timestamp order. Errors for groups with fewer positives.
EnvState env_reset(int group_id, const std::vector<data::GroupRating>& train,
                   const EnvConfig& cfg);

/// The transition rule: on positive reward the oldest history item is dropped
/// and the action appended; otherwise the history is unchanged.
EnvState apply_transition(const EnvState& state, int action_item, double reward);

double discounted_return(const std::vector<double>& rewards, double gamma);

/// Bundles the trained MF model with the train-split data an episode needs.
/// Immutable after construction; step() is a pure function.
class Environment {
 public:
  Environment(const MfModel& model, const std::vector<data::GroupRating>& train, EnvConfig cfg);

  const EnvConfig& config() const { return cfg_; }
  const MfModel& model() const { return model_; }
  const TrainLookup& train_lookup() const { return lookup_; }
  int n_items() const { return model_.n_items(); }

  /// Groups with enough positive train ratings to build a starting history.
  const std::vector<int>& eligible_groups() const { return eligible_; }

  EnvState reset(int group_id) const;
  StepOutcome step(const EnvState& state, int action_item) const;

 private:
  MfModel model_;
  TrainLookup lookup_;
  EnvConfig cfg_;
  std::unordered_map<int, std::vector<int>> initial_history_;
  std::vector<int> eligible_;
};

}  // namespace drgr::env
