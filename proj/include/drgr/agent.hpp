#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "drgr/core.hpp"
#include "drgr/envsim.hpp"
#include "drgr/nn.hpp"

namespace drgr::agent {

/// group id -> sorted member user ids
using GroupTable = std::vector<std::vector<int>>;

GroupTable make_group_table(const std::vector<data::Group>& groups);

/// State embedding network: user/item embedding tables plus the self-attention
/// member aggregation. A state [g, h] embeds to [attention(members of g),
/// item embeddings of h in order].
struct StateEmbedder {
  nn::EmbeddingTable user_embeddings;  // [n_users x d]
  nn::EmbeddingTable item_embeddings;  // [n_items x d]
  Mat attn_proj;       // [d_a x d]
  Vec attn_proj_bias;  // [d_a]
  Vec attn_score;      // [d_a]

  std::size_t dim() const { return user_embeddings.dim(); }
  std::size_t state_dim(int history_len) const { return dim() * (static_cast<std::size_t>(history_len) + 1); }

  static StateEmbedder init(std::size_t n_users, std::size_t n_items, std::size_t d,
                            std::size_t d_a, Rng& rng);
};

struct AttentionCache {
  std::vector<int> members;
  std::vector<Vec> member_emb;  // u_j
  std::vector<Vec> pre;         // proj * u_j + bias
  std::vector<Vec> act;         // relu(pre)
  Vec scores;                   // score_vec . act_j
  Vec weights;                  // softmax(scores)
};

/// Per member: score = attn_score . relu(attn_proj u + attn_proj_bias);
/// weights = softmax over members; output = sum weights_j * u_j.
Vec attention_aggregate(const StateEmbedder& e, const std::vector<int>& members,
                        AttentionCache* cache = nullptr);

struct EmbedderGrads {
  Mat user_embeddings, item_embeddings, attn_proj;
  Vec attn_proj_bias, attn_score;
  static EmbedderGrads like(const StateEmbedder& e);
  void zero();
};

/// Accumulates gradients for a recorded attention forward; upstream is dL/doutput.
void attention_backward(const StateEmbedder& e, const AttentionCache& cache, const Vec& upstream,
                        EmbedderGrads& grads);

struct StateCache {
  AttentionCache attn;
  std::vector<int> history;
};

Vec embed_state(const StateEmbedder& e, const env::EnvState& state, const GroupTable& groups,
                StateCache* cache = nullptr);

void state_backward(const StateEmbedder& e, const StateCache& cache, const Vec& upstream,
                    EmbedderGrads& grads);

// ---------------------------------------------------------------------------

struct AgentConfig {
  std::size_t embedding_dim = 32;
  std::size_t attention_dim = 32;
  int history_len = 5;
  std::vector<std::size_t> actor_hidden = {128, 64};
  std::vector<std::size_t> critic_hidden = {32, 16};
};

/// Online networks: the state embedder, the actor (state embedding -> action
/// weight) and the critic (state embedding + action embedding -> Q).
struct AgentParams {
  StateEmbedder embedder;
  nn::Mlp actor;
  nn::Mlp critic;

  static AgentParams init(std::size_t n_users, std::size_t n_items, const AgentConfig& cfg,
                          Rng& rng);

  nn::Checkpoint to_checkpoint() const;
  static AgentParams from_checkpoint(const nn::Checkpoint& ckpt);
};

struct AgentGrads {
  EmbedderGrads embedder;
  nn::MlpGrads actor, critic;
  static AgentGrads like(const AgentParams& p);
  void zero();
};

/// Stable block naming shared by the optimizer, soft updates, checkpoints and
/// gradient checks.
std::vector<nn::ParamBlock> param_blocks(AgentParams& p);
std::vector<nn::ConstBlock> const_param_blocks(const AgentParams& p);
std::vector<nn::ConstBlock> grad_blocks(const AgentGrads& g);

/// target <- tau * online + (1 - tau) * target, blockwise.
void soft_update(AgentParams& target, const AgentParams& online, double tau);

// ---------------------------------------------------------------------------

/// Mean-reverting exploration noise; sigma anneals linearly over decay_steps.
struct OuNoise {
  std::size_t dim = 32;
  double theta = 0.15;
  double sigma_start = 0.2;
  double sigma_end = 0.01;
  std::int64_t decay_steps = 1;
  std::int64_t step = 0;
  Vec state;

  static OuNoise make(std::size_t dim, double theta, double sigma_start, double sigma_end,
                      std::int64_t decay_steps);

  double sigma() const;
  const Vec& sample(Rng& rng);  // advances the process and the schedule
  void reset();
};

struct Transition {
  env::EnvState state;
  int action_item = 0;
  Vec proto_action;  // the (noisy) actor output that selected the item
  double reward = 0.0;
  env::EnvState next;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  std::size_t size() const { return buf_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return buf_[i]; }

  void add(Transition t);
  /// Uniform over current contents, with replacement.
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> buf_;
};

// ---------------------------------------------------------------------------

/// Argmax over candidates of (proto + noise) . item_embedding, ties broken by
/// the smaller item id.
int select_action(const Vec& proto_action, const std::vector<int>& candidates,
                  const nn::EmbeddingTable& items, const Vec* noise = nullptr);

/// Top-K candidates by actor score, evaluation path (no noise).
std::vector<int> rank_items(const AgentParams& p, const env::EnvState& state,
                            const GroupTable& groups, const std::vector<int>& candidates,
                            std::size_t k);

struct TrainConfig {
  double gamma = 0.9;
  std::size_t batch = 64;
  double lr = 1e-4;
  double weight_decay = 1e-6;
  int episodes = 1000;
  int episode_len = 20;
  double tau = 0.001;
  std::size_t replay_capacity = 100000;
  double ou_theta = 0.15;
  double ou_sigma_start = 0.2;
  double ou_sigma_end = 0.01;
  bool freeze_item_embeddings = false;
  // Stability guards. Rewards live in [-1, 1], so returns cannot leave
  // [-1, 1] / (1 - gamma); clamping the bootstrapped target to that range
  // stops runaway value estimates. The proto-action penalty keeps the actor
  // output near the scale of real item embeddings: with an identity output
  // head, an unpenalized actor inflates |w| without bound and its selection
  // direction degenerates to a state-independent one.
  double td_clip = 10.0;         // <= 0 disables
  double action_penalty = 1.0;   // L2 coefficient on the proto-action
  int eval_every = 50;
  std::uint64_t seed = 0;
};

struct LossReport {
  double critic_loss = 0.0;  // mean squared TD error
  double actor_loss = 0.0;   // -mean Q(s, pi(s))
};

/// DDPG gradients for one batch: critic regresses onto r + gamma * Q'(s',
/// pi'(s')), the actor ascends Q(s, pi(s)) through the proto-action, and the
/// embedder accumulates gradients from both losses. Pure: no parameter update.
LossReport compute_ddpg_grads(std::span<const Transition* const> batch, const AgentParams& online,
                              const AgentParams& target, const GroupTable& groups,
                              const TrainConfig& cfg, AgentGrads& out);

/// compute_ddpg_grads + one Adam step + soft target update.
LossReport ddpg_update(std::span<const Transition* const> batch, AgentParams& online,
                       AgentParams& target, const GroupTable& groups, const TrainConfig& cfg,
                       nn::AdamState& opt, AgentGrads& scratch);

struct EpisodeStats {
  int episode = 0;
  double mean_reward = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
};

struct TrainResult {
  AgentParams agent;  // best validation score when a scorer is given, else final
  std::vector<EpisodeStats> curve;
  double best_score = 0.0;
  int best_episode = -1;
};

/// Episode loop: groups are visited round-robin over a seeded shuffle, actions
/// are noisy and masked against the current history plus items already
/// recommended this episode, and one ddpg_update runs per step once the
/// buffer holds a full batch.
TrainResult train_loop(const env::Environment& environment, const GroupTable& groups,
                       AgentParams initial, const TrainConfig& cfg,
                       const std::function<double(const AgentParams&)>& validation_score = {});

}  // namespace drgr::agent
