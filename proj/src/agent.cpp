#include "drgr/agent.hpp"

#include <algorithm>
#include <cmath>

namespace drgr::agent {

GroupTable make_group_table(const std::vector<data::Group>& groups) {
  int max_id = -1;
  for (const auto& g : groups) max_id = std::max(max_id, g.group_id);
  GroupTable table(static_cast<std::size_t>(max_id + 1));
  for (const auto& g : groups) table[static_cast<std::size_t>(g.group_id)] = g.members;
  return table;
}

StateEmbedder StateEmbedder::init(std::size_t n_users, std::size_t n_items, std::size_t d,
                                  std::size_t d_a, Rng& rng) {
  StateEmbedder e;
  e.user_embeddings = nn::EmbeddingTable::init(n_users, d, rng);
  e.item_embeddings = nn::EmbeddingTable::init(n_items, d, rng);
  e.attn_proj = Mat(d_a, d);
  double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& v : e.attn_proj.a) v = rng.uniform(-bound, bound);
  e.attn_proj_bias.assign(d_a, 0.0);
  e.attn_score.assign(d_a, 0.0);
  for (double& v : e.attn_score) v = rng.uniform(-bound, bound);
  return e;
}

Vec attention_aggregate(const StateEmbedder& e, const std::vector<int>& members,
                        AttentionCache* cache) {
  if (members.empty()) fail("attention_aggregate: empty member list");
  const std::size_t d = e.dim(), d_a = e.attn_score.size();
  const std::size_t m = members.size();
  std::vector<Vec> member_emb(m), pre(m), act(m);
  Vec scores(m);
  for (std::size_t j = 0; j < m; ++j) {
    member_emb[j] = e.user_embeddings.lookup(members[j]);
    pre[j].resize(d_a);
    act[j].resize(d_a);
    double score = 0.0;
    for (std::size_t r = 0; r < d_a; ++r) {
      double acc = e.attn_proj_bias[r];
      const double* prow = &e.attn_proj.a[r * d];
      for (std::size_t c = 0; c < d; ++c) acc += prow[c] * member_emb[j][c];
      pre[j][r] = acc;
      act[j][r] = acc > 0.0 ? acc : 0.0;
      score += e.attn_score[r] * act[j][r];
    }
    scores[j] = score;
  }
  Vec weights = nn::softmax(scores);
  Vec group_emb(d, 0.0);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t c = 0; c < d; ++c) group_emb[c] += weights[j] * member_emb[j][c];
  if (cache) {
    cache->members = members;
    cache->member_emb = std::move(member_emb);
    cache->pre = std::move(pre);
    cache->act = std::move(act);
    cache->scores = std::move(scores);
    cache->weights = std::move(weights);
  }
  return group_emb;
}

EmbedderGrads EmbedderGrads::like(const StateEmbedder& e) {
  EmbedderGrads g;
  g.user_embeddings = Mat(e.user_embeddings.count(), e.user_embeddings.dim());
  g.item_embeddings = Mat(e.item_embeddings.count(), e.item_embeddings.dim());
  g.attn_proj = Mat(e.attn_proj.rows, e.attn_proj.cols);
  g.attn_proj_bias.assign(e.attn_proj_bias.size(), 0.0);
  g.attn_score.assign(e.attn_score.size(), 0.0);
  return g;
}

void EmbedderGrads::zero() {
  user_embeddings.zero();
  item_embeddings.zero();
  attn_proj.zero();
  std::fill(attn_proj_bias.begin(), attn_proj_bias.end(), 0.0);
  std::fill(attn_score.begin(), attn_score.end(), 0.0);
}

void attention_backward(const StateEmbedder& e, const AttentionCache& cache, const Vec& upstream,
                        EmbedderGrads& grads) {
  const std::size_t d = e.dim(), d_a = e.attn_score.size();
  const std::size_t m = cache.members.size();
  if (upstream.size() != d) fail("attention_backward: upstream size mismatch");

  // d(output)/d(weights_j) and softmax jacobian
  Vec dweights(m);
  for (std::size_t j = 0; j < m; ++j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += upstream[c] * cache.member_emb[j][c];
    dweights[j] = acc;
  }
  double mixed = 0.0;
  for (std::size_t j = 0; j < m; ++j) mixed += cache.weights[j] * dweights[j];

  for (std::size_t j = 0; j < m; ++j) {
    const double dscore = cache.weights[j] * (dweights[j] - mixed);
    // score head and projection
    Vec dpre(d_a);
    for (std::size_t r = 0; r < d_a; ++r) {
      grads.attn_score[r] += dscore * cache.act[j][r];
      double g = dscore * e.attn_score[r];
      if (cache.pre[j][r] <= 0.0) g = 0.0;
      dpre[r] = g;
      grads.attn_proj_bias[r] += g;
    }
    // member embedding row: direct convex-combination path + attention path
    Vec du(d);
    for (std::size_t c = 0; c < d; ++c) du[c] = cache.weights[j] * upstream[c];
    for (std::size_t r = 0; r < d_a; ++r) {
      const double g = dpre[r];
      if (g == 0.0) continue;
      double* gp = &grads.attn_proj.a[r * d];
      const double* prow = &e.attn_proj.a[r * d];
      for (std::size_t c = 0; c < d; ++c) {
        gp[c] += g * cache.member_emb[j][c];
        du[c] += g * prow[c];
      }
    }
    nn::embedding_grad(grads.user_embeddings, cache.members[j], du);
  }
}

Vec embed_state(const StateEmbedder& e, const env::EnvState& state, const GroupTable& groups,
                StateCache* cache) {
  if (state.group_id < 0 || static_cast<std::size_t>(state.group_id) >= groups.size())
    fail("embed_state: unknown group " + std::to_string(state.group_id));
  const std::vector<int>& members = groups[static_cast<std::size_t>(state.group_id)];
  const std::size_t d = e.dim();
  Vec out;
  out.reserve(d * (state.history.size() + 1));
  Vec g = attention_aggregate(e, members, cache ? &cache->attn : nullptr);
  out.insert(out.end(), g.begin(), g.end());
  for (int item : state.history) {
    Vec emb = e.item_embeddings.lookup(item);
    out.insert(out.end(), emb.begin(), emb.end());
  }
  if (cache) cache->history = state.history;
  return out;
}

void state_backward(const StateEmbedder& e, const StateCache& cache, const Vec& upstream,
                    EmbedderGrads& grads) {
  const std::size_t d = e.dim();
  if (upstream.size() != d * (cache.history.size() + 1))
    fail("state_backward: upstream size mismatch");
  Vec head(upstream.begin(), upstream.begin() + static_cast<std::ptrdiff_t>(d));
  attention_backward(e, cache.attn, head, grads);
  for (std::size_t p = 0; p < cache.history.size(); ++p) {
    Vec slice(upstream.begin() + static_cast<std::ptrdiff_t>(d * (p + 1)),
              upstream.begin() + static_cast<std::ptrdiff_t>(d * (p + 2)));
    nn::embedding_grad(grads.item_embeddings, cache.history[p], slice);
  }
}

AgentParams AgentParams::init(std::size_t n_users, std::size_t n_items, const AgentConfig& cfg,
                              Rng& rng) {
  AgentParams p;
  p.embedder = StateEmbedder::init(n_users, n_items, cfg.embedding_dim, cfg.attention_dim, rng);
  const std::size_t state_dim = p.embedder.state_dim(cfg.history_len);
  std::vector<std::size_t> adims{state_dim};
  adims.insert(adims.end(), cfg.actor_hidden.begin(), cfg.actor_hidden.end());
  adims.push_back(cfg.embedding_dim);
  std::vector<nn::Activation> aacts(adims.size() - 1, nn::Activation::kRelu);
  aacts.back() = nn::Activation::kIdentity;
  p.actor = nn::Mlp::init(adims, aacts, rng);
  std::vector<std::size_t> cdims{state_dim + cfg.embedding_dim};
  cdims.insert(cdims.end(), cfg.critic_hidden.begin(), cfg.critic_hidden.end());
  cdims.push_back(1);
  std::vector<nn::Activation> cacts(cdims.size() - 1, nn::Activation::kRelu);
  cacts.back() = nn::Activation::kIdentity;
  p.critic = nn::Mlp::init(cdims, cacts, rng);
  return p;
}

namespace {

Mat vec_as_mat(const Vec& v) {
  Mat m(v.size(), 1);
  m.a = v;
  return m;
}

void mlp_to_checkpoint(const nn::Mlp& mlp, const std::string& prefix, nn::Checkpoint& ckpt) {
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    ckpt[prefix + ".L" + std::to_string(i) + ".weights"] = mlp.layers[i].weights;
    ckpt[prefix + ".L" + std::to_string(i) + ".bias"] = vec_as_mat(mlp.layers[i].bias);
  }
}

nn::Mlp mlp_from_checkpoint(const nn::Checkpoint& ckpt, const std::string& prefix) {
  nn::Mlp mlp;
  for (std::size_t i = 0;; ++i) {
    auto wkey = prefix + ".L" + std::to_string(i) + ".weights";
    auto it = ckpt.find(wkey);
    if (it == ckpt.end()) break;
    nn::DenseLayer layer;
    layer.weights = it->second;
    layer.bias = ckpt.at(prefix + ".L" + std::to_string(i) + ".bias").a;
    layer.activation = nn::Activation::kRelu;
    mlp.layers.push_back(std::move(layer));
  }
  if (mlp.layers.empty()) fail("checkpoint has no layers under " + prefix);
  mlp.layers.back().activation = nn::Activation::kIdentity;
  return mlp;
}

}  // namespace

nn::Checkpoint AgentParams::to_checkpoint() const {
  nn::Checkpoint ckpt;
  ckpt["embedder.user_embeddings"] = embedder.user_embeddings.rows;
  ckpt["embedder.item_embeddings"] = embedder.item_embeddings.rows;
  ckpt["embedder.attn_proj"] = embedder.attn_proj;
  ckpt["embedder.attn_proj_bias"] = vec_as_mat(embedder.attn_proj_bias);
  ckpt["embedder.attn_score"] = vec_as_mat(embedder.attn_score);
  mlp_to_checkpoint(actor, "actor", ckpt);
  mlp_to_checkpoint(critic, "critic", ckpt);
  return ckpt;
}

AgentParams AgentParams::from_checkpoint(const nn::Checkpoint& ckpt) {
  AgentParams p;
  p.embedder.user_embeddings.rows = ckpt.at("embedder.user_embeddings");
  p.embedder.item_embeddings.rows = ckpt.at("embedder.item_embeddings");
  p.embedder.attn_proj = ckpt.at("embedder.attn_proj");
  p.embedder.attn_proj_bias = ckpt.at("embedder.attn_proj_bias").a;
  p.embedder.attn_score = ckpt.at("embedder.attn_score").a;
  p.actor = mlp_from_checkpoint(ckpt, "actor");
  p.critic = mlp_from_checkpoint(ckpt, "critic");
  return p;
}

AgentGrads AgentGrads::like(const AgentParams& p) {
  AgentGrads g;
  g.embedder = EmbedderGrads::like(p.embedder);
  g.actor = nn::MlpGrads::like(p.actor);
  g.critic = nn::MlpGrads::like(p.critic);
  return g;
}

void AgentGrads::zero() {
  embedder.zero();
  actor.zero();
  critic.zero();
}

namespace {

template <class Params, class Block, class MatRef, class VecRef>
std::vector<Block> walk_blocks(Params& p, MatRef mat_of, VecRef vec_of) {
  std::vector<Block> blocks;
  blocks.push_back(mat_of("embedder.user_embeddings", p.embedder.user_embeddings.rows));
  blocks.push_back(mat_of("embedder.item_embeddings", p.embedder.item_embeddings.rows));
  blocks.push_back(mat_of("embedder.attn_proj", p.embedder.attn_proj));
  blocks.push_back(vec_of("embedder.attn_proj_bias", p.embedder.attn_proj_bias));
  blocks.push_back(vec_of("embedder.attn_score", p.embedder.attn_score));
  for (std::size_t i = 0; i < p.actor.layers.size(); ++i) {
    blocks.push_back(mat_of("actor.L" + std::to_string(i) + ".weights", p.actor.layers[i].weights));
    blocks.push_back(vec_of("actor.L" + std::to_string(i) + ".bias", p.actor.layers[i].bias));
  }
  for (std::size_t i = 0; i < p.critic.layers.size(); ++i) {
    blocks.push_back(mat_of("critic.L" + std::to_string(i) + ".weights", p.critic.layers[i].weights));
    blocks.push_back(vec_of("critic.L" + std::to_string(i) + ".bias", p.critic.layers[i].bias));
  }
  return blocks;
}

}  // namespace

std::vector<nn::ParamBlock> param_blocks(AgentParams& p) {
  return walk_blocks<AgentParams, nn::ParamBlock>(
      p, [](const std::string& n, Mat& m) { return nn::block(n, m); },
      [](const std::string& n, Vec& v) { return nn::block(n, v); });
}

std::vector<nn::ConstBlock> const_param_blocks(const AgentParams& p) {
  return walk_blocks<const AgentParams, nn::ConstBlock>(
      p, [](const std::string& n, const Mat& m) { return nn::cblock(n, m); },
      [](const std::string& n, const Vec& v) { return nn::cblock(n, v); });
}

std::vector<nn::ConstBlock> grad_blocks(const AgentGrads& g) {
  std::vector<nn::ConstBlock> blocks;
  blocks.push_back(nn::cblock("embedder.user_embeddings", g.embedder.user_embeddings));
  blocks.push_back(nn::cblock("embedder.item_embeddings", g.embedder.item_embeddings));
  blocks.push_back(nn::cblock("embedder.attn_proj", g.embedder.attn_proj));
  blocks.push_back(nn::cblock("embedder.attn_proj_bias", g.embedder.attn_proj_bias));
  blocks.push_back(nn::cblock("embedder.attn_score", g.embedder.attn_score));
  for (std::size_t i = 0; i < g.actor.layers.size(); ++i) {
    blocks.push_back(nn::cblock("actor.L" + std::to_string(i) + ".weights", g.actor.layers[i].weights));
    blocks.push_back(nn::cblock("actor.L" + std::to_string(i) + ".bias", g.actor.layers[i].bias));
  }
  for (std::size_t i = 0; i < g.critic.layers.size(); ++i) {
    blocks.push_back(nn::cblock("critic.L" + std::to_string(i) + ".weights", g.critic.layers[i].weights));
    blocks.push_back(nn::cblock("critic.L" + std::to_string(i) + ".bias", g.critic.layers[i].bias));
  }
  return blocks;
}

void soft_update(AgentParams& target, const AgentParams& online, double tau) {
  auto t = param_blocks(target);
  auto o = const_param_blocks(online);
  if (t.size() != o.size()) fail("soft_update: block mismatch");
  for (std::size_t b = 0; b < t.size(); ++b) {
    if (t[b].name != o[b].name || t[b].n != o[b].n) fail("soft_update: block mismatch at " + t[b].name);
    for (std::size_t i = 0; i < t[b].n; ++i)
      t[b].data[i] = tau * o[b].data[i] + (1.0 - tau) * t[b].data[i];
  }
}

OuNoise OuNoise::make(std::size_t dim, double theta, double sigma_start, double sigma_end,
                      std::int64_t decay_steps) {
  OuNoise n;
  n.dim = dim;
  n.theta = theta;
  n.sigma_start = sigma_start;
  n.sigma_end = sigma_end;
  n.decay_steps = std::max<std::int64_t>(decay_steps, 1);
  n.state.assign(dim, 0.0);
  return n;
}

double OuNoise::sigma() const {
  double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(decay_steps));
  return sigma_start + (sigma_end - sigma_start) * frac;
}

const Vec& OuNoise::sample(Rng& rng) {
  const double s = sigma();
  for (double& x : state) x += theta * (0.0 - x) + s * rng.normal();
  ++step;
  return state;
}

void OuNoise::reset() { std::fill(state.begin(), state.end(), 0.0); }

void ReplayBuffer::add(Transition t) {
  if (buf_.size() < capacity_) {
    buf_.push_back(std::move(t));
  } else {
    buf_[next_] = std::move(t);
    next_ = (next_ + 1) % capacity_;
  }
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (buf_.empty()) fail("ReplayBuffer::sample: empty buffer");
  std::vector<const Transition*> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = &buf_[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(buf_.size()) - 1))];
  return out;
}

int select_action(const Vec& proto_action, const std::vector<int>& candidates,
                  const nn::EmbeddingTable& items, const Vec* noise) {
  if (candidates.empty()) fail("select_action: empty candidate set");
  Vec w = proto_action;
  if (noise) {
    if (noise->size() != w.size()) fail("select_action: noise dimension mismatch");
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += (*noise)[i];
  }
  const std::size_t d = items.dim();
  if (w.size() != d) fail("select_action: proto-action dimension mismatch");
  int best_item = -1;
  double best_score = 0.0;
  for (int item : candidates) {
    const double* row = &items.rows.a[static_cast<std::size_t>(item) * d];
    double score = 0.0;
    for (std::size_t c = 0; c < d; ++c) score += w[c] * row[c];
    if (best_item < 0 || score > best_score || (score == best_score && item < best_item)) {
      best_item = item;
      best_score = score;
    }
  }
  return best_item;
}

std::vector<int> rank_items(const AgentParams& p, const env::EnvState& state,
                            const GroupTable& groups, const std::vector<int>& candidates,
                            std::size_t k) {
  if (k == 0) fail("rank_items: K must be positive");
  if (candidates.size() < k) fail("rank_items: fewer candidates than K");
  Vec semb = embed_state(p.embedder, state, groups);
  Vec w = mlp_forward(p.actor, semb);
  const std::size_t d = p.embedder.item_embeddings.dim();
  std::vector<std::pair<double, int>> scored;
  scored.reserve(candidates.size());
  for (int item : candidates) {
    const double* row = &p.embedder.item_embeddings.rows.a[static_cast<std::size_t>(item) * d];
    double score = 0.0;
    for (std::size_t c = 0; c < d; ++c) score += w[c] * row[c];
    scored.emplace_back(score, item);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<int> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(scored[i].second);
  return out;
}

namespace {

Vec concat(const Vec& a, const Vec& b) {
  Vec out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

LossReport compute_ddpg_grads(std::span<const Transition* const> batch, const AgentParams& online,
                              const AgentParams& target, const GroupTable& groups,
                              const TrainConfig& cfg, AgentGrads& out) {
  if (batch.empty()) fail("compute_ddpg_grads: empty batch");
  out.zero();
  const double inv = 1.0 / static_cast<double>(batch.size());
  double critic_loss = 0.0, actor_loss = 0.0;
  nn::MlpGrads critic_sink = nn::MlpGrads::like(online.critic);  // actor pass discards these

  for (const Transition* t : batch) {
    // Bootstrapped target through the lagged networks.
    Vec next_emb = embed_state(target.embedder, t->next, groups);
    Vec next_proto = mlp_forward(target.actor, next_emb);
    double next_q = mlp_forward(target.critic, concat(next_emb, next_proto))[0];
    double y = t->reward + cfg.gamma * next_q;
    if (cfg.td_clip > 0.0) y = std::clamp(y, -cfg.td_clip, cfg.td_clip);

    // Critic regression on the executed item's embedding.
    StateCache scache;
    Vec state_emb = embed_state(online.embedder, t->state, groups, &scache);
    Vec action_emb = online.embedder.item_embeddings.lookup(t->action_item);
    nn::MlpCache ccache;
    double q = mlp_forward(online.critic, concat(state_emb, action_emb), &ccache)[0];
    const double diff = q - y;
    critic_loss += diff * diff;
    Vec dcritic_in = mlp_backward(online.critic, ccache, Vec{2.0 * diff * inv}, out.critic);
    Vec dstate(dcritic_in.begin(), dcritic_in.begin() + static_cast<std::ptrdiff_t>(state_emb.size()));
    Vec daction(dcritic_in.begin() + static_cast<std::ptrdiff_t>(state_emb.size()), dcritic_in.end());
    state_backward(online.embedder, scache, dstate, out.embedder);
    nn::embedding_grad(out.embedder.item_embeddings, t->action_item, daction);

    // Actor ascends Q through the proto-action; critic weights see none of it.
    // The penalty term keeps |proto| commensurate with real item embeddings.
    nn::MlpCache acache;
    Vec proto = mlp_forward(online.actor, state_emb, &acache);
    nn::MlpCache ccache2;
    double q_pi = mlp_forward(online.critic, concat(state_emb, proto), &ccache2)[0];
    double proto_sq = 0.0;
    for (double v : proto) proto_sq += v * v;
    actor_loss += -q_pi + cfg.action_penalty * proto_sq;
    Vec dcritic_in2 = mlp_backward(online.critic, ccache2, Vec{-inv}, critic_sink);
    Vec dstate2(dcritic_in2.begin(), dcritic_in2.begin() + static_cast<std::ptrdiff_t>(state_emb.size()));
    Vec dproto(dcritic_in2.begin() + static_cast<std::ptrdiff_t>(state_emb.size()), dcritic_in2.end());
    for (std::size_t i = 0; i < dproto.size(); ++i)
      dproto[i] += 2.0 * cfg.action_penalty * proto[i] * inv;
    Vec dstate_actor = mlp_backward(online.actor, acache, dproto, out.actor);
    for (std::size_t i = 0; i < dstate2.size(); ++i) dstate2[i] += dstate_actor[i];
    state_backward(online.embedder, scache, dstate2, out.embedder);
  }

  critic_loss *= inv;
  actor_loss *= inv;
  if (!std::isfinite(critic_loss) || !std::isfinite(actor_loss))
    fail("ddpg: non-finite loss (critic=" + std::to_string(critic_loss) +
         ", actor=" + std::to_string(actor_loss) + ")");
  if (cfg.freeze_item_embeddings) out.embedder.item_embeddings.zero();
  return {critic_loss, actor_loss};
}

LossReport ddpg_update(std::span<const Transition* const> batch, AgentParams& online,
                       AgentParams& target, const GroupTable& groups, const TrainConfig& cfg,
                       nn::AdamState& opt, AgentGrads& scratch) {
  LossReport report = compute_ddpg_grads(batch, online, target, groups, cfg, scratch);
  auto params = param_blocks(online);
  auto grads = grad_blocks(scratch);
  if (cfg.freeze_item_embeddings) {
    // frozen means frozen: the block skips the optimizer entirely, or the
    // decoupled decay would still shrink it
    auto is_item = [](const auto& b) { return b.name == "embedder.item_embeddings"; };
    std::erase_if(params, is_item);
    std::erase_if(grads, is_item);
  }
  opt.step(params, grads);
  soft_update(target, online, cfg.tau);
  return report;
}

TrainResult train_loop(const env::Environment& environment, const GroupTable& groups,
                       AgentParams initial, const TrainConfig& cfg,
                       const std::function<double(const AgentParams&)>& validation_score) {
  const std::vector<int>& eligible = environment.eligible_groups();
  if (eligible.empty()) fail("train_loop: no group has enough positive train ratings");

  AgentParams online = std::move(initial);
  AgentParams target = online;
  nn::AdamState opt(nn::AdamConfig{cfg.lr, cfg.weight_decay});
  ReplayBuffer buffer(cfg.replay_capacity);
  AgentGrads scratch = AgentGrads::like(online);
  OuNoise noise = OuNoise::make(online.embedder.dim(), cfg.ou_theta, cfg.ou_sigma_start,
                                cfg.ou_sigma_end,
                                static_cast<std::int64_t>(cfg.episodes) * cfg.episode_len);
  Rng order_rng = Rng::substream(cfg.seed, 0x0de5);
  Rng noise_rng = Rng::substream(cfg.seed, 0x0153);
  Rng sample_rng = Rng::substream(cfg.seed, 0x5a46);

  std::vector<int> order = eligible;
  order_rng.shuffle(order);
  std::size_t cursor = 0;

  const int n_items = environment.n_items();
  std::vector<char> masked(static_cast<std::size_t>(n_items), 0);

  TrainResult result;
  result.curve.reserve(static_cast<std::size_t>(cfg.episodes));

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    if (cursor == order.size()) {
      order_rng.shuffle(order);
      cursor = 0;
    }
    env::EnvState state = environment.reset(order[cursor++]);
    noise.reset();
    std::vector<int> recommended;
    double reward_sum = 0.0, closs = 0.0, aloss = 0.0;
    int n_updates = 0;

    for (int t = 0; t < cfg.episode_len; ++t) {
      std::fill(masked.begin(), masked.end(), 0);
      for (int item : state.history) masked[static_cast<std::size_t>(item)] = 1;
      for (int item : recommended) masked[static_cast<std::size_t>(item)] = 1;
      std::vector<int> candidates;
      candidates.reserve(static_cast<std::size_t>(n_items));
      for (int item = 0; item < n_items; ++item)
        if (!masked[static_cast<std::size_t>(item)]) candidates.push_back(item);
      if (candidates.empty()) break;  // tiny catalogs can exhaust themselves

      Vec state_emb = embed_state(online.embedder, state, groups);
      Vec proto = mlp_forward(online.actor, state_emb);
      const Vec& pert = noise.sample(noise_rng);
      int action = select_action(proto, candidates, online.embedder.item_embeddings, &pert);
      env::StepOutcome outcome = environment.step(state, action);

      Vec noisy_proto = proto;
      for (std::size_t i = 0; i < noisy_proto.size(); ++i) noisy_proto[i] += pert[i];
      buffer.add({state, action, std::move(noisy_proto), outcome.reward, outcome.next});
      recommended.push_back(action);
      reward_sum += outcome.reward;

      if (buffer.size() >= cfg.batch) {
        auto batch = buffer.sample(cfg.batch, sample_rng);
        LossReport rep = ddpg_update(batch, online, target, groups, cfg, opt, scratch);
        closs += rep.critic_loss;
        aloss += rep.actor_loss;
        ++n_updates;
      }
      state = std::move(outcome.next);
    }

    EpisodeStats st;
    st.episode = ep;
    st.mean_reward = reward_sum / static_cast<double>(cfg.episode_len);
    st.critic_loss = n_updates ? closs / n_updates : 0.0;
    st.actor_loss = n_updates ? aloss / n_updates : 0.0;
    result.curve.push_back(st);

    if (validation_score && ((ep + 1) % cfg.eval_every == 0 || ep + 1 == cfg.episodes)) {
      double score = validation_score(online);
      if (result.best_episode < 0 || score > result.best_score) {
        result.best_score = score;
        result.best_episode = ep;
        result.agent = online;
      }
    }
  }
  if (!validation_score) result.agent = std::move(online);
  return result;
}

}  // namespace drgr::agent
