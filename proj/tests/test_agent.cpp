#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "drgr/agent.hpp"
#include "testutil.hpp"

using namespace drgr;
using namespace drgr::agent;

namespace {

Vec concat(const Vec& a, const Vec& b) {
  Vec out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

StateEmbedder small_embedder(std::size_t n_users, std::size_t n_items, std::size_t d,
                             std::size_t d_a, std::uint64_t seed) {
  Rng rng(seed);
  StateEmbedder e = StateEmbedder::init(n_users, n_items, d, d_a, rng);
  for (double& v : e.attn_proj_bias) v = rng.normal(0.0, 0.2);
  return e;
}

// straight-line transcription of the aggregation formulas, kept independent
// of the implementation under test
Vec attention_oracle(const StateEmbedder& e, const std::vector<int>& members) {
  const std::size_t d = e.dim(), d_a = e.attn_score.size(), m = members.size();
  std::vector<double> scores(m);
  for (std::size_t j = 0; j < m; ++j) {
    Vec u = e.user_embeddings.lookup(members[j]);
    double o = 0.0;
    for (std::size_t r = 0; r < d_a; ++r) {
      double z = e.attn_proj_bias[r];
      for (std::size_t c = 0; c < d; ++c) z += e.attn_proj(r, c) * u[c];
      o += e.attn_score[r] * std::max(0.0, z);
    }
    scores[j] = o;
  }
  double mx = *std::max_element(scores.begin(), scores.end());
  double z_sum = 0.0;
  std::vector<double> alpha(m);
  for (std::size_t j = 0; j < m; ++j) {
    alpha[j] = std::exp(scores[j] - mx);
    z_sum += alpha[j];
  }
  for (double& a : alpha) a /= z_sum;
  Vec g(d, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    Vec u = e.user_embeddings.lookup(members[j]);
    for (std::size_t c = 0; c < d; ++c) g[c] += alpha[j] * u[c];
  }
  return g;
}

struct TinyAgent {
  AgentParams online;
  AgentParams target;
  GroupTable groups;
  std::vector<Transition> transitions;
};

// planted-world agent with small dimensions, distinct target nets, and a few
// hand-built transitions
TinyAgent make_tiny_agent(std::uint64_t seed, std::vector<std::size_t> actor_hidden = {5},
                          std::vector<std::size_t> critic_hidden = {4}) {
  TinyAgent t;
  auto world = testutil::make_planted_world(4, 12, 2, seed);
  t.groups = make_group_table(world.groups);
  AgentConfig cfg;
  cfg.embedding_dim = 4;
  cfg.attention_dim = 3;
  cfg.history_len = 2;
  cfg.actor_hidden = std::move(actor_hidden);
  cfg.critic_hidden = std::move(critic_hidden);
  Rng rng(seed);
  t.online = AgentParams::init(static_cast<std::size_t>(world.n_users), 12, cfg, rng);
  t.target = AgentParams::init(static_cast<std::size_t>(world.n_users), 12, cfg, rng);

  Rng trng(seed + 1);
  for (int i = 0; i < 4; ++i) {
    Transition tr;
    tr.state.group_id = i % 4;
    tr.state.history = {static_cast<int>(trng.uniform_int(0, 11)),
                        static_cast<int>(trng.uniform_int(0, 11))};
    tr.action_item = static_cast<int>(trng.uniform_int(0, 11));
    tr.proto_action = Vec(4);
    for (double& v : tr.proto_action) v = trng.normal();
    tr.reward = trng.uniform(-1.0, 1.0);
    tr.next.group_id = tr.state.group_id;
    tr.next.history = {tr.state.history[1], tr.action_item};
    t.transitions.push_back(std::move(tr));
  }
  return t;
}

std::vector<const Transition*> ptrs(const std::vector<Transition>& v) {
  std::vector<const Transition*> out;
  for (const auto& t : v) out.push_back(&t);
  return out;
}

// The update is two partial gradients, not one scalar objective: the critic's
// parameters see only the TD regression, while embedder and actor blocks see
// the TD loss plus the policy objective. Both pieces, for finite differencing:
double ddpg_critic_loss(const std::vector<const Transition*>& batch, const AgentParams& online,
                        const AgentParams& target, const GroupTable& groups,
                        const TrainConfig& cfg) {
  const double inv = 1.0 / static_cast<double>(batch.size());
  double acc = 0.0;
  for (const Transition* t : batch) {
    Vec s2 = embed_state(target.embedder, t->next, groups);
    Vec w2 = nn::mlp_forward(target.actor, s2);
    double q2 = nn::mlp_forward(target.critic, concat(s2, w2))[0];
    double y = t->reward + cfg.gamma * q2;
    if (cfg.td_clip > 0.0) y = std::clamp(y, -cfg.td_clip, cfg.td_clip);
    Vec s1 = embed_state(online.embedder, t->state, groups);
    Vec a = online.embedder.item_embeddings.lookup(t->action_item);
    double q = nn::mlp_forward(online.critic, concat(s1, a))[0];
    acc += (q - y) * (q - y) * inv;
  }
  return acc;
}

double ddpg_batch_loss(const std::vector<const Transition*>& batch, const AgentParams& online,
                       const AgentParams& target, const GroupTable& groups,
                       const TrainConfig& cfg) {
  const double inv = 1.0 / static_cast<double>(batch.size());
  double acc = ddpg_critic_loss(batch, online, target, groups, cfg);
  for (const Transition* t : batch) {
    Vec s1 = embed_state(online.embedder, t->state, groups);
    Vec w = nn::mlp_forward(online.actor, s1);
    double q_pi = nn::mlp_forward(online.critic, concat(s1, w))[0];
    double w_sq = 0.0;
    for (double v : w) w_sq += v * v;
    acc += (-q_pi + cfg.action_penalty * w_sq) * inv;
  }
  return acc;
}

double block_max_abs_diff(const AgentParams& a, const AgentParams& b) {
  auto ba = const_param_blocks(a);
  auto bb = const_param_blocks(b);
  double mx = 0.0;
  for (std::size_t i = 0; i < ba.size(); ++i)
    for (std::size_t j = 0; j < ba[i].n; ++j)
      mx = std::max(mx, std::abs(ba[i].data[j] - bb[i].data[j]));
  return mx;
}

}  // namespace

TEST_CASE("attention: a single member passes through exactly") {
  StateEmbedder e = small_embedder(5, 4, 8, 6, 3);
  Vec g = attention_aggregate(e, {2});
  Vec u = e.user_embeddings.lookup(2);
  CHECK(g == u);  // bitwise: softmax of a singleton is exactly 1
}

TEST_CASE("attention: identical members collapse to their embedding") {
  StateEmbedder e = small_embedder(5, 4, 8, 6, 4);
  for (std::size_t c = 0; c < 8; ++c) e.user_embeddings.rows(3, c) = e.user_embeddings.rows(1, c);
  Vec g = attention_aggregate(e, {1, 3});
  Vec u = e.user_embeddings.lookup(1);
  for (std::size_t c = 0; c < 8; ++c) CHECK(g[c] == doctest::Approx(u[c]).epsilon(1e-15));
}

TEST_CASE("attention matches an independent transcription of the formulas") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
    StateEmbedder e = small_embedder(9, 4, 32, 32, seed);
    std::vector<int> members{1, 4, 7};
    Vec got = attention_aggregate(e, members);
    Vec expect = attention_oracle(e, members);
    REQUIRE(got.size() == expect.size());
    for (std::size_t c = 0; c < got.size(); ++c) CHECK(std::abs(got[c] - expect[c]) < 1e-12);
  }
}

TEST_CASE("attention rejects an empty member list") {
  StateEmbedder e = small_embedder(3, 2, 4, 4, 9);
  CHECK_THROWS(attention_aggregate(e, {}));
}

TEST_CASE("attention backward passes finite differences") {
  StateEmbedder e = small_embedder(6, 3, 5, 4, 11);
  std::vector<int> members{0, 2, 5};
  Rng rng(13);
  Vec probe(5);
  for (double& v : probe) v = rng.normal();

  auto loss = [&]() {
    Vec g = attention_aggregate(e, members);
    double acc = 0.0;
    for (std::size_t c = 0; c < g.size(); ++c) acc += probe[c] * g[c];
    return acc;
  };
  AttentionCache cache;
  attention_aggregate(e, members, &cache);
  EmbedderGrads grads = EmbedderGrads::like(e);
  attention_backward(e, cache, probe, grads);

  auto report = nn::grad_check(
      loss,
      {nn::block("users", e.user_embeddings.rows), nn::block("proj", e.attn_proj),
       nn::block("proj_bias", e.attn_proj_bias), nn::block("score", e.attn_score)},
      {nn::cblock("users", grads.user_embeddings), nn::cblock("proj", grads.attn_proj),
       nn::cblock("proj_bias", grads.attn_proj_bias), nn::cblock("score", grads.attn_score)},
      1e-5);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("embed_state concatenates the group embedding with the history in order") {
  GroupTable groups{{0, 1}, {2, 3, 4}};
  Rng rng(21);
  StateEmbedder e = StateEmbedder::init(5, 40, 32, 32, rng);
  env::EnvState s{1, {7, 3, 9, 1, 22}};
  Vec emb = embed_state(e, s, groups);
  CHECK(emb.size() == 192);  // (5 + 1) * 32

  // history order matters
  env::EnvState permuted{1, {3, 7, 9, 1, 22}};
  CHECK(embed_state(e, permuted, groups) != emb);

  // non-member users do not touch the embedding
  StateEmbedder e2 = e;
  for (std::size_t c = 0; c < 32; ++c) e2.user_embeddings.rows(0, c) += 5.0;
  CHECK(embed_state(e2, s, groups) == emb);

  // member users do
  StateEmbedder e3 = e;
  for (std::size_t c = 0; c < 32; ++c) e3.user_embeddings.rows(2, c) += 5.0;
  CHECK(embed_state(e3, s, groups) != emb);
}

TEST_CASE("state backward passes finite differences through group and history") {
  TinyAgent t = make_tiny_agent(31);
  env::EnvState s{1, {3, 8}};
  Rng rng(7);
  Vec probe(t.online.embedder.state_dim(2));
  for (double& v : probe) v = rng.normal();

  auto loss = [&]() {
    Vec emb = embed_state(t.online.embedder, s, t.groups);
    double acc = 0.0;
    for (std::size_t c = 0; c < emb.size(); ++c) acc += probe[c] * emb[c];
    return acc;
  };
  StateCache cache;
  embed_state(t.online.embedder, s, t.groups, &cache);
  EmbedderGrads grads = EmbedderGrads::like(t.online.embedder);
  state_backward(t.online.embedder, cache, probe, grads);

  auto report = nn::grad_check(
      loss,
      {nn::block("users", t.online.embedder.user_embeddings.rows),
       nn::block("items", t.online.embedder.item_embeddings.rows),
       nn::block("proj", t.online.embedder.attn_proj),
       nn::block("proj_bias", t.online.embedder.attn_proj_bias),
       nn::block("score", t.online.embedder.attn_score)},
      {nn::cblock("users", grads.user_embeddings), nn::cblock("items", grads.item_embeddings),
       nn::cblock("proj", grads.attn_proj), nn::cblock("proj_bias", grads.attn_proj_bias),
       nn::cblock("score", grads.attn_score)},
      1e-5);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("actor with zero weights emits the zero proto-action, and is pure") {
  Rng rng(3);
  nn::Mlp actor =
      nn::Mlp::init({12, 5, 4}, {nn::Activation::kRelu, nn::Activation::kIdentity}, rng);
  for (auto& layer : actor.layers) {
    layer.weights.zero();
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  Vec x(12, 0.7);
  Vec w = nn::mlp_forward(actor, x);
  for (double v : w) CHECK(v == 0.0);

  Rng rng2(4);
  nn::Mlp actor2 =
      nn::Mlp::init({12, 5, 4}, {nn::Activation::kRelu, nn::Activation::kIdentity}, rng2);
  CHECK(nn::mlp_forward(actor2, x) == nn::mlp_forward(actor2, x));
}

TEST_CASE("select_action takes the inner-product argmax") {
  nn::EmbeddingTable items;
  items.rows = Mat(3, 4);
  items.rows(1, 0) = 1.0;  // e1
  items.rows(2, 1) = 1.0;  // e2
  Vec w{2.0, 1.0, 0.0, 0.0};
  CHECK(select_action(w, {1, 2}, items) == 1);

  // positive scaling leaves the argmax unchanged
  Vec w3{6.0, 3.0, 0.0, 0.0};
  CHECK(select_action(w3, {1, 2}, items) == 1);

  // single candidate wins by default
  CHECK(select_action(w, {2}, items) == 2);

  // ties break toward the smaller item id (row 0 is zero, so items 0/1 tie on w = e2-axis)
  Vec wz{0.0, 0.0, 1.0, 0.0};
  CHECK(select_action(wz, {2, 0, 1}, items) == 0);

  CHECK_THROWS(select_action(w, {}, items));

  // noise perturbs the scoring vector before the argmax
  Vec noise{-10.0, 10.0, 0.0, 0.0};
  CHECK(select_action(w, {1, 2}, items, &noise) == 2);
}

TEST_CASE("ou noise: fixed point at zero sigma, geometric decay, stationary spread") {
  Rng rng(17);
  OuNoise still = OuNoise::make(3, 0.15, 0.0, 0.0, 100);
  for (int i = 0; i < 50; ++i)
    for (double v : still.sample(rng)) CHECK(v == 0.0);

  OuNoise decay = OuNoise::make(1, 0.15, 0.0, 0.0, 100);
  decay.state[0] = 2.0;
  double expected = 2.0;
  for (int i = 0; i < 20; ++i) {
    expected *= 1.0 - 0.15;
    CHECK(decay.sample(rng)[0] == doctest::Approx(expected).epsilon(1e-12));
  }

  // discrete OU stationary std is sigma / sqrt(2*theta - theta^2)
  const double theta = 0.15, sigma = 0.1;
  OuNoise ou = OuNoise::make(1, theta, sigma, sigma, 1);
  double sum = 0.0, sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double x = ou.sample(rng)[0];
    sum += x;
    sq += x * x;
  }
  double mean = sum / n;
  double stddev = std::sqrt(sq / n - mean * mean);
  double expected_std = sigma / std::sqrt(2.0 * theta - theta * theta);
  CHECK(std::abs(stddev - expected_std) / expected_std < 0.05);
}

TEST_CASE("ou noise sigma anneals linearly over the schedule") {
  OuNoise ou = OuNoise::make(1, 0.15, 0.2, 0.01, 100);
  CHECK(ou.sigma() == doctest::Approx(0.2));
  Rng rng(1);
  for (int i = 0; i < 50; ++i) ou.sample(rng);
  CHECK(ou.sigma() == doctest::Approx(0.2 + (0.01 - 0.2) * 0.5));
  for (int i = 0; i < 200; ++i) ou.sample(rng);
  CHECK(ou.sigma() == doctest::Approx(0.01));  // clamped at the end of the schedule
}

TEST_CASE("critic with zero weights scores zero") {
  Rng rng(5);
  nn::Mlp critic =
      nn::Mlp::init({10, 4, 1}, {nn::Activation::kRelu, nn::Activation::kIdentity}, rng);
  for (auto& layer : critic.layers) {
    layer.weights.zero();
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  CHECK(nn::mlp_forward(critic, Vec(10, 1.0))[0] == 0.0);
}

TEST_CASE("ddpg gradients match finite differences end to end") {
  TinyAgent t = make_tiny_agent(41);
  TrainConfig cfg;
  cfg.gamma = 0.9;
  cfg.batch = t.transitions.size();
  cfg.action_penalty = 0.05;  // exercise the proto-action regularizer too
  cfg.td_clip = 10.0;

  AgentGrads grads = AgentGrads::like(t.online);
  auto batch = ptrs(t.transitions);
  compute_ddpg_grads(batch, t.online, t.target, t.groups, cfg, grads);

  auto is_critic = [](const std::string& name) { return name.rfind("critic.", 0) == 0; };
  std::vector<nn::ParamBlock> other_params, critic_params;
  std::vector<nn::ConstBlock> other_grads, critic_grads;
  auto params = param_blocks(t.online);
  auto analytic = grad_blocks(grads);
  for (std::size_t i = 0; i < params.size(); ++i) {
    (is_critic(params[i].name) ? critic_params : other_params).push_back(params[i]);
    (is_critic(params[i].name) ? critic_grads : other_grads).push_back(analytic[i]);
  }

  // embedder + actor against the combined objective (composed path end to end)
  auto full = [&]() { return ddpg_batch_loss(batch, t.online, t.target, t.groups, cfg); };
  auto report = nn::grad_check(full, other_params, other_grads, 1e-5);
  CHECK(report.max_rel_err < 1e-4);

  // critic weights against the TD regression alone
  auto td = [&]() { return ddpg_critic_loss(batch, t.online, t.target, t.groups, cfg); };
  auto creport = nn::grad_check(td, critic_params, critic_grads, 1e-5);
  CHECK(creport.max_rel_err < 1e-4);
}

TEST_CASE("td targets clamp to the feasible return range") {
  TinyAgent t = make_tiny_agent(45, {}, {});
  t.transitions.resize(1);
  t.transitions[0].reward = 0.9;
  // inflate the target critic so the raw bootstrapped target exceeds the clip
  for (double& v : t.target.critic.layers[0].weights.a) v = 3.0;
  t.target.critic.layers[0].bias[0] = 50.0;

  TrainConfig cfg;
  cfg.gamma = 0.9;
  cfg.td_clip = 10.0;
  AgentGrads grads = AgentGrads::like(t.online);
  auto batch = ptrs(t.transitions);
  compute_ddpg_grads(batch, t.online, t.target, t.groups, cfg, grads);

  // hand-derived critic gradient with y pinned at the clip
  const nn::DenseLayer& critic = t.online.critic.layers[0];
  const Transition& tr = t.transitions[0];
  Vec x = concat(embed_state(t.online.embedder, tr.state, t.groups),
                 t.online.embedder.item_embeddings.lookup(tr.action_item));
  double q = critic.bias[0];
  for (std::size_t c = 0; c < x.size(); ++c) q += critic.weights(0, c) * x[c];
  const double y = 10.0;
  for (std::size_t c = 0; c < x.size(); ++c)
    CHECK(grads.critic.layers[0].weights(0, c) ==
          doctest::Approx(2.0 * (q - y) * x[c]).epsilon(1e-12));
}

TEST_CASE("ddpg critic gradient equals the hand-derived least-squares step") {
  // frozen actor, linear critic: the TD gradient has a closed form
  TinyAgent t = make_tiny_agent(43, {}, {});  // no hidden layers: linear actor and critic
  t.transitions.resize(2);
  TrainConfig cfg;
  cfg.gamma = 0.9;

  AgentGrads grads = AgentGrads::like(t.online);
  auto batch = ptrs(t.transitions);
  compute_ddpg_grads(batch, t.online, t.target, t.groups, cfg, grads);

  const nn::DenseLayer& critic = t.online.critic.layers[0];
  Mat expect_w(critic.weights.rows, critic.weights.cols);
  double expect_b = 0.0;
  for (const Transition& tr : t.transitions) {
    Vec s2 = embed_state(t.target.embedder, tr.next, t.groups);
    Vec w2 = nn::mlp_forward(t.target.actor, s2);
    double q2 = nn::mlp_forward(t.target.critic, concat(s2, w2))[0];
    double y = tr.reward + cfg.gamma * q2;
    Vec x = concat(embed_state(t.online.embedder, tr.state, t.groups),
                   t.online.embedder.item_embeddings.lookup(tr.action_item));
    double q = critic.bias[0];
    for (std::size_t c = 0; c < x.size(); ++c) q += critic.weights(0, c) * x[c];
    const double coeff = 2.0 * (q - y) / 2.0;  // d/dq of the mean squared error over B=2
    for (std::size_t c = 0; c < x.size(); ++c) expect_w(0, c) += coeff * x[c];
    expect_b += coeff;
  }
  for (std::size_t c = 0; c < expect_w.cols; ++c)
    CHECK(std::abs(grads.critic.layers[0].weights(0, c) - expect_w(0, c)) < 1e-10);
  CHECK(std::abs(grads.critic.layers[0].bias[0] - expect_b) < 1e-10);
}

TEST_CASE("ddpg with gamma zero regresses the critic straight onto rewards") {
  TinyAgent t = make_tiny_agent(47, {}, {});
  t.transitions.resize(2);
  TrainConfig cfg;
  cfg.gamma = 0.0;

  AgentGrads grads = AgentGrads::like(t.online);
  auto batch = ptrs(t.transitions);
  compute_ddpg_grads(batch, t.online, t.target, t.groups, cfg, grads);

  // same hand derivation with y = r only
  const nn::DenseLayer& critic = t.online.critic.layers[0];
  Vec expect_w(critic.weights.cols, 0.0);
  for (const Transition& tr : t.transitions) {
    Vec x = concat(embed_state(t.online.embedder, tr.state, t.groups),
                   t.online.embedder.item_embeddings.lookup(tr.action_item));
    double q = critic.bias[0];
    for (std::size_t c = 0; c < x.size(); ++c) q += critic.weights(0, c) * x[c];
    for (std::size_t c = 0; c < x.size(); ++c) expect_w[c] += (q - tr.reward) * x[c];
  }
  for (std::size_t c = 0; c < expect_w.size(); ++c)
    CHECK(grads.critic.layers[0].weights(0, c) == doctest::Approx(expect_w[c]).epsilon(1e-10));
}

TEST_CASE("soft update with tau one copies the online networks") {
  TinyAgent t = make_tiny_agent(51);
  soft_update(t.target, t.online, 1.0);
  CHECK(block_max_abs_diff(t.target, t.online) == 0.0);
}

TEST_CASE("soft update with tau < 1 strictly contracts the gap to a frozen online net") {
  TinyAgent t = make_tiny_agent(53);
  double before = block_max_abs_diff(t.target, t.online);
  REQUIRE(before > 0.0);
  soft_update(t.target, t.online, 0.1);
  double after = block_max_abs_diff(t.target, t.online);
  CHECK(after < before);
  CHECK(after == doctest::Approx(before * 0.9).epsilon(1e-9));
}

TEST_CASE("ddpg_update applies adam and drags the targets") {
  TinyAgent t = make_tiny_agent(57);
  AgentParams online_before = t.online;
  AgentParams target_before = t.target;
  TrainConfig cfg;
  cfg.batch = t.transitions.size();
  cfg.lr = 1e-3;
  cfg.tau = 0.01;
  nn::AdamState opt(nn::AdamConfig{cfg.lr, cfg.weight_decay, 0.9, 0.999, 1e-8});
  AgentGrads scratch = AgentGrads::like(t.online);
  auto batch = ptrs(t.transitions);
  LossReport rep = ddpg_update(batch, t.online, t.target, t.groups, cfg, opt, scratch);
  CHECK(std::isfinite(rep.critic_loss));
  CHECK(block_max_abs_diff(t.online, online_before) > 0.0);
  CHECK(block_max_abs_diff(t.target, target_before) > 0.0);
}

TEST_CASE("frozen item embeddings stay exactly put through updates") {
  TinyAgent t = make_tiny_agent(59);
  TrainConfig cfg;
  cfg.batch = t.transitions.size();
  cfg.freeze_item_embeddings = true;
  cfg.lr = 1e-2;
  Mat before = t.online.embedder.item_embeddings.rows;
  nn::AdamState opt(nn::AdamConfig{cfg.lr, cfg.weight_decay, 0.9, 0.999, 1e-8});
  AgentGrads scratch = AgentGrads::like(t.online);
  auto batch = ptrs(t.transitions);
  for (int i = 0; i < 3; ++i) ddpg_update(batch, t.online, t.target, t.groups, cfg, opt, scratch);
  CHECK(t.online.embedder.item_embeddings.rows.a == before.a);
  CHECK(block_max_abs_diff(t.online, t.target) > 0.0);  // everything else still trains
}

TEST_CASE("replay buffer: ring semantics and 3-sigma uniform sampling") {
  ReplayBuffer buf(8);
  for (int i = 0; i < 12; ++i) {
    Transition t;
    t.action_item = i;
    buf.add(std::move(t));
  }
  CHECK(buf.size() == 8);  // items 4..11 survive
  std::vector<int> actions;
  for (std::size_t i = 0; i < buf.size(); ++i) actions.push_back(buf.at(i).action_item);
  std::sort(actions.begin(), actions.end());
  CHECK(actions == std::vector<int>{4, 5, 6, 7, 8, 9, 10, 11});

  ReplayBuffer big(64);
  const int n = 50;
  for (int i = 0; i < n; ++i) {
    Transition t;
    t.action_item = i;
    big.add(std::move(t));
  }
  Rng rng(22);
  std::vector<int> counts(n, 0);
  const int draws = 20000;
  for (int b = 0; b < draws / 50; ++b)
    for (const Transition* t : big.sample(50, rng))
      ++counts[static_cast<std::size_t>(t->action_item)];
  const double expected = static_cast<double>(draws) / n;
  const double sigma = std::sqrt(draws * (1.0 / n) * (1.0 - 1.0 / n));
  for (int c : counts) CHECK(std::abs(c - expected) <= 3.0 * sigma);
}

TEST_CASE("rank_items: consistency, permutation completeness, monotone scores") {
  TinyAgent t = make_tiny_agent(61);
  env::EnvState s{0, {1, 2}};
  std::vector<int> candidates{0, 3, 4, 5, 6, 7, 8, 9, 10, 11};

  // K=1 agrees with the no-noise greedy action
  Vec emb = embed_state(t.online.embedder, s, t.groups);
  Vec w = nn::mlp_forward(t.online.actor, emb);
  int greedy = select_action(w, candidates, t.online.embedder.item_embeddings);
  auto top1 = rank_items(t.online, s, t.groups, candidates, 1);
  REQUIRE(top1.size() == 1);
  CHECK(top1[0] == greedy);

  // K = |candidates| is a permutation
  auto all = rank_items(t.online, s, t.groups, candidates, candidates.size());
  auto sorted = all;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == candidates);

  // scores along the ranking never increase
  const auto& items = t.online.embedder.item_embeddings;
  auto score = [&](int item) {
    double acc = 0.0;
    for (std::size_t c = 0; c < w.size(); ++c)
      acc += w[c] * items.rows(static_cast<std::size_t>(item), c);
    return acc;
  };
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(score(all[i - 1]) >= score(all[i]));

  CHECK_THROWS(rank_items(t.online, s, t.groups, candidates, 0));
  CHECK_THROWS(rank_items(t.online, s, t.groups, candidates, candidates.size() + 1));
}

TEST_CASE("rank order is invariant under positive scaling of the proto-action") {
  TinyAgent t = make_tiny_agent(67);
  env::EnvState s{2, {0, 5}};
  std::vector<int> candidates{1, 2, 3, 4, 6, 7};
  auto base = rank_items(t.online, s, t.groups, candidates, candidates.size());

  AgentParams scaled = t.online;
  auto& last = scaled.actor.layers.back();
  for (double& v : last.weights.a) v *= 7.5;
  for (double& v : last.bias) v *= 7.5;
  auto ranked = rank_items(scaled, s, t.groups, candidates, candidates.size());
  CHECK(ranked == base);

  // evaluation path is pure
  CHECK(rank_items(t.online, s, t.groups, candidates, 3) ==
        rank_items(t.online, s, t.groups, candidates, 3));
}

TEST_CASE("agent checkpoints round-trip exactly") {
  TinyAgent t = make_tiny_agent(71);
  auto path = std::filesystem::temp_directory_path() / "drgr_agent_test.ckpt";
  nn::save_checkpoint(path.string(), t.online.to_checkpoint());
  AgentParams back = AgentParams::from_checkpoint(nn::load_checkpoint(path.string()));
  CHECK(block_max_abs_diff(back, t.online) == 0.0);
  CHECK(back.actor.layers.size() == t.online.actor.layers.size());
  CHECK(back.actor.layers.back().activation == nn::Activation::kIdentity);
  std::filesystem::remove(path);
}

TEST_CASE("train_loop: warm-up holds updates until a full batch exists") {
  auto w = testutil::make_planted_world(6, 20, 3, 5);
  env::MfConfig mcfg;
  mcfg.components = 6;
  mcfg.epochs = 40;
  mcfg.lr = 0.03;
  mcfg.seed = 7;
  auto model = env::train_mf(w.ratings.train, {}, 6, w.n_items, mcfg);
  env::EnvConfig ecfg;
  ecfg.history_len = 3;
  env::Environment environment(model, w.ratings.train, ecfg);
  GroupTable groups = make_group_table(w.groups);

  AgentConfig acfg;
  acfg.embedding_dim = 4;
  acfg.attention_dim = 4;
  acfg.history_len = 3;
  acfg.actor_hidden = {8};
  acfg.critic_hidden = {6};
  Rng rng(2);
  auto initial = AgentParams::init(static_cast<std::size_t>(w.n_users),
                                   static_cast<std::size_t>(w.n_items), acfg, rng);

  TrainConfig tcfg;
  tcfg.episodes = 2;
  tcfg.episode_len = 4;
  tcfg.batch = 1000;  // can never fill during this run
  tcfg.seed = 11;
  auto result = train_loop(environment, groups, initial, tcfg);
  for (const auto& st : result.curve) {
    CHECK(st.critic_loss == 0.0);
    CHECK(st.actor_loss == 0.0);
  }
}

TEST_CASE("train_loop is deterministic with zero exploration noise") {
  auto w = testutil::make_planted_world(6, 20, 3, 5);
  env::MfConfig mcfg;
  mcfg.components = 6;
  mcfg.epochs = 40;
  mcfg.lr = 0.03;
  mcfg.seed = 7;
  auto model = env::train_mf(w.ratings.train, {}, 6, w.n_items, mcfg);
  env::EnvConfig ecfg;
  ecfg.history_len = 3;
  env::Environment environment(model, w.ratings.train, ecfg);
  GroupTable groups = make_group_table(w.groups);

  AgentConfig acfg;
  acfg.embedding_dim = 4;
  acfg.attention_dim = 4;
  acfg.history_len = 3;
  acfg.actor_hidden = {8};
  acfg.critic_hidden = {6};

  TrainConfig tcfg;
  tcfg.episodes = 6;
  tcfg.episode_len = 4;
  tcfg.batch = 8;
  tcfg.lr = 1e-3;
  tcfg.ou_sigma_start = 0.0;
  tcfg.ou_sigma_end = 0.0;
  tcfg.seed = 11;

  Rng rng_a(2), rng_b(2);
  auto init_a = AgentParams::init(static_cast<std::size_t>(w.n_users),
                                  static_cast<std::size_t>(w.n_items), acfg, rng_a);
  auto init_b = AgentParams::init(static_cast<std::size_t>(w.n_users),
                                  static_cast<std::size_t>(w.n_items), acfg, rng_b);
  auto ra = train_loop(environment, groups, init_a, tcfg);
  auto rb = train_loop(environment, groups, init_b, tcfg);
  REQUIRE(ra.curve.size() == rb.curve.size());
  for (std::size_t i = 0; i < ra.curve.size(); ++i) {
    CHECK(ra.curve[i].mean_reward == rb.curve[i].mean_reward);
    CHECK(ra.curve[i].critic_loss == rb.curve[i].critic_loss);
  }
  CHECK(block_max_abs_diff(ra.agent, rb.agent) == 0.0);
}
