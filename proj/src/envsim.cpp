#include "drgr/envsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

namespace drgr::env {

namespace {
std::int64_t pair_key(int group, int item) {
  return (static_cast<std::int64_t>(group) << 32) | static_cast<std::uint32_t>(item);
}
}  // namespace

double MfModel::predict_raw(int group, int item) const {
  if (group < 0 || group >= n_groups() || item < 0 || item >= n_items())
    fail("MfModel::predict_raw: id out of range");
  const std::size_t d = group_factors.cols;
  const double* p = &group_factors.a[static_cast<std::size_t>(group) * d];
  const double* q = &item_factors.a[static_cast<std::size_t>(item) * d];
  double dot = 0.0;
  for (std::size_t c = 0; c < d; ++c) dot += p[c] * q[c];
  if (!use_biases) return dot;
  return global_bias + group_bias[static_cast<std::size_t>(group)] +
         item_bias[static_cast<std::size_t>(item)] + dot;
}

nn::Checkpoint MfModel::to_checkpoint() const {
  nn::Checkpoint ckpt;
  ckpt["group_factors"] = group_factors;
  ckpt["item_factors"] = item_factors;
  Mat gb(group_bias.size(), 1), ib(item_bias.size(), 1);
  gb.a = group_bias;
  ib.a = item_bias;
  ckpt["group_bias"] = std::move(gb);
  ckpt["item_bias"] = std::move(ib);
  Mat scalars(2, 1);
  scalars(0, 0) = global_bias;
  scalars(1, 0) = use_biases ? 1.0 : 0.0;
  ckpt["scalars"] = std::move(scalars);
  return ckpt;
}

MfModel MfModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  MfModel m;
  m.group_factors = ckpt.at("group_factors");
  m.item_factors = ckpt.at("item_factors");
  m.group_bias = ckpt.at("group_bias").a;
  m.item_bias = ckpt.at("item_bias").a;
  const Mat& scalars = ckpt.at("scalars");
  m.global_bias = scalars(0, 0);
  m.use_biases = scalars(1, 0) != 0.0;
  return m;
}

double mf_sample_loss(const MfModel& m, int group, int item, double target, double l2) {
  const double e = m.predict_raw(group, item) - target;
  const std::size_t d = m.group_factors.cols;
  const double* p = &m.group_factors.a[static_cast<std::size_t>(group) * d];
  const double* q = &m.item_factors.a[static_cast<std::size_t>(item) * d];
  double reg = 0.0;
  for (std::size_t c = 0; c < d; ++c) reg += p[c] * p[c] + q[c] * q[c];
  if (m.use_biases) {
    reg += m.group_bias[static_cast<std::size_t>(group)] * m.group_bias[static_cast<std::size_t>(group)];
    reg += m.item_bias[static_cast<std::size_t>(item)] * m.item_bias[static_cast<std::size_t>(item)];
  }
  return e * e + l2 * reg;
}

MfSampleGrads mf_sample_grads(const MfModel& m, int group, int item, double target, double l2) {
  const double e = m.predict_raw(group, item) - target;
  const std::size_t d = m.group_factors.cols;
  const double* p = &m.group_factors.a[static_cast<std::size_t>(group) * d];
  const double* q = &m.item_factors.a[static_cast<std::size_t>(item) * d];
  MfSampleGrads g;
  g.group_factors.resize(d);
  g.item_factors.resize(d);
  for (std::size_t c = 0; c < d; ++c) {
    g.group_factors[c] = 2.0 * e * q[c] + 2.0 * l2 * p[c];
    g.item_factors[c] = 2.0 * e * p[c] + 2.0 * l2 * q[c];
  }
  if (m.use_biases) {
    g.group_bias = 2.0 * e + 2.0 * l2 * m.group_bias[static_cast<std::size_t>(group)];
    g.item_bias = 2.0 * e + 2.0 * l2 * m.item_bias[static_cast<std::size_t>(item)];
    g.global_bias = 2.0 * e;
  }
  return g;
}

namespace {

double rmse(const MfModel& m, const std::vector<data::GroupRating>& rs) {
  if (rs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  for (const auto& r : rs) {
    double e = m.predict_raw(r.group, r.item) - label_target(r.label);
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(rs.size()));
}

}  // namespace

MfModel train_mf(const std::vector<data::GroupRating>& train,
                 const std::vector<data::GroupRating>& val, int n_groups, int n_items,
                 const MfConfig& cfg, std::vector<MfEpochStats>* history) {
  if (train.empty()) fail("train_mf: empty training set");
  for (const auto& r : train)
    if (r.group < 0 || r.group >= n_groups || r.item < 0 || r.item >= n_items)
      fail("train_mf: rating id out of range");

  MfModel m;
  m.use_biases = cfg.use_biases;
  const auto d = static_cast<std::size_t>(cfg.components);
  m.group_factors = Mat(static_cast<std::size_t>(n_groups), d);
  m.item_factors = Mat(static_cast<std::size_t>(n_items), d);
  m.group_bias.assign(static_cast<std::size_t>(n_groups), 0.0);
  m.item_bias.assign(static_cast<std::size_t>(n_items), 0.0);
  Rng init = Rng::substream(cfg.seed, 0x11f);
  for (double& v : m.group_factors.a) v = init.normal(0.0, 0.1);
  for (double& v : m.item_factors.a) v = init.normal(0.0, 0.1);

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = Rng::substream(cfg.seed, 0x1000 + static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);
    for (std::size_t idx : order) {
      const auto& r = train[idx];
      const double y = label_target(r.label);
      MfSampleGrads g = mf_sample_grads(m, r.group, r.item, y, cfg.l2);
      double* p = &m.group_factors.a[static_cast<std::size_t>(r.group) * d];
      double* q = &m.item_factors.a[static_cast<std::size_t>(r.item) * d];
      for (std::size_t c = 0; c < d; ++c) {
        p[c] -= cfg.lr * g.group_factors[c];
        q[c] -= cfg.lr * g.item_factors[c];
      }
      if (m.use_biases) {
        m.group_bias[static_cast<std::size_t>(r.group)] -= cfg.lr * g.group_bias;
        m.item_bias[static_cast<std::size_t>(r.item)] -= cfg.lr * g.item_bias;
        m.global_bias -= cfg.lr * g.global_bias;
      }
    }
    if (!all_finite(m.group_factors) || !all_finite(m.item_factors))
      fail("train_mf: diverged at epoch " + std::to_string(epoch) + "; lower the learning rate");
    if (history) {
      MfEpochStats st;
      st.epoch = epoch;
      double loss = 0.0;
      for (const auto& r : train) loss += mf_sample_loss(m, r.group, r.item, label_target(r.label), cfg.l2);
      st.train_loss = loss / static_cast<double>(train.size());
      st.train_rmse = rmse(m, train);
      st.val_rmse = rmse(m, val);
      history->push_back(st);
    }
  }
  return m;
}

TrainLookup::TrainLookup(const std::vector<data::GroupRating>& train) {
  labels_.reserve(train.size());
  for (const auto& r : train) labels_[pair_key(r.group, r.item)] = r.label;
}

std::optional<int> TrainLookup::label(int group, int item) const {
  auto it = labels_.find(pair_key(group, item));
  if (it == labels_.end()) return std::nullopt;
  return it->second;
}

std::pair<double, RewardSource> predict_reward(const MfModel& model, int group, int item,
                                               const TrainLookup& train,
                                               bool override_observed) {
  if (override_observed) {
    if (auto label = train.label(group, item))
      return {label_target(*label), RewardSource::kObserved};
  }
  double raw = model.predict_raw(group, item);
  return {std::clamp(raw, -1.0, 1.0), RewardSource::kSimulated};
}

EnvState env_reset(int group_id, const std::vector<data::GroupRating>& train,
                   const EnvConfig& cfg) {
  std::vector<data::GroupRating> positives;
  for (const auto& r : train)
    if (r.group == group_id && r.label == 1) positives.push_back(r);
  if (positives.size() < static_cast<std::size_t>(cfg.history_len))
    fail("env_reset: group " + std::to_string(group_id) + " has " +
         std::to_string(positives.size()) + " positive train ratings, needs " +
         std::to_string(cfg.history_len));
  std::sort(positives.begin(), positives.end(),
            [](const data::GroupRating& a, const data::GroupRating& b) {
              return std::tie(a.ts, a.item) < std::tie(b.ts, b.item);
            });
  EnvState s;
  s.group_id = group_id;
  for (int i = 0; i < cfg.history_len; ++i) s.history.push_back(positives[static_cast<std::size_t>(i)].item);
  return s;
}

EnvState apply_transition(const EnvState& state, int action_item, double reward) {
  EnvState next = state;
  if (reward > 0.0) {
    next.history.erase(next.history.begin());
    next.history.push_back(action_item);
  }
  return next;
}

double discounted_return(const std::vector<double>& rewards, double gamma) {
  if (gamma < 0.0 || gamma > 1.0) fail("discounted_return: gamma outside [0, 1]");
  double acc = 0.0, w = 1.0;
  for (double r : rewards) {
    acc += w * r;
    w *= gamma;
  }
  return acc;
}

Environment::Environment(const MfModel& model, const std::vector<data::GroupRating>& train,
                         EnvConfig cfg)
    : model_(model), lookup_(train), cfg_(cfg) {
  std::unordered_map<int, std::vector<data::GroupRating>> positives;
  for (const auto& r : train)
    if (r.label == 1) positives[r.group].push_back(r);
  std::vector<int> groups;
  for (auto& [g, rs] : positives)
    if (rs.size() >= static_cast<std::size_t>(cfg_.history_len)) groups.push_back(g);
  std::sort(groups.begin(), groups.end());
  for (int g : groups) {
    auto& rs = positives[g];
    std::sort(rs.begin(), rs.end(), [](const data::GroupRating& a, const data::GroupRating& b) {
      return std::tie(a.ts, a.item) < std::tie(b.ts, b.item);
    });
    std::vector<int> hist;
    for (int i = 0; i < cfg_.history_len; ++i) hist.push_back(rs[static_cast<std::size_t>(i)].item);
    initial_history_.emplace(g, std::move(hist));
    eligible_.push_back(g);
  }
}

EnvState Environment::reset(int group_id) const {
  auto it = initial_history_.find(group_id);
  if (it == initial_history_.end())
    fail("Environment::reset: group " + std::to_string(group_id) +
         " lacks enough positive train ratings");
  return {group_id, it->second};
}

StepOutcome Environment::step(const EnvState& state, int action_item) const {
  if (action_item < 0 || action_item >= model_.n_items())
    fail("Environment::step: action item out of range");
  auto [reward, source] = predict_reward(model_, state.group_id, action_item, lookup_,
                                         cfg_.reward_override);
  return {apply_transition(state, action_item, reward), reward, source};
}

}  // namespace drgr::env
