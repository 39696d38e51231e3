#include "drgr/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace drgr::eval {

CaseSet build_test_cases(const std::vector<data::GroupRating>& heldout,
                         const std::vector<data::NegativeSet>& negatives,
                         const std::vector<data::GroupRating>& train, const env::EnvConfig& cfg) {
  std::unordered_map<std::int64_t, const data::NegativeSet*> neg_index;
  neg_index.reserve(negatives.size());
  for (const auto& ns : negatives)
    neg_index[(std::int64_t(ns.group) << 32) | std::uint32_t(ns.item)] = &ns;

  // training-period starting state per group, shared across that group's cases
  std::unordered_map<int, std::size_t> train_positives;
  for (const auto& r : train)
    if (r.label == 1) ++train_positives[r.group];
  std::unordered_map<int, env::EnvState> states;

  CaseSet out;
  for (const auto& r : heldout) {
    if (r.label != 1) continue;
    auto np = train_positives.find(r.group);
    if (np == train_positives.end() || np->second < static_cast<std::size_t>(cfg.history_len)) {
      ++out.skipped;
      continue;
    }
    if (!states.count(r.group)) states.emplace(r.group, env::env_reset(r.group, train, cfg));
    auto ns = neg_index.find((std::int64_t(r.group) << 32) | std::uint32_t(r.item));
    if (ns == neg_index.end())
      fail("build_test_cases: no negative set for group " + std::to_string(r.group) + " item " +
           std::to_string(r.item));
    TestCase c;
    c.group_id = r.group;
    c.positive = r.item;
    c.negatives = ns->second->negatives;
    c.state = states.at(r.group);
    out.cases.push_back(std::move(c));
  }
  return out;
}

namespace {

std::size_t rank_of(const std::vector<int>& ranked, int positive) {
  for (std::size_t i = 0; i < ranked.size(); ++i)
    if (ranked[i] == positive) return i + 1;  // 1-based
  return ranked.size() + 1;
}

}  // namespace

double recall_at_k(const std::vector<int>& ranked, int positive, std::size_t k) {
  if (k == 0) fail("recall_at_k: K must be positive");
  return rank_of(ranked, positive) <= k ? 1.0 : 0.0;
}

double ndcg_at_k(const std::vector<int>& ranked, int positive, std::size_t k) {
  if (k == 0) fail("ndcg_at_k: K must be positive");
  std::size_t rank = rank_of(ranked, positive);
  if (rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

std::vector<int> rank_by_score(const std::vector<int>& candidates,
                               const std::vector<double>& scores) {
  if (candidates.size() != scores.size()) fail("rank_by_score: size mismatch");
  std::vector<std::size_t> idx(candidates.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : candidates[a] < candidates[b];
  });
  std::vector<int> ranked(candidates.size());
  for (std::size_t i = 0; i < idx.size(); ++i) ranked[i] = candidates[idx[i]];
  return ranked;
}

MetricsReport evaluate(const Ranker& ranker, const CaseSet& cases,
                       const std::vector<std::size_t>& ks, int threads) {
  if (cases.cases.empty()) fail("evaluate: empty test set");
  MetricsReport report;
  report.ranker = ranker.name();
  report.n_cases = cases.cases.size();
  report.skipped = cases.skipped;
  report.ks = ks;
  report.recall.assign(ks.size(), 0.0);
  report.ndcg.assign(ks.size(), 0.0);

  const std::size_t n = cases.cases.size();
  std::vector<std::vector<double>> recall_per_case(n), ndcg_per_case(n);
  auto run_case = [&](std::size_t i) {
    const TestCase& c = cases.cases[i];
    std::vector<int> candidates;
    candidates.reserve(1 + c.negatives.size());
    candidates.push_back(c.positive);
    candidates.insert(candidates.end(), c.negatives.begin(), c.negatives.end());
    std::vector<int> ranked = rank_by_score(candidates, ranker.score(c, candidates));
    recall_per_case[i].reserve(ks.size());
    ndcg_per_case[i].reserve(ks.size());
    for (std::size_t k : ks) {
      recall_per_case[i].push_back(recall_at_k(ranked, c.positive, k));
      ndcg_per_case[i].push_back(ndcg_at_k(ranked, c.positive, k));
    }
  };

  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) run_case(i);
  } else {
    std::vector<std::thread> pool;
    std::size_t per = (n + static_cast<std::size_t>(threads) - 1) / static_cast<std::size_t>(threads);
    for (int t = 0; t < threads; ++t) {
      std::size_t lo = static_cast<std::size_t>(t) * per, hi = std::min(n, lo + per);
      if (lo >= hi) break;
      pool.emplace_back([&, lo, hi] {
        for (std::size_t i = lo; i < hi; ++i) run_case(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < ks.size(); ++j) {
      report.recall[j] += recall_per_case[i][j];
      report.ndcg[j] += ndcg_per_case[i][j];
    }
  for (std::size_t j = 0; j < ks.size(); ++j) {
    report.recall[j] /= static_cast<double>(n);
    report.ndcg[j] /= static_cast<double>(n);
  }

  // cheap structural sanity on every report
  for (std::size_t j = 0; j + 1 < ks.size(); ++j)
    if (ks[j] <= ks[j + 1] && report.recall[j] > report.recall[j + 1] + 1e-12)
      fail("evaluate: recall not monotone in K");
  for (std::size_t j = 0; j < ks.size(); ++j)
    if (report.ndcg[j] > report.recall[j] + 1e-12) fail("evaluate: ndcg exceeds recall");
  return report;
}

std::vector<double> RandomRanker::score(const TestCase& c, const std::vector<int>& candidates) const {
  Rng rng = Rng::substream(seed_, (std::uint64_t(std::uint32_t(c.group_id)) << 32) |
                                      std::uint32_t(c.positive));
  std::vector<double> s(candidates.size());
  for (double& v : s) v = rng.uniform();
  return s;
}

PopularityRanker::PopularityRanker(const std::vector<data::GroupRating>& train, int n_items)
    : counts_(static_cast<std::size_t>(n_items), 0.0) {
  for (const auto& r : train)
    if (r.label == 1) counts_[static_cast<std::size_t>(r.item)] += 1.0;
}

std::vector<double> PopularityRanker::score(const TestCase&, const std::vector<int>& candidates) const {
  std::vector<double> s(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    s[i] = counts_[static_cast<std::size_t>(candidates[i])];
  return s;
}

std::vector<double> MfOracleRanker::score(const TestCase& c, const std::vector<int>& candidates) const {
  std::vector<double> s(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    s[i] = env::predict_reward(*model_, c.group_id, candidates[i], *train_, override_).first;
  return s;
}

std::vector<double> DrgrRanker::score(const TestCase& c, const std::vector<int>& candidates) const {
  Vec state_emb = agent::embed_state(params_->embedder, c.state, *groups_);
  Vec proto = nn::mlp_forward(params_->actor, state_emb);
  const std::size_t d = params_->embedder.item_embeddings.dim();
  std::vector<double> s(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double* row =
        &params_->embedder.item_embeddings.rows.a[static_cast<std::size_t>(candidates[i]) * d];
    double acc = 0.0;
    for (std::size_t cdim = 0; cdim < d; ++cdim) acc += proto[cdim] * row[cdim];
    s[i] = acc;
  }
  return s;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsReport>& reports) {
  std::ofstream out(path);
  if (!out) fail("cannot open for writing: " + path);
  out << "ranker,metric,K,value,n_cases,skipped\n";
  char buf[40];
  for (const auto& r : reports) {
    for (std::size_t j = 0; j < r.ks.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.6f", r.recall[j]);
      out << r.ranker << ",recall," << r.ks[j] << ',' << buf << ',' << r.n_cases << ','
          << r.skipped << '\n';
    }
    for (std::size_t j = 0; j < r.ks.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.6f", r.ndcg[j]);
      out << r.ranker << ",ndcg," << r.ks[j] << ',' << buf << ',' << r.n_cases << ','
          << r.skipped << '\n';
    }
  }
}

std::vector<MetricsReport> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) fail("empty metrics file: " + path);
  std::map<std::string, MetricsReport> by_ranker;
  std::vector<std::string> order;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string ranker, metric, field;
    std::size_t k = 0, n_cases = 0, skipped = 0;
    double value = 0;
    std::getline(ss, ranker, ',');
    std::getline(ss, metric, ',');
    std::getline(ss, field, ',');
    k = std::stoul(field);
    std::getline(ss, field, ',');
    value = std::stod(field);
    std::getline(ss, field, ',');
    n_cases = std::stoul(field);
    std::getline(ss, field, ',');
    skipped = std::stoul(field);
    if (!by_ranker.count(ranker)) order.push_back(ranker);
    auto& rep = by_ranker[ranker];
    rep.ranker = ranker;
    rep.n_cases = n_cases;
    rep.skipped = skipped;
    if (metric == "recall") {
      rep.ks.push_back(k);
      rep.recall.push_back(value);
    } else if (metric == "ndcg") {
      rep.ndcg.push_back(value);
    } else {
      fail("unknown metric '" + metric + "' in " + path);
    }
  }
  std::vector<MetricsReport> out;
  for (const auto& name : order) out.push_back(by_ranker.at(name));
  return out;
}

}  // namespace drgr::eval
