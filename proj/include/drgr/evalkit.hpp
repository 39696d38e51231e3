#pragma once

#include <memory>
#include <string>
#include <vector>

#include "drgr/agent.hpp"
#include "drgr/dataprep.hpp"
#include "drgr/envsim.hpp"

namespace drgr::eval {

/// One held-out positive group rating with its sampled negatives and the
/// group state built from training-period history only.
struct TestCase {
  int group_id = 0;
  int positive = 0;
  std::vector<int> negatives;
  env::EnvState state;
};

struct CaseSet {
  std::vector<TestCase> cases;
  std::size_t skipped = 0;  // groups lacking enough training positives
};

/// Label-1 held-out ratings become cases; label-0 ratings are non-adoptions,
/// not relevance targets. Cases whose group cannot seed a state are counted
/// in `skipped` rather than silently dropped.
CaseSet build_test_cases(const std::vector<data::GroupRating>& heldout,
                         const std::vector<data::NegativeSet>& negatives,
                         const std::vector<data::GroupRating>& train, const env::EnvConfig& cfg);

/// 1 if the positive appears in the top K of the ranking, else 0.
double recall_at_k(const std::vector<int>& ranked, int positive, std::size_t k);

/// 1 / log2(rank + 1) for a 1-based rank <= K, else 0. IDCG is 1 for the
/// single relevant item, so the value is already normalized.
double ndcg_at_k(const std::vector<int>& ranked, int positive, std::size_t k);

class Ranker {
 public:
  virtual ~Ranker() = default;
  virtual std::string name() const = 0;
  /// Score per candidate, parallel to `candidates`; higher ranks earlier.
  virtual std::vector<double> score(const TestCase& c, const std::vector<int>& candidates) const = 0;
};

/// Descending score, ties broken by ascending item id.
std::vector<int> rank_by_score(const std::vector<int>& candidates, const std::vector<double>& scores);

struct MetricsReport {
  std::string ranker;
  std::size_t n_cases = 0;
  std::size_t skipped = 0;
  std::vector<std::size_t> ks;
  std::vector<double> recall;  // parallel to ks
  std::vector<double> ndcg;
};

/// Ranks positive + negatives for every case and averages the metrics.
/// Cases are independent; `threads` > 1 fans out with a deterministic
/// per-case result slot, so the report does not depend on scheduling.
MetricsReport evaluate(const Ranker& ranker, const CaseSet& cases,
                       const std::vector<std::size_t>& ks, int threads = 1);

/// Uniform random scores from a per-case substream; the reference floor.
class RandomRanker : public Ranker {
 public:
  explicit RandomRanker(std::uint64_t seed) : seed_(seed) {}
  std::string name() const override { return "random"; }
  std::vector<double> score(const TestCase& c, const std::vector<int>& candidates) const override;

 private:
  std::uint64_t seed_;
};

/// Items ordered by their count of positive training group ratings.
class PopularityRanker : public Ranker {
 public:
  PopularityRanker(const std::vector<data::GroupRating>& train, int n_items);
  std::string name() const override { return "popularity"; }
  std::vector<double> score(const TestCase& c, const std::vector<int>& candidates) const override;

 private:
  std::vector<double> counts_;
};

/// Ranks by the environment's own reward model: an in-simulator upper bound
/// for diagnostics, not a fair baseline. Reported as "oracle_mf".
class MfOracleRanker : public Ranker {
 public:
  MfOracleRanker(const env::MfModel& model, const env::TrainLookup& train, bool override_observed)
      : model_(&model), train_(&train), override_(override_observed) {}
  std::string name() const override { return "oracle_mf"; }
  std::vector<double> score(const TestCase& c, const std::vector<int>& candidates) const override;

 private:
  const env::MfModel* model_;
  const env::TrainLookup* train_;
  bool override_;
};

/// The trained agent: actor proto-action dotted with item embeddings.
class DrgrRanker : public Ranker {
 public:
  DrgrRanker(const agent::AgentParams& params, const agent::GroupTable& groups)
      : params_(&params), groups_(&groups) {}
  std::string name() const override { return "drgr"; }
  std::vector<double> score(const TestCase& c, const std::vector<int>& candidates) const override;

 private:
  const agent::AgentParams* params_;
  const agent::GroupTable* groups_;
};

/// metrics.csv with the stable column order (ranker,metric,K,value,n_cases,skipped).
void write_metrics_csv(const std::string& path, const std::vector<MetricsReport>& reports);
std::vector<MetricsReport> read_metrics_csv(const std::string& path);

}  // namespace drgr::eval
