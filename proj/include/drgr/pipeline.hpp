#pragma once

#include <string>

#include "drgr/config.hpp"

namespace drgr::pipeline {

/// Fixed workspace layout: data/, models/, reports/ and the manifest.
struct Paths {
  explicit Paths(const std::string& workspace) : root(workspace) {}
  std::string root;
  std::string data() const { return root + "/data"; }
  std::string models() const { return root + "/models"; }
  std::string reports() const { return root + "/reports"; }
  std::string stats() const { return reports() + "/stats"; }
  std::string manifest() const { return root + "/manifest.json"; }
  std::string mf_checkpoint() const { return models() + "/mf.ckpt"; }
  std::string agent_checkpoint() const { return models() + "/agent.ckpt"; }
  std::string env_curve() const { return reports() + "/env_curve.csv"; }
  std::string train_curve() const { return reports() + "/train_curve.csv"; }
  std::string metrics() const { return reports() + "/metrics.csv"; }
  std::string comparison() const { return reports() + "/comparison.csv"; }
};

void cmd_prepare(const RunConfig& cfg);
void cmd_stats(const RunConfig& cfg);
void cmd_train_env(const RunConfig& cfg);
void cmd_train_agent(const RunConfig& cfg);
void cmd_evaluate(const RunConfig& cfg);
void cmd_compare(const RunConfig& cfg);

/// Dispatches a verb; throws UsageError for unknown verbs.
void run_stage(const std::string& verb, const RunConfig& cfg);

}  // namespace drgr::pipeline
