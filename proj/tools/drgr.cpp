// drgr: group recommendation pipeline driver.
//
//   drgr <verb> [--config PATH] [--key value ...]
//
// Verbs: prepare, stats, train-env, train-agent, evaluate, compare.
// Exit codes: 0 success, 1 internal error, 2 usage or configuration error.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "drgr/config.hpp"
#include "drgr/dataprep.hpp"
#include "drgr/pipeline.hpp"

namespace {

void print_usage() {
  std::printf(
      "usage: drgr <verb> [--config PATH] [--key value ...]\n"
      "\n"
      "verbs:\n"
      "  prepare      synthesize the group dataset from a ratings csv\n"
      "  stats        emit dataset summary statistics as csv\n"
      "  train-env    train the matrix-factorization environment simulator\n"
      "  train-agent  train the DDPG agent against the simulator\n"
      "  evaluate     recall/ndcg of the agent and reference rankers\n"
      "  compare      pivot metrics.csv into one table of all rankers\n"
      "\n"
      "Any configuration key can be overridden with --key value; common flags:\n"
      "  --config PATH   flat key = value configuration file\n"
      "  --seed N        master seed (default 42)\n"
      "  --workspace DIR workspace directory (default ./workspace)\n"
      "  --threads N     evaluation threads (default 1)\n");
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty() || args[0] == "--help" || args[0] == "-h") {
    print_usage();
    return args.empty() ? 2 : 0;
  }
  const std::string verb = args[0];

  try {
    drgr::RunConfig cfg;
    std::vector<std::pair<std::string, std::string>> overrides;
    for (std::size_t i = 1; i < args.size(); ++i) {
      const std::string& a = args[i];
      if (a.size() < 3 || a.substr(0, 2) != "--")
        throw drgr::UsageError("expected --key value, got '" + a + "'");
      if (i + 1 >= args.size()) throw drgr::UsageError("missing value for " + a);
      const std::string key = a.substr(2);
      const std::string value = args[++i];
      if (key == "config")
        drgr::apply_config_file(cfg, value);  // files first, flags override below
      else
        overrides.emplace_back(key, value);
    }
    for (const auto& [key, value] : overrides) cfg.set(key, value);
    drgr::pipeline::run_stage(verb, cfg);
    return 0;
  } catch (const drgr::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    if (verb != "prepare" && verb != "stats" && verb != "train-env" && verb != "train-agent" &&
        verb != "evaluate" && verb != "compare")
      print_usage();
    return 2;
  } catch (const drgr::data::ParseError& e) {
    std::fprintf(stderr, "error (%s): %s\n", verb.c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error (%s): %s\n", verb.c_str(), e.what());
    return 1;
  }
}
