#include "drgr/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>

#include "drgr/core.hpp"

namespace drgr {

namespace {

std::string trim(std::string s) {
  auto issp = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  std::size_t b = 0, e = s.size();
  while (b < e && issp(s[b])) ++b;
  while (e > b && issp(s[e - 1])) --e;
  return s.substr(b, e - b);
}

template <class T>
T parse_num(const std::string& key, const std::string& value) {
  T out{};
  auto r = std::from_chars(value.data(), value.data() + value.size(), out);
  if (r.ec != std::errc() || r.ptr != value.data() + value.size())
    throw UsageError("config key '" + key + "': cannot parse '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw UsageError("config key '" + key + "': expected a boolean, got '" + value + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    std::size_t comma = value.find(',', pos);
    std::string f = trim(comma == std::string::npos ? value.substr(pos)
                                                    : value.substr(pos, comma - pos));
    out.push_back(parse_num<std::size_t>(key, f));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw UsageError("config key '" + key + "': empty list");
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "ratings_csv") ratings_csv = value;
  else if (key == "workspace") workspace = value;
  else if (key == "threads") threads = parse_num<int>(key, value);
  else if (key == "seed") seed = parse_num<std::uint64_t>(key, value);
  else if (key == "n_groups") n_groups = parse_num<std::size_t>(key, value);
  else if (key == "group_size_min") group_size_min = parse_num<int>(key, value);
  else if (key == "group_size_max") group_size_max = parse_num<int>(key, value);
  else if (key == "min_ratings") min_ratings = parse_num<std::size_t>(key, value);
  else if (key == "n_negatives") n_negatives = parse_num<std::size_t>(key, value);
  else if (key == "split_train") split_train = parse_num<double>(key, value);
  else if (key == "split_val") split_val = parse_num<double>(key, value);
  else if (key == "split_test") split_test = parse_num<double>(key, value);
  else if (key == "mf_components") mf_components = parse_num<int>(key, value);
  else if (key == "mf_lr") mf_lr = parse_num<double>(key, value);
  else if (key == "mf_l2") mf_l2 = parse_num<double>(key, value);
  else if (key == "mf_epochs") mf_epochs = parse_num<int>(key, value);
  else if (key == "mf_use_biases") mf_use_biases = parse_bool(key, value);
  else if (key == "reward_override") reward_override = parse_bool(key, value);
  else if (key == "embedding_dim") embedding_dim = parse_num<std::size_t>(key, value);
  else if (key == "attention_dim") attention_dim = parse_num<std::size_t>(key, value);
  else if (key == "history_len") history_len = parse_num<int>(key, value);
  else if (key == "actor_hidden") actor_hidden = parse_size_list(key, value);
  else if (key == "critic_hidden") critic_hidden = parse_size_list(key, value);
  else if (key == "gamma") gamma = parse_num<double>(key, value);
  else if (key == "batch_size") batch_size = parse_num<std::size_t>(key, value);
  else if (key == "agent_lr") agent_lr = parse_num<double>(key, value);
  else if (key == "weight_decay") weight_decay = parse_num<double>(key, value);
  else if (key == "episodes") episodes = parse_num<int>(key, value);
  else if (key == "episode_len") episode_len = parse_num<int>(key, value);
  else if (key == "tau") tau = parse_num<double>(key, value);
  else if (key == "replay_capacity") replay_capacity = parse_num<std::size_t>(key, value);
  else if (key == "ou_theta") ou_theta = parse_num<double>(key, value);
  else if (key == "ou_sigma_start") ou_sigma_start = parse_num<double>(key, value);
  else if (key == "ou_sigma_end") ou_sigma_end = parse_num<double>(key, value);
  else if (key == "td_clip") td_clip = parse_num<double>(key, value);
  else if (key == "action_penalty") action_penalty = parse_num<double>(key, value);
  else if (key == "freeze_item_embeddings") freeze_item_embeddings = parse_bool(key, value);
  else if (key == "eval_every") eval_every = parse_num<int>(key, value);
  else if (key == "eval_ks") eval_ks = parse_size_list(key, value);
  else throw UsageError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> m;
  m["ratings_csv"] = ratings_csv;
  m["workspace"] = workspace;
  m["threads"] = std::to_string(threads);
  m["seed"] = std::to_string(seed);
  m["n_groups"] = std::to_string(n_groups);
  m["group_size_min"] = std::to_string(group_size_min);
  m["group_size_max"] = std::to_string(group_size_max);
  m["min_ratings"] = std::to_string(min_ratings);
  m["n_negatives"] = std::to_string(n_negatives);
  m["split_train"] = fmt_double(split_train);
  m["split_val"] = fmt_double(split_val);
  m["split_test"] = fmt_double(split_test);
  m["mf_components"] = std::to_string(mf_components);
  m["mf_lr"] = fmt_double(mf_lr);
  m["mf_l2"] = fmt_double(mf_l2);
  m["mf_epochs"] = std::to_string(mf_epochs);
  m["mf_use_biases"] = mf_use_biases ? "true" : "false";
  m["reward_override"] = reward_override ? "true" : "false";
  m["embedding_dim"] = std::to_string(embedding_dim);
  m["attention_dim"] = std::to_string(attention_dim);
  m["history_len"] = std::to_string(history_len);
  m["actor_hidden"] = join(actor_hidden);
  m["critic_hidden"] = join(critic_hidden);
  m["gamma"] = fmt_double(gamma);
  m["batch_size"] = std::to_string(batch_size);
  m["agent_lr"] = fmt_double(agent_lr);
  m["weight_decay"] = fmt_double(weight_decay);
  m["episodes"] = std::to_string(episodes);
  m["episode_len"] = std::to_string(episode_len);
  m["tau"] = fmt_double(tau);
  m["replay_capacity"] = std::to_string(replay_capacity);
  m["ou_theta"] = fmt_double(ou_theta);
  m["ou_sigma_start"] = fmt_double(ou_sigma_start);
  m["ou_sigma_end"] = fmt_double(ou_sigma_end);
  m["td_clip"] = fmt_double(td_clip);
  m["action_penalty"] = fmt_double(action_penalty);
  m["freeze_item_embeddings"] = freeze_item_embeddings ? "true" : "false";
  m["eval_every"] = std::to_string(eval_every);
  m["eval_ks"] = join(eval_ks);
  return m;
}

std::uint64_t RunConfig::stage_seed(const std::string& stage) const {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a over the stage name
  for (unsigned char c : stage) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return splitmix64(seed ^ h);
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

RunConfig load_config(const std::string& path) {
  RunConfig cfg;
  apply_config_file(cfg, path);
  return cfg;
}

}  // namespace drgr
