#include "drgr/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "drgr/core.hpp"

namespace drgr {

using nlohmann::json;

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("hash_file: cannot open " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  char out[32];
  std::snprintf(out, sizeof out, "fnv1a:%016llx", static_cast<unsigned long long>(h));
  return out;
}

namespace {

std::string utc_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

Manifest Manifest::create(const RunConfig& cfg, const std::string& input_hash) {
  Manifest m;
  m.config_ = cfg.to_map();
  m.input_hash_ = input_hash;
  return m;
}

Manifest Manifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("no manifest at " + path + "; run prepare first");
  json j;
  in >> j;
  Manifest m;
  m.config_ = j.at("config").get<std::map<std::string, std::string>>();
  m.input_hash_ = j.at("input_hash").get<std::string>();
  for (const auto& [name, js] : j.at("stages").items()) {
    Stage s;
    s.seed = js.at("seed").get<std::uint64_t>();
    s.outputs = js.at("outputs").get<std::map<std::string, std::string>>();
    s.elapsed_sec = js.at("elapsed_sec").get<double>();
    s.completed_utc = js.at("completed_utc").get<std::string>();
    m.stages_[name] = std::move(s);
  }
  return m;
}

void Manifest::save(const std::string& path) const {
  json j;
  j["version"] = kVersion;
  j["config"] = config_;
  j["input_hash"] = input_hash_;
  json stages = json::object();
  for (const auto& [name, s] : stages_) {
    json js;
    js["seed"] = s.seed;
    js["outputs"] = s.outputs;
    js["elapsed_sec"] = s.elapsed_sec;
    js["completed_utc"] = s.completed_utc;
    stages[name] = std::move(js);
  }
  j["stages"] = std::move(stages);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) fail("cannot write manifest: " + tmp);
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

void Manifest::record_stage(const std::string& stage, std::uint64_t seed,
                            const std::vector<std::string>& output_files, double elapsed_sec) {
  Stage s;
  s.seed = seed;
  for (const auto& f : output_files) s.outputs[f] = hash_file(f);
  s.elapsed_sec = elapsed_sec;
  s.completed_utc = utc_now();
  stages_[stage] = std::move(s);
}

bool Manifest::has_stage(const std::string& stage) const { return stages_.count(stage) > 0; }

void Manifest::require_stage(const std::string& stage) const {
  auto it = stages_.find(stage);
  if (it == stages_.end())
    throw UsageError("stage '" + stage + "' has not run yet; run " + stage + " first");
  for (const auto& [path, recorded] : it->second.outputs) {
    if (!std::filesystem::exists(path))
      throw UsageError("output of stage '" + stage + "' is missing (" + path + "); run " + stage +
                       " first");
    if (hash_file(path) != recorded)
      throw UsageError("output of stage '" + stage + "' is stale (" + path + "); run " + stage +
                       " first");
  }
}

const std::map<std::string, std::string>& Manifest::stage_outputs(const std::string& stage) const {
  auto it = stages_.find(stage);
  if (it == stages_.end()) fail("stage_outputs: unknown stage " + stage);
  return it->second.outputs;
}

}  // namespace drgr
