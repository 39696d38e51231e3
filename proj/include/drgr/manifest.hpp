#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "drgr/config.hpp"

namespace drgr {

inline constexpr const char* kVersion = "0.1.0";

/// FNV-1a 64 over the file bytes; a content fingerprint for staleness checks,
/// not a cryptographic hash.
std::string hash_file(const std::string& path);

/// Reproducibility record for one workspace: config snapshot, seeds and the
/// content hash of every file each stage wrote. Saved atomically (tmp +
/// rename) after every stage.
class Manifest {
 public:
  static Manifest create(const RunConfig& cfg, const std::string& input_hash);
  static Manifest load(const std::string& path);

  void save(const std::string& path) const;

  void record_stage(const std::string& stage, std::uint64_t seed,
                    const std::vector<std::string>& output_files, double elapsed_sec);

  bool has_stage(const std::string& stage) const;

  /// Verifies the stage ran and its outputs still match the recorded hashes.
  /// Throws UsageError ("run stage X first") otherwise.
  void require_stage(const std::string& stage) const;

  const std::map<std::string, std::string>& stage_outputs(const std::string& stage) const;

 private:
  struct Stage {
    std::uint64_t seed = 0;
    std::map<std::string, std::string> outputs;  // path -> hash
    double elapsed_sec = 0;
    std::string completed_utc;
  };
  std::map<std::string, std::string> config_;
  std::string input_hash_;
  std::map<std::string, Stage> stages_;
};

}  // namespace drgr
