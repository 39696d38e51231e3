#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drgr/core.hpp"

namespace drgr::data {

struct UserRating {
  int user = 0;
  int item = 0;
  double rating = 0.0;  // half stars in [0.5, 5.0]
  std::int64_t ts = 0;
};

struct Group {
  int group_id = 0;
  std::vector<int> members;  // distinct, ascending
};

struct GroupRating {
  int group = 0;
  int item = 0;
  int label = 0;  // 1 iff every member rated the item >= 4 stars
  std::int64_t ts = 0;
};

struct NegativeSet {
  int group = 0;
  int item = 0;  // the rated item this set belongs to
  std::vector<int> negatives;
};

struct SplitFractions {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

template <class R>
struct Split {
  std::vector<R> train, val, test;
  std::size_t total() const { return train.size() + val.size() + test.size(); }
};

/// Thrown for malformed input files; carries the offending line number.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Reads a MovieLens ratings.csv (header userId,movieId,rating,timestamp).
/// Any malformed row is a hard error naming the line.
std::vector<UserRating> load_ratings(const std::string& path);

/// Exactly n_groups candidate groups with sizes uniform in [size_min, size_max]
/// and members drawn without replacement from `users`. Draws for candidate i
/// come from substream (seed, i), so the result is order-independent.
std::vector<Group> generate_groups(const std::vector<int>& users, std::size_t n_groups,
                                   int size_min, int size_max, std::uint64_t seed);

/// For every (group, item) where all members rated the item: label 1 if every
/// rating is >= 4 stars, else 0; timestamp = max of the members' timestamps.
/// Pairs missing any member rating produce no record.
std::vector<GroupRating> derive_group_ratings(const std::vector<Group>& groups,
                                              const std::vector<UserRating>& ratings);

/// Keeps only groups holding at least min_ratings group ratings.
std::pair<std::vector<Group>, std::vector<GroupRating>> filter_groups(
    std::vector<Group> groups, std::vector<GroupRating> ratings, std::size_t min_ratings);

/// Per group rating, k items from [0, n_items) the group never rated.
/// Group g draws from substream (seed, g); deterministic and order-free.
std::vector<NegativeSet> sample_negatives(const std::vector<GroupRating>& ratings, int n_items,
                                          std::size_t k, std::uint64_t seed);

/// Sorts by (timestamp, group, item) and cuts at the fraction boundaries.
Split<GroupRating> temporal_split(std::vector<GroupRating> records, SplitFractions fractions);
/// Same rule for user ratings, ties broken by (user, item).
Split<UserRating> temporal_split(std::vector<UserRating> records, SplitFractions fractions);

struct SynthesisConfig {
  std::size_t n_groups = 1000;
  int size_min = 2;
  int size_max = 5;
  std::size_t min_ratings = 20;
  std::size_t n_negatives = 100;
  SplitFractions split;
  std::uint64_t seed = 0;
  std::size_t max_attempts_factor = 1000;  // hard cap on candidate generation
};

/// The assembled artifact. All ids are dense and 0-based; the *_raw_ids
/// vectors map dense back to the source MovieLens ids.
struct GroupDataset {
  int n_users = 0;
  int n_items = 0;
  std::vector<Group> groups;
  std::vector<UserRating> user_ratings;  // members of surviving groups, universe items
  Split<GroupRating> group_ratings;
  std::vector<NegativeSet> negatives;
  std::vector<std::int64_t> user_raw_ids;  // dense user -> raw id
  std::vector<std::int64_t> item_raw_ids;  // dense item -> raw id

  std::vector<GroupRating> all_group_ratings() const;
};

/// Full synthesis: candidate groups are sampled in batches and pushed through
/// derive + filter until n_groups survive (the >=20-ratings filter rejects
/// most random candidates). Errors once max_attempts_factor * n_groups
/// candidates have been tried.
GroupDataset synthesize_dataset(const std::vector<UserRating>& raw, const SynthesisConfig& cfg);

// --- workspace files ---------------------------------------------------------
// groupMember.dat        group_id<TAB>user,user,...
// groupRating{Train,Val,Test}.dat  group<TAB>item<TAB>label<TAB>timestamp
// negative.dat           group<TAB>item<TAB>neg,neg,...
// userRating.dat         user<TAB>item<TAB>rating<TAB>timestamp
// idmap_users.dat / idmap_items.dat   raw_id<TAB>dense_id

void write_dataset(const GroupDataset& ds, const std::string& dir);
GroupDataset read_dataset(const std::string& dir);

struct SummaryStats {
  std::size_t n_users = 0, n_items = 0, n_groups = 0;
  std::size_t n_user_ratings = 0, n_group_ratings = 0;
  double avg_ratings_per_user = 0, avg_ratings_per_group = 0, avg_group_size = 0;
};

SummaryStats summarize(const GroupDataset& ds);

/// Emits summary.csv plus the analysis series: ratings per month, per-item
/// rating count vs average, average rating vs years since the item first
/// appeared, and the per-group-size rating distribution.
void write_stats_csv(const GroupDataset& ds, const std::string& dir);

}  // namespace drgr::data
