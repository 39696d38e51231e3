#include "drgr/dataprep.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

namespace drgr::data {

namespace {

struct RatedEntry {
  int item;
  double rating;
  std::int64_t ts;
};

// user -> entries sorted by item id
using UserIndex = std::unordered_map<int, std::vector<RatedEntry>>;

UserIndex build_user_index(const std::vector<UserRating>& ratings) {
  UserIndex index;
  for (const auto& r : ratings) index[r.user].push_back({r.item, r.rating, r.ts});
  for (auto& [user, entries] : index) {
    std::sort(entries.begin(), entries.end(),
              [](const RatedEntry& a, const RatedEntry& b) {
                return a.item != b.item ? a.item < b.item : a.ts < b.ts;
              });
    // duplicate (user, item) rows: keep the latest rating
    std::vector<RatedEntry> dedup;
    dedup.reserve(entries.size());
    for (const auto& e : entries) {
      if (!dedup.empty() && dedup.back().item == e.item)
        dedup.back() = e;
      else
        dedup.push_back(e);
    }
    entries = std::move(dedup);
  }
  return index;
}

const RatedEntry* find_entry(const std::vector<RatedEntry>& entries, int item) {
  auto it = std::lower_bound(entries.begin(), entries.end(), item,
                             [](const RatedEntry& e, int v) { return e.item < v; });
  if (it == entries.end() || it->item != item) return nullptr;
  return &*it;
}

// Ratings for all items every member has rated: the unanimity rule of the
// group dataset. Timestamp is the moment the last member's rating appeared.
std::vector<GroupRating> common_ratings(int group_id, const std::vector<int>& members,
                                        const UserIndex& index) {
  std::vector<GroupRating> out;
  const std::vector<RatedEntry>* smallest = nullptr;
  for (int u : members) {
    auto it = index.find(u);
    if (it == index.end()) return out;  // member without ratings: nothing in common
    if (!smallest || it->second.size() < smallest->size()) smallest = &it->second;
  }
  for (const auto& base : *smallest) {
    bool all_liked = base.rating >= 4.0;
    std::int64_t ts = base.ts;
    bool common = true;
    for (int u : members) {
      const auto& entries = index.at(u);
      if (&entries == smallest) continue;
      const RatedEntry* e = find_entry(entries, base.item);
      if (!e) {
        common = false;
        break;
      }
      all_liked = all_liked && e->rating >= 4.0;
      ts = std::max(ts, e->ts);
    }
    if (common) out.push_back({group_id, base.item, all_liked ? 1 : 0, ts});
  }
  return out;
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t line, const std::string& what) {
  throw ParseError(path + ":" + std::to_string(line) + ": " + what);
}

bool parse_int(std::string_view s, std::int64_t& out) {
  auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

}  // namespace

std::vector<UserRating> load_ratings(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open ratings file: " + path);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) parse_fail(path, 1, "empty file, expected header");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "userId,movieId,rating,timestamp")
    parse_fail(path, lineno, "malformed header, expected userId,movieId,rating,timestamp");

  std::vector<UserRating> ratings;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string_view sv(line);
    std::array<std::string_view, 4> fields;
    std::size_t n_fields = 0, pos = 0;
    while (true) {
      std::size_t comma = sv.find(',', pos);
      std::string_view f = comma == std::string_view::npos ? sv.substr(pos)
                                                           : sv.substr(pos, comma - pos);
      if (n_fields >= 4) parse_fail(path, lineno, "expected 4 comma-separated fields");
      fields[n_fields++] = f;
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (n_fields != 4) parse_fail(path, lineno, "expected 4 comma-separated fields");
    std::int64_t user = 0, item = 0, ts = 0;
    double rating = 0.0;
    if (!parse_int(fields[0], user)) parse_fail(path, lineno, "non-numeric userId");
    if (!parse_int(fields[1], item)) parse_fail(path, lineno, "non-numeric movieId");
    if (!parse_double(fields[2], rating)) parse_fail(path, lineno, "non-numeric rating");
    if (!parse_int(fields[3], ts)) parse_fail(path, lineno, "non-numeric timestamp");
    double halves = rating * 2.0;
    if (halves != std::floor(halves) || rating < 0.5 || rating > 5.0)
      parse_fail(path, lineno, "rating outside half-star range [0.5, 5.0]");
    if (ts <= 0) parse_fail(path, lineno, "timestamp must be positive");
    ratings.push_back({static_cast<int>(user), static_cast<int>(item), rating, ts});
  }
  return ratings;
}

std::vector<Group> generate_groups(const std::vector<int>& users, std::size_t n_groups,
                                   int size_min, int size_max, std::uint64_t seed) {
  if (n_groups == 0) fail("generate_groups: n_groups must be positive");
  if (size_min < 1 || size_min > size_max) fail("generate_groups: inverted size bounds");
  if (users.size() < static_cast<std::size_t>(size_max))
    fail("generate_groups: need at least size_max users");
  std::vector<Group> groups(n_groups);
  for (std::size_t i = 0; i < n_groups; ++i) {
    Rng rng = Rng::substream(seed, i);
    int size = static_cast<int>(rng.uniform_int(size_min, size_max));
    std::vector<int> picks = rng.sample_distinct(static_cast<std::int64_t>(users.size()),
                                                 static_cast<std::size_t>(size),
                                                 [](int) { return false; });
    Group& g = groups[i];
    g.group_id = static_cast<int>(i);
    g.members.reserve(picks.size());
    for (int p : picks) g.members.push_back(users[static_cast<std::size_t>(p)]);
    std::sort(g.members.begin(), g.members.end());
  }
  return groups;
}

std::vector<GroupRating> derive_group_ratings(const std::vector<Group>& groups,
                                              const std::vector<UserRating>& ratings) {
  UserIndex index = build_user_index(ratings);
  std::vector<GroupRating> out;
  for (const auto& g : groups) {
    auto rs = common_ratings(g.group_id, g.members, index);
    out.insert(out.end(), rs.begin(), rs.end());
  }
  return out;
}

std::pair<std::vector<Group>, std::vector<GroupRating>> filter_groups(
    std::vector<Group> groups, std::vector<GroupRating> ratings, std::size_t min_ratings) {
  std::unordered_map<int, std::size_t> counts;
  for (const auto& r : ratings) ++counts[r.group];
  std::unordered_set<int> keep;
  for (const auto& g : groups)
    if (counts[g.group_id] >= min_ratings) keep.insert(g.group_id);
  std::erase_if(groups, [&](const Group& g) { return !keep.count(g.group_id); });
  std::erase_if(ratings, [&](const GroupRating& r) { return !keep.count(r.group); });
  return {std::move(groups), std::move(ratings)};
}

std::vector<NegativeSet> sample_negatives(const std::vector<GroupRating>& ratings, int n_items,
                                          std::size_t k, std::uint64_t seed) {
  std::map<int, std::vector<int>> rated_by_group;  // ordered for a stable walk
  for (const auto& r : ratings) {
    if (r.item < 0 || r.item >= n_items) fail("sample_negatives: item id out of range");
    rated_by_group[r.group].push_back(r.item);
  }
  std::vector<NegativeSet> out;
  out.reserve(ratings.size());
  for (auto& [group, items] : rated_by_group) {
    std::sort(items.begin(), items.end());
    std::unordered_set<int> rated(items.begin(), items.end());
    if (static_cast<std::size_t>(n_items) < rated.size() + k)
      fail("sample_negatives: group " + std::to_string(group) + " has only " +
           std::to_string(n_items - static_cast<int>(rated.size())) +
           " unrated items, need " + std::to_string(k));
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(group));
    for (int item : items) {
      NegativeSet ns;
      ns.group = group;
      ns.item = item;
      ns.negatives = rng.sample_distinct(n_items, k, [&](int x) { return rated.count(x) > 0; });
      out.push_back(std::move(ns));
    }
  }
  return out;
}

namespace {

void check_fractions(const SplitFractions& f) {
  if (f.train <= 0 || f.val <= 0 || f.test <= 0)
    fail("temporal_split: fractions must be positive");
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
    fail("temporal_split: fractions must sum to 1");
}

template <class R, class Less>
Split<R> split_sorted(std::vector<R> records, SplitFractions f, Less less) {
  check_fractions(f);
  if (records.empty()) fail("temporal_split: empty input");
  std::sort(records.begin(), records.end(), less);
  const auto n = static_cast<double>(records.size());
  auto cut1 = static_cast<std::size_t>(std::llround(n * f.train));
  auto cut2 = static_cast<std::size_t>(std::llround(n * (f.train + f.val)));
  cut1 = std::min(cut1, records.size());
  cut2 = std::clamp(cut2, cut1, records.size());
  Split<R> s;
  s.train.assign(records.begin(), records.begin() + cut1);
  s.val.assign(records.begin() + cut1, records.begin() + cut2);
  s.test.assign(records.begin() + cut2, records.end());
  return s;
}

}  // namespace

Split<GroupRating> temporal_split(std::vector<GroupRating> records, SplitFractions fractions) {
  return split_sorted(std::move(records), fractions, [](const GroupRating& a, const GroupRating& b) {
    return std::tie(a.ts, a.group, a.item) < std::tie(b.ts, b.group, b.item);
  });
}

Split<UserRating> temporal_split(std::vector<UserRating> records, SplitFractions fractions) {
  return split_sorted(std::move(records), fractions, [](const UserRating& a, const UserRating& b) {
    return std::tie(a.ts, a.user, a.item) < std::tie(b.ts, b.user, b.item);
  });
}

std::vector<GroupRating> GroupDataset::all_group_ratings() const {
  std::vector<GroupRating> all;
  all.reserve(group_ratings.total());
  all.insert(all.end(), group_ratings.train.begin(), group_ratings.train.end());
  all.insert(all.end(), group_ratings.val.begin(), group_ratings.val.end());
  all.insert(all.end(), group_ratings.test.begin(), group_ratings.test.end());
  return all;
}

GroupDataset synthesize_dataset(const std::vector<UserRating>& raw, const SynthesisConfig& cfg) {
  if (raw.empty()) fail("synthesize_dataset: no input ratings");
  UserIndex index = build_user_index(raw);
  std::vector<int> users_raw;
  users_raw.reserve(index.size());
  for (const auto& [u, _] : index) users_raw.push_back(u);
  std::sort(users_raw.begin(), users_raw.end());

  struct Survivor {
    std::vector<int> members_raw;
    std::vector<GroupRating> ratings_raw;  // group field unset until reindex
  };
  std::vector<Survivor> survivors;
  const std::size_t cap = cfg.max_attempts_factor * cfg.n_groups;
  std::size_t attempts = 0;
  for (std::uint64_t batch = 0; survivors.size() < cfg.n_groups; ++batch) {
    if (attempts >= cap)
      fail("synthesize_dataset: gave up after " + std::to_string(attempts) +
           " candidate groups; input too sparse for min_ratings=" +
           std::to_string(cfg.min_ratings));
    std::uint64_t batch_seed = splitmix64(cfg.seed ^ splitmix64(0x6272617463680ULL + batch));
    auto candidates = generate_groups(users_raw, cfg.n_groups, cfg.size_min, cfg.size_max,
                                      batch_seed);
    attempts += candidates.size();
    for (auto& cand : candidates) {
      if (survivors.size() == cfg.n_groups) break;
      auto ratings = common_ratings(0, cand.members, index);
      if (ratings.size() >= cfg.min_ratings)
        survivors.push_back({std::move(cand.members), std::move(ratings)});
    }
  }

  // Dense universes: users appearing in surviving groups, items appearing in
  // their group ratings. Dense ids follow ascending raw id order.
  std::set<int> user_set, item_set;
  for (const auto& s : survivors) {
    user_set.insert(s.members_raw.begin(), s.members_raw.end());
    for (const auto& r : s.ratings_raw) item_set.insert(r.item);
  }
  GroupDataset ds;
  std::unordered_map<int, int> user_dense, item_dense;
  for (int u : user_set) {
    user_dense[u] = static_cast<int>(ds.user_raw_ids.size());
    ds.user_raw_ids.push_back(u);
  }
  for (int i : item_set) {
    item_dense[i] = static_cast<int>(ds.item_raw_ids.size());
    ds.item_raw_ids.push_back(i);
  }
  ds.n_users = static_cast<int>(ds.user_raw_ids.size());
  ds.n_items = static_cast<int>(ds.item_raw_ids.size());

  std::vector<GroupRating> all_ratings;
  for (std::size_t gi = 0; gi < survivors.size(); ++gi) {
    Group g;
    g.group_id = static_cast<int>(gi);
    for (int u : survivors[gi].members_raw) g.members.push_back(user_dense.at(u));
    std::sort(g.members.begin(), g.members.end());
    ds.groups.push_back(std::move(g));
    for (const auto& r : survivors[gi].ratings_raw)
      all_ratings.push_back({static_cast<int>(gi), item_dense.at(r.item), r.label, r.ts});
  }

  // Member ratings restricted to the item universe, in dense ids.
  for (const auto& r : raw) {
    auto u = user_dense.find(r.user);
    if (u == user_dense.end()) continue;
    auto i = item_dense.find(r.item);
    if (i == item_dense.end()) continue;
    ds.user_ratings.push_back({u->second, i->second, r.rating, r.ts});
  }
  std::sort(ds.user_ratings.begin(), ds.user_ratings.end(),
            [](const UserRating& a, const UserRating& b) {
              return std::tie(a.user, a.item, a.ts) < std::tie(b.user, b.item, b.ts);
            });

  ds.negatives = sample_negatives(all_ratings, ds.n_items, cfg.n_negatives,
                                  splitmix64(cfg.seed ^ 0x6e656761746976ULL));
  ds.group_ratings = temporal_split(std::move(all_ratings), cfg.split);
  return ds;
}

// --- workspace IO ------------------------------------------------------------

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open: " + path);
  return in;
}

void write_ratings_file(const std::string& path, const std::vector<GroupRating>& rs) {
  auto out = open_out(path);
  for (const auto& r : rs)
    out << r.group << '\t' << r.item << '\t' << r.label << '\t' << r.ts << '\n';
}

std::vector<GroupRating> read_ratings_file(const std::string& path) {
  auto in = open_in(path);
  std::vector<GroupRating> rs;
  GroupRating r;
  while (in >> r.group >> r.item >> r.label >> r.ts) rs.push_back(r);
  return rs;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& where) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t comma = s.find(',', pos);
    std::string_view f = comma == std::string::npos
                             ? std::string_view(s).substr(pos)
                             : std::string_view(s).substr(pos, comma - pos);
    std::int64_t v = 0;
    if (!parse_int(f, v)) fail("malformed id list in " + where);
    out.push_back(static_cast<int>(v));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

void write_idmap(const std::string& path, const std::vector<std::int64_t>& raw_ids) {
  auto out = open_out(path);
  for (std::size_t dense = 0; dense < raw_ids.size(); ++dense)
    out << raw_ids[dense] << '\t' << dense << '\n';
}

std::vector<std::int64_t> read_idmap(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::int64_t> raw_ids;
  std::int64_t raw = 0, dense = 0;
  while (in >> raw >> dense) {
    if (dense != static_cast<std::int64_t>(raw_ids.size()))
      fail("id map not dense in " + path);
    raw_ids.push_back(raw);
  }
  return raw_ids;
}

}  // namespace

void write_dataset(const GroupDataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir + "/groupMember.dat");
    for (const auto& g : ds.groups) {
      out << g.group_id << '\t';
      for (std::size_t i = 0; i < g.members.size(); ++i)
        out << g.members[i] << (i + 1 == g.members.size() ? "" : ",");
      out << '\n';
    }
  }
  write_ratings_file(dir + "/groupRatingTrain.dat", ds.group_ratings.train);
  write_ratings_file(dir + "/groupRatingVal.dat", ds.group_ratings.val);
  write_ratings_file(dir + "/groupRatingTest.dat", ds.group_ratings.test);
  {
    auto out = open_out(dir + "/negative.dat");
    for (const auto& ns : ds.negatives) {
      out << ns.group << '\t' << ns.item << '\t';
      for (std::size_t i = 0; i < ns.negatives.size(); ++i)
        out << ns.negatives[i] << (i + 1 == ns.negatives.size() ? "" : ",");
      out << '\n';
    }
  }
  {
    auto out = open_out(dir + "/userRating.dat");
    char buf[16];
    for (const auto& r : ds.user_ratings) {
      std::snprintf(buf, sizeof buf, "%.1f", r.rating);
      out << r.user << '\t' << r.item << '\t' << buf << '\t' << r.ts << '\n';
    }
  }
  write_idmap(dir + "/idmap_users.dat", ds.user_raw_ids);
  write_idmap(dir + "/idmap_items.dat", ds.item_raw_ids);
}

GroupDataset read_dataset(const std::string& dir) {
  GroupDataset ds;
  ds.user_raw_ids = read_idmap(dir + "/idmap_users.dat");
  ds.item_raw_ids = read_idmap(dir + "/idmap_items.dat");
  ds.n_users = static_cast<int>(ds.user_raw_ids.size());
  ds.n_items = static_cast<int>(ds.item_raw_ids.size());
  {
    auto in = open_in(dir + "/groupMember.dat");
    int gid;
    std::string members;
    while (in >> gid >> members) {
      Group g;
      g.group_id = gid;
      g.members = parse_int_list(members, dir + "/groupMember.dat");
      ds.groups.push_back(std::move(g));
    }
  }
  ds.group_ratings.train = read_ratings_file(dir + "/groupRatingTrain.dat");
  ds.group_ratings.val = read_ratings_file(dir + "/groupRatingVal.dat");
  ds.group_ratings.test = read_ratings_file(dir + "/groupRatingTest.dat");
  {
    auto in = open_in(dir + "/negative.dat");
    int group, item;
    std::string negs;
    while (in >> group >> item >> negs) {
      NegativeSet ns;
      ns.group = group;
      ns.item = item;
      ns.negatives = parse_int_list(negs, dir + "/negative.dat");
      ds.negatives.push_back(std::move(ns));
    }
  }
  {
    auto in = open_in(dir + "/userRating.dat");
    UserRating r;
    while (in >> r.user >> r.item >> r.rating >> r.ts) ds.user_ratings.push_back(r);
  }
  return ds;
}

// --- statistics --------------------------------------------------------------

SummaryStats summarize(const GroupDataset& ds) {
  SummaryStats s;
  s.n_users = static_cast<std::size_t>(ds.n_users);
  s.n_items = static_cast<std::size_t>(ds.n_items);
  s.n_groups = ds.groups.size();
  s.n_user_ratings = ds.user_ratings.size();
  s.n_group_ratings = ds.group_ratings.total();
  if (s.n_users) s.avg_ratings_per_user = double(s.n_user_ratings) / double(s.n_users);
  if (s.n_groups) s.avg_ratings_per_group = double(s.n_group_ratings) / double(s.n_groups);
  if (s.n_groups) {
    std::size_t members = 0;
    for (const auto& g : ds.groups) members += g.members.size();
    s.avg_group_size = double(members) / double(s.n_groups);
  }
  return s;
}

namespace {

// Days-since-epoch to civil date (Howard Hinnant's algorithm).
void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y_ = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y = static_cast<int>(y_ + (m <= 2));
}

std::string month_key(std::int64_t ts) {
  std::int64_t days = ts >= 0 ? ts / 86400 : (ts - 86399) / 86400;
  int y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u", y, m);
  return buf;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

double percentile(std::vector<double> sorted_values, double p) {
  if (sorted_values.empty()) return 0.0;
  double idx = p * (static_cast<double>(sorted_values.size()) - 1.0);
  std::size_t lo = static_cast<std::size_t>(idx);
  std::size_t hi = std::min(lo + 1, sorted_values.size() - 1);
  double frac = idx - static_cast<double>(lo);
  return sorted_values[lo] * (1.0 - frac) + sorted_values[hi] * frac;
}

}  // namespace

void write_stats_csv(const GroupDataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  SummaryStats s = summarize(ds);
  {
    auto out = open_out(dir + "/summary.csv");
    out << "metric,value\n";
    out << "n_users," << s.n_users << '\n';
    out << "n_items," << s.n_items << '\n';
    out << "n_groups," << s.n_groups << '\n';
    out << "n_user_ratings," << s.n_user_ratings << '\n';
    out << "n_group_ratings," << s.n_group_ratings << '\n';
    out << "avg_ratings_per_user," << fmt(s.avg_ratings_per_user) << '\n';
    out << "avg_ratings_per_group," << fmt(s.avg_ratings_per_group) << '\n';
    out << "avg_group_size," << fmt(s.avg_group_size) << '\n';
  }
  {
    // ratings per month, user and group series side by side
    std::map<std::string, std::pair<std::size_t, std::size_t>> months;
    for (const auto& r : ds.user_ratings) ++months[month_key(r.ts)].first;
    for (const auto& r : ds.all_group_ratings()) ++months[month_key(r.ts)].second;
    auto out = open_out(dir + "/ratings_per_month.csv");
    out << "month,user_ratings,group_ratings\n";
    for (const auto& [month, counts] : months)
      out << month << ',' << counts.first << ',' << counts.second << '\n';
  }
  std::vector<std::size_t> item_count(static_cast<std::size_t>(ds.n_items), 0);
  std::vector<double> item_sum(static_cast<std::size_t>(ds.n_items), 0.0);
  std::vector<std::int64_t> item_first_ts(static_cast<std::size_t>(ds.n_items), INT64_MAX);
  for (const auto& r : ds.user_ratings) {
    auto i = static_cast<std::size_t>(r.item);
    ++item_count[i];
    item_sum[i] += r.rating;
    item_first_ts[i] = std::min(item_first_ts[i], r.ts);
  }
  {
    auto out = open_out(dir + "/item_rating_profile.csv");
    out << "item_id,n_ratings,avg_rating\n";
    for (int i = 0; i < ds.n_items; ++i) {
      auto idx = static_cast<std::size_t>(i);
      if (!item_count[idx]) continue;
      out << i << ',' << item_count[idx] << ','
          << fmt(item_sum[idx] / double(item_count[idx])) << '\n';
    }
  }
  {
    // The ratings file carries no release year, so item age is measured from
    // the item's first rating in this dataset.
    std::map<int, std::pair<std::size_t, double>> buckets;  // years -> (n, sum)
    constexpr double kYear = 365.25 * 86400.0;
    for (const auto& r : ds.user_ratings) {
      auto i = static_cast<std::size_t>(r.item);
      int years = static_cast<int>(std::floor(double(r.ts - item_first_ts[i]) / kYear));
      auto& b = buckets[years];
      ++b.first;
      b.second += r.rating;
    }
    auto out = open_out(dir + "/rating_vs_item_age.csv");
    out << "years_since_first_rating,n_ratings,avg_rating\n";
    for (const auto& [years, b] : buckets)
      out << years << ',' << b.first << ',' << fmt(b.second / double(b.first)) << '\n';
  }
  {
    // Per group: mean of member ratings over the group's commonly rated items;
    // distribution summarized per group size.
    std::unordered_map<std::int64_t, double> member_rating;  // (user, item) -> rating
    for (const auto& r : ds.user_ratings)
      member_rating[(std::int64_t(r.user) << 32) | std::uint32_t(r.item)] = r.rating;
    std::unordered_map<int, const Group*> by_id;
    for (const auto& g : ds.groups) by_id[g.group_id] = &g;
    std::unordered_map<int, std::pair<double, std::size_t>> group_acc;
    for (const auto& r : ds.all_group_ratings()) {
      const Group* g = by_id.at(r.group);
      for (int u : g->members) {
        auto it = member_rating.find((std::int64_t(u) << 32) | std::uint32_t(r.item));
        if (it != member_rating.end()) {
          group_acc[r.group].first += it->second;
          ++group_acc[r.group].second;
        }
      }
    }
    std::map<std::size_t, std::vector<double>> by_size;
    for (const auto& g : ds.groups) {
      auto it = group_acc.find(g.group_id);
      if (it == group_acc.end() || it->second.second == 0) continue;
      by_size[g.members.size()].push_back(it->second.first / double(it->second.second));
    }
    auto out = open_out(dir + "/group_size_rating.csv");
    out << "group_size,n_groups,mean,p25,p50,p75\n";
    for (auto& [size, vals] : by_size) {
      std::sort(vals.begin(), vals.end());
      double mean = 0;
      for (double v : vals) mean += v;
      mean /= double(vals.size());
      out << size << ',' << vals.size() << ',' << fmt(mean) << ',' << fmt(percentile(vals, 0.25))
          << ',' << fmt(percentile(vals, 0.50)) << ',' << fmt(percentile(vals, 0.75)) << '\n';
    }
  }
}

}  // namespace drgr::data
