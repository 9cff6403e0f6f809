#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "pixelmod/error.hpp"
#include "pixelmod/stories.hpp"
#include "support/test_support.hpp"

namespace pixelmod::stories {
namespace {

using hashing::HashKind;
using hashing::PerceptualHash;

ErrorCode error_code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected pixelmod::Error";
  return ErrorCode::kValidation;
}

PerceptualHash with_bits(int from, int to) {
  PerceptualHash h(HashKind::kPdq256);
  for (int k = from; k < to; ++k) h.flip_bit(k);
  return h;
}

using Partition = std::set<std::set<std::string>>;

Partition partition_of(const std::vector<ImageStory>& stories) {
  Partition p;
  for (const auto& s : stories) p.insert({s.members.begin(), s.members.end()});
  return p;
}

// Connected components of the eps-graph by brute force.
Partition union_find_oracle(const std::vector<HashedImage>& images, int eps) {
  std::vector<std::size_t> parent(images.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    return parent[x] == x ? x : parent[x] = find(parent[x]);
  };
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t j = i + 1; j < images.size(); ++j) {
      if (pixelmod::testing::naive_hamming(images[i].second, images[j].second) <= eps) {
        parent[find(i)] = find(j);
      }
    }
  }
  std::map<std::size_t, std::set<std::string>> groups;
  for (std::size_t i = 0; i < images.size(); ++i) groups[find(i)].insert(images[i].first);
  Partition p;
  for (auto& [r, g] : groups) p.insert(g);
  return p;
}

// Anchors with perturbed members: plenty of chaining near eps.
std::vector<HashedImage> clustered_hashes(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PerceptualHash> anchors;
  for (int i = 0; i < n / 10; ++i) {
    anchors.push_back(pixelmod::testing::random_hash(HashKind::kPdq256, rng));
  }
  std::vector<HashedImage> out;
  for (int i = 0; i < n; ++i) {
    const auto& a = anchors[rng() % anchors.size()];
    out.emplace_back("img-" + std::to_string(i),
                     pixelmod::testing::perturb(a, static_cast<int>(rng() % 50), rng));
  }
  return out;
}

TEST(Cluster, ChainIsTransitive) {
  const std::vector<HashedImage> images = {
      {"a", with_bits(0, 0)}, {"b", with_bits(0, 80)}, {"c", with_bits(0, 160)}};
  ASSERT_EQ(hashing::hamming(images[0].second, images[1].second), 80);
  ASSERT_EQ(hashing::hamming(images[1].second, images[2].second), 80);
  ASSERT_EQ(hashing::hamming(images[0].second, images[2].second), 160);
  const auto stories = cluster(images, {90, 1});
  ASSERT_EQ(stories.size(), 1u);
  EXPECT_EQ(stories[0].members, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(stories[0].representative, "b");
  EXPECT_EQ(partition_of(stories), union_find_oracle(images, 90));
}

TEST(Cluster, FarApartGivesSingletons) {
  const std::vector<HashedImage> images = {
      {"a", with_bits(0, 0)}, {"b", with_bits(0, 100)}, {"c", with_bits(100, 256)}};
  const auto stories = cluster(images, {90, 1});
  ASSERT_EQ(stories.size(), 3u);
  for (const auto& s : stories) EXPECT_EQ(s.members.size(), 1u);
}

TEST(Cluster, MatchesUnionFindOracle) {
  const auto images = clustered_hashes(1000, 11);
  for (int eps : {20, 45, 60, 90}) {
    EXPECT_EQ(partition_of(cluster(images, {eps, 1})), union_find_oracle(images, eps))
        << "eps " << eps;
  }
}

TEST(Cluster, PartitionsInput) {
  const auto images = clustered_hashes(500, 3);
  for (int min_size : {1, 3, 10}) {
    const auto stories = cluster(images, {45, min_size});
    std::multiset<std::string> seen;
    for (const auto& s : stories) {
      ASSERT_FALSE(s.members.empty());
      EXPECT_TRUE(std::binary_search(s.members.begin(), s.members.end(), s.representative));
      seen.insert(s.members.begin(), s.members.end());
    }
    EXPECT_EQ(seen.size(), images.size());
    EXPECT_EQ(std::set<std::string>(seen.begin(), seen.end()).size(), images.size());
  }
}

TEST(Cluster, EpsMonotonicity) {
  const auto images = clustered_hashes(400, 5);
  std::size_t previous = images.size() + 1;
  for (int eps = 0; eps <= 120; eps += 10) {
    const auto n = cluster(images, {eps, 1}).size();
    EXPECT_LE(n, previous) << "eps " << eps;
    previous = n;
  }
}

TEST(Cluster, DeterministicIdsByRepresentative) {
  auto images = clustered_hashes(300, 9);
  const auto first = cluster(images, {60, 1});
  std::mt19937_64 rng(1);
  std::shuffle(images.begin(), images.end(), rng);
  const auto second = cluster(images, {60, 1});
  ASSERT_EQ(first.size(), second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    EXPECT_EQ(first[i].story_id, static_cast<int>(i + 1));
    EXPECT_EQ(first[i].story_id, second[i].story_id);
    EXPECT_EQ(first[i].members, second[i].members);
    EXPECT_EQ(first[i].representative, second[i].representative);
    if (i > 0) {
      EXPECT_LT(first[i - 1].representative, first[i].representative);
    }
  }
}

TEST(Cluster, MedoidTiesGoToLowestId) {
  // Two points: equal summed distances.
  const std::vector<HashedImage> images = {{"z", with_bits(0, 10)}, {"m", with_bits(0, 0)}};
  const auto stories = cluster(images, {90, 1});
  ASSERT_EQ(stories.size(), 1u);
  EXPECT_EQ(stories[0].representative, "m");
}

TEST(Cluster, MinPointsLeavesNoiseAsSingletons) {
  // Dense group of four plus one point reachable only from a border point.
  std::vector<HashedImage> images = {{"a", with_bits(0, 0)},
                                     {"b", with_bits(0, 5)},
                                     {"c", with_bits(0, 10)},
                                     {"d", with_bits(0, 15)},
                                     {"e", with_bits(0, 40)},
                                     {"f", with_bits(0, 66)}};
  const auto stories = cluster(images, {25, 3});
  EXPECT_EQ(partition_of(stories), (Partition{{"a", "b", "c", "d", "e"}, {"f"}}));
}

TEST(Cluster, Errors) {
  std::vector<HashedImage> mixed = {{"a", with_bits(0, 0)},
                                    {"b", PerceptualHash(HashKind::kPHash64)}};
  EXPECT_EQ(error_code_of([&] { cluster(mixed); }), ErrorCode::kKindMismatch);
  std::vector<HashedImage> dup = {{"a", with_bits(0, 0)}, {"a", with_bits(0, 1)}};
  EXPECT_EQ(error_code_of([&] { cluster(dup); }), ErrorCode::kDuplicateId);
  EXPECT_EQ(error_code_of([&] { cluster({{"a", with_bits(0, 0)}}, {257, 1}); }),
            ErrorCode::kValidation);
  EXPECT_EQ(error_code_of([&] { cluster({{"a", with_bits(0, 0)}}, {10, 0}); }),
            ErrorCode::kValidation);
  EXPECT_TRUE(cluster({}).empty());
}

TEST(Category, PrecedenceAndNames) {
  const PolicyCategory both[] = {PolicyCategory::kSyntheticMedia, PolicyCategory::kOutcomes};
  EXPECT_EQ(resolve_category(both), PolicyCategory::kOutcomes);
  const PolicyCategory only[] = {PolicyCategory::kSyntheticMedia};
  EXPECT_EQ(resolve_category(only), PolicyCategory::kSyntheticMedia);
  EXPECT_EQ(error_code_of([] { resolve_category({}); }), ErrorCode::kValidation);
  for (auto c : kAllCategories) EXPECT_EQ(parse_category(category_name(c)), c);
  EXPECT_EQ(error_code_of([] { parse_category("SPAM"); }), ErrorCode::kValidation);
}

// Builds `count` stories in one category covering `members` images of which
// the first `moderated` are flagged.
void add_category(std::vector<ImageStory>& stories, std::map<std::string, bool>& flags,
                  PolicyCategory c, int count, int members, int moderated) {
  const std::string prefix = std::string(category_name(c)) + "-";
  int next = 0;
  for (int s = 0; s < count; ++s) {
    ImageStory story;
    story.category = c;
    const int size = s == 0 ? members - (count - 1) : 1;
    for (int k = 0; k < size; ++k) {
      const std::string id = prefix + std::to_string(next);
      flags[id] = next < moderated;
      story.members.push_back(id);
      ++next;
    }
    story.representative = story.members.front();
    stories.push_back(std::move(story));
  }
}

TEST(Report, ReferenceTableFormatting) {
  std::vector<ImageStory> stories;
  std::map<std::string, bool> flags;
  add_category(stories, flags, PolicyCategory::kParticipation, 57, 2500, 104);
  add_category(stories, flags, PolicyCategory::kIntimidation, 78, 2500, 149);
  add_category(stories, flags, PolicyCategory::kOutcomes, 81, 20000, 354);
  add_category(stories, flags, PolicyCategory::kSyntheticMedia, 42, 2500, 69);
  const auto report = moderation_report(stories, flags);
  ASSERT_EQ(report.rows.size(), 4u);
  const std::pair<int, std::string> expected[] = {
      {57, "4.16%"}, {78, "5.96%"}, {81, "1.77%"}, {42, "2.76%"}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(report.rows[i].stories, expected[i].first);
    EXPECT_EQ(report.rows[i].percentage(), expected[i].second);
  }
  std::ostringstream csv;
  report.write_csv(csv);
  EXPECT_EQ(csv.str(),
            "category,image_stories,moderation_pct,members,moderated\n"
            "Participation in Civic Processes,57,4.16%,2500,104\n"
            "Intimidation from Civic Processes,78,5.96%,2500,149\n"
            "Outcomes of Civic Processes,81,1.77%,20000,354\n"
            "Synthetic and Manipulated Media,42,2.76%,2500,69\n");
  const auto table = report.table();
  EXPECT_NE(table.find("Intimidation from Civic Processes"), std::string::npos);
  EXPECT_NE(table.find("5.96%"), std::string::npos);
}

TEST(Report, Arithmetic) {
  std::vector<ImageStory> stories;
  std::map<std::string, bool> flags;
  add_category(stories, flags, PolicyCategory::kOutcomes, 1, 10, 3);
  auto report = moderation_report(stories, flags);
  EXPECT_EQ(report.rows[2].percentage(), "30.00%");
  EXPECT_EQ(report.rows[0].percentage(), "0.00%");

  for (auto& [id, f] : flags) f = false;
  report = moderation_report(stories, flags);
  for (const auto& r : report.rows) EXPECT_EQ(r.percentage(), "0.00%");

  EXPECT_EQ((CategoryRow{PolicyCategory::kOutcomes, 1, 3, 2}).percentage(), "66.67%");
  EXPECT_EQ((CategoryRow{PolicyCategory::kOutcomes, 1, 8, 1}).percentage(), "12.50%");
  EXPECT_EQ((CategoryRow{PolicyCategory::kOutcomes, 1, 200000, 1}).percentage(), "0.00%");
  EXPECT_EQ((CategoryRow{PolicyCategory::kOutcomes, 1, 20000, 1}).percentage(), "0.01%");
  EXPECT_EQ((CategoryRow{PolicyCategory::kOutcomes, 1, 5, 5}).percentage(), "100.00%");
}

TEST(Report, MissingFlagAndUncategorized) {
  std::vector<ImageStory> stories;
  std::map<std::string, bool> flags;
  add_category(stories, flags, PolicyCategory::kOutcomes, 2, 4, 1);
  stories.push_back({0, {"loose"}, "loose", std::nullopt, 0});
  EXPECT_EQ(error_code_of([&] { moderation_report(stories, flags); }), ErrorCode::kMissingFlag);
  flags["loose"] = true;
  const auto report = moderation_report(stories, flags);
  EXPECT_EQ(report.uncategorized_stories, 1);
  EXPECT_EQ(report.rows[2].members, 4);
}

TEST(Export, StoryJsonRoundTrip) {
  auto stories = cluster({{"a", with_bits(0, 0)}, {"b", with_bits(0, 10)}});
  stories[0].category = PolicyCategory::kIntimidation;
  apply_flags(stories, {{"a", true}, {"b", false}});
  const auto j = stories_to_json(stories);
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0]["category"], "INTIMIDATION");
  EXPECT_EQ(j[0]["size"], 2);
  EXPECT_EQ(j[0]["moderated_count"], 1);
  const auto back = ImageStory::from_json(j[0]);
  EXPECT_EQ(back.members, stories[0].members);
  EXPECT_EQ(back.category, stories[0].category);
  EXPECT_EQ(back.moderated_count, 1);

  auto bad = j[0];
  bad["representative"] = "zzz";
  EXPECT_EQ(error_code_of([&] { ImageStory::from_json(bad); }), ErrorCode::kValidation);
}

}  // namespace
}  // namespace pixelmod::stories
