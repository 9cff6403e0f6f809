#include "pixelmod/stories.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "pixelmod/binary_index.hpp"
#include "pixelmod/error.hpp"

namespace pixelmod::stories {
namespace {

struct DisjointSets {
  std::vector<std::size_t> parent;

  explicit DisjointSets(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

std::string medoid(const std::vector<std::size_t>& members,
                   const std::vector<HashedImage>& images) {
  std::size_t best = members.front();
  long long best_sum = -1;
  for (auto i : members) {
    long long sum = 0;
    for (auto j : members) sum += hashing::hamming(images[i].second, images[j].second);
    if (best_sum < 0 || sum < best_sum ||
        (sum == best_sum && images[i].first < images[best].first)) {
      best = i;
      best_sum = sum;
    }
  }
  return images[best].first;
}

}  // namespace

std::string_view category_name(PolicyCategory c) {
  switch (c) {
    case PolicyCategory::kParticipation: return "PARTICIPATION";
    case PolicyCategory::kIntimidation: return "INTIMIDATION";
    case PolicyCategory::kOutcomes: return "OUTCOMES";
    case PolicyCategory::kSyntheticMedia: return "SYNTHETIC_MEDIA";
  }
  return "?";
}

std::string_view category_label(PolicyCategory c) {
  switch (c) {
    case PolicyCategory::kParticipation: return "Participation in Civic Processes";
    case PolicyCategory::kIntimidation: return "Intimidation from Civic Processes";
    case PolicyCategory::kOutcomes: return "Outcomes of Civic Processes";
    case PolicyCategory::kSyntheticMedia: return "Synthetic and Manipulated Media";
  }
  return "?";
}

PolicyCategory parse_category(std::string_view name) {
  for (auto c : kAllCategories) {
    if (name == category_name(c)) return c;
  }
  throw Error(ErrorCode::kValidation, "unknown policy category: " + std::string(name));
}

PolicyCategory resolve_category(std::span<const PolicyCategory> applicable) {
  if (applicable.empty()) throw Error(ErrorCode::kValidation, "no category applies");
  return *std::min_element(applicable.begin(), applicable.end());
}

void ClusterParams::validate(hashing::HashKind kind) const {
  if (eps < 0 || eps > hashing::bit_width(kind)) {
    throw Error(ErrorCode::kValidation, "eps must be in [0, " +
                                            std::to_string(hashing::bit_width(kind)) + "]");
  }
  if (min_cluster_size < 1) throw Error(ErrorCode::kValidation, "min_cluster_size must be >= 1");
}

std::vector<ImageStory> cluster(const std::vector<HashedImage>& images,
                                const ClusterParams& params) {
  if (images.empty()) return {};
  const auto kind = images.front().second.kind();
  params.validate(kind);

  index::BinaryIndex idx(kind);
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < images.size(); ++i) {
    idx.insert(images[i].first, images[i].second);  // throws on kind or id clash
    pos.emplace(images[i].first, i);
  }

  std::vector<std::vector<std::size_t>> neighbors(images.size());
  std::vector<bool> core(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (const auto& h : idx.search_range(images[i].second, params.eps)) {
      neighbors[i].push_back(pos.at(h.image_id));
    }
    core[i] = static_cast<int>(neighbors[i].size()) >= params.min_cluster_size;
  }

  DisjointSets sets(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!core[i]) continue;
    for (auto j : neighbors[i]) {
      if (core[j]) sets.unite(i, j);
    }
  }
  // Border points join the cluster of their nearest core neighbour.
  std::vector<std::size_t> root(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    root[i] = i;
    if (core[i]) {
      root[i] = sets.find(i);
      continue;
    }
    for (auto j : neighbors[i]) {
      if (core[j]) {
        root[i] = sets.find(j);
        break;
      }
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < images.size(); ++i) groups[root[i]].push_back(i);

  std::vector<ImageStory> out;
  out.reserve(groups.size());
  for (auto& [r, members] : groups) {
    ImageStory s;
    s.representative = medoid(members, images);
    for (auto i : members) s.members.push_back(images[i].first);
    std::sort(s.members.begin(), s.members.end());
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const ImageStory& a, const ImageStory& b) {
    return a.representative < b.representative;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].story_id = static_cast<int>(i + 1);
  return out;
}

void apply_flags(std::vector<ImageStory>& stories, const std::map<std::string, bool>& flags) {
  for (auto& s : stories) {
    int moderated = 0;
    for (const auto& id : s.members) {
      const auto it = flags.find(id);
      if (it == flags.end()) {
        throw Error(ErrorCode::kMissingFlag, "no moderation flag for " + id);
      }
      moderated += it->second ? 1 : 0;
    }
    s.moderated_count = moderated;
  }
}

std::string CategoryRow::percentage() const {
  long long hundredths = 0;
  if (members > 0) hundredths = (moderated * 20000 + members) / (2 * members);
  std::ostringstream s;
  s << hundredths / 100 << '.' << std::setw(2) << std::setfill('0') << hundredths % 100 << '%';
  return s.str();
}

ModerationReport moderation_report(const std::vector<ImageStory>& stories,
                                   const std::map<std::string, bool>& flags) {
  auto flagged = stories;
  apply_flags(flagged, flags);
  ModerationReport report;
  for (auto c : kAllCategories) report.rows.push_back({c});
  for (const auto& s : flagged) {
    if (!s.category) {
      ++report.uncategorized_stories;
      continue;
    }
    auto& row = report.rows[static_cast<std::size_t>(*s.category)];
    row.stories += 1;
    row.members += static_cast<long long>(s.members.size());
    row.moderated += s.moderated_count;
  }
  return report;
}

std::string ModerationReport::table() const {
  std::ostringstream out;
  out << std::left << std::setw(36) << "Category" << std::right << std::setw(15)
      << "Image stories" << std::setw(14) << "Moderation %" << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(36) << category_label(r.category) << std::right
        << std::setw(15) << r.stories << std::setw(14) << r.percentage() << '\n';
  }
  if (uncategorized_stories > 0) {
    out << "(" << uncategorized_stories << " stories without a category)\n";
  }
  return out.str();
}

void ModerationReport::write_csv(std::ostream& out) const {
  out << "category,image_stories,moderation_pct,members,moderated\n";
  for (const auto& r : rows) {
    out << category_label(r.category) << ',' << r.stories << ',' << r.percentage() << ','
        << r.members << ',' << r.moderated << '\n';
  }
}

nlohmann::json ModerationReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"category", category_name(r.category)},
                         {"label", category_label(r.category)},
                         {"image_stories", r.stories},
                         {"members", r.members},
                         {"moderated", r.moderated},
                         {"moderation_pct", r.percentage()}});
  }
  return {{"rows", rows_json}, {"uncategorized_stories", uncategorized_stories}};
}

nlohmann::json ImageStory::to_json() const {
  return {{"story_id", story_id},
          {"representative", representative},
          {"members", members},
          {"size", members.size()},
          {"category", category ? nlohmann::json(category_name(*category)) : nlohmann::json()},
          {"moderated_count", moderated_count}};
}

ImageStory ImageStory::from_json(const nlohmann::json& j) {
  ImageStory s;
  try {
    s.story_id = j.at("story_id").get<int>();
    s.representative = j.at("representative").get<std::string>();
    s.members = j.at("members").get<std::vector<std::string>>();
    if (j.contains("category") && !j["category"].is_null()) {
      s.category = parse_category(j["category"].get<std::string>());
    }
    s.moderated_count = j.value("moderated_count", 0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation, std::string("bad story: ") + e.what());
  }
  if (s.members.empty()) throw Error(ErrorCode::kValidation, "story has no members");
  if (std::find(s.members.begin(), s.members.end(), s.representative) == s.members.end()) {
    throw Error(ErrorCode::kValidation, "representative is not a member");
  }
  return s;
}

nlohmann::json stories_to_json(const std::vector<ImageStory>& stories) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : stories) out.push_back(s.to_json());
  return out;
}

}  // namespace pixelmod::stories
