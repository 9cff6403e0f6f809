#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pixelmod/hashing.hpp"

namespace pixelmod::stories {

enum class PolicyCategory {
  kParticipation,
  kIntimidation,
  kOutcomes,
  kSyntheticMedia,
};

inline constexpr PolicyCategory kAllCategories[] = {
    PolicyCategory::kParticipation, PolicyCategory::kIntimidation, PolicyCategory::kOutcomes,
    PolicyCategory::kSyntheticMedia};

/// "PARTICIPATION", "INTIMIDATION", "OUTCOMES", "SYNTHETIC_MEDIA".
std::string_view category_name(PolicyCategory c);
/// Report label, e.g. "Participation in Civic Processes".
std::string_view category_label(PolicyCategory c);
PolicyCategory parse_category(std::string_view name);

/// One category out of several that apply: any of the three civic-process
/// categories wins over synthetic media, in enum order. Throws kValidation
/// on an empty set.
PolicyCategory resolve_category(std::span<const PolicyCategory> applicable);

struct ClusterParams {
  int eps = 90;
  int min_cluster_size = 1;

  void validate(hashing::HashKind kind) const;
};

struct ImageStory {
  int story_id = 0;
  std::vector<std::string> members;  // sorted
  std::string representative;
  std::optional<PolicyCategory> category;
  int moderated_count = 0;

  nlohmann::json to_json() const;
  static ImageStory from_json(const nlohmann::json& j);
};

using HashedImage = std::pair<std::string, hashing::PerceptualHash>;

/// DBSCAN over Hamming distance. Points that are neither core nor border
/// (possible only with min_cluster_size > 1) become singleton stories, so
/// the result always partitions the input. Representative: member with the
/// smallest summed distance to the others, ties to the lowest id. Story ids
/// are 1..n in representative order.
std::vector<ImageStory> cluster(const std::vector<HashedImage>& images,
                                const ClusterParams& params = {});

/// Sets moderated_count from per-image flags. Throws kMissingFlag when a
/// member has no flag.
void apply_flags(std::vector<ImageStory>& stories, const std::map<std::string, bool>& flags);

struct CategoryRow {
  PolicyCategory category;
  int stories = 0;
  long long members = 0;
  long long moderated = 0;

  /// Moderated share of members as "4.16%", rounded half up.
  std::string percentage() const;
};

struct ModerationReport {
  std::vector<CategoryRow> rows;  // one per category, enum order
  int uncategorized_stories = 0;

  std::string table() const;
  void write_csv(std::ostream& out) const;
  nlohmann::json to_json() const;
};

ModerationReport moderation_report(const std::vector<ImageStory>& stories,
                                   const std::map<std::string, bool>& flags);

nlohmann::json stories_to_json(const std::vector<ImageStory>& stories);

}  // namespace pixelmod::stories
