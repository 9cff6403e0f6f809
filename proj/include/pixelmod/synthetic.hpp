#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pixelmod/hashing.hpp"

namespace pixelmod::synthetic {

enum class Role { kSeed, kVariant, kTwin, kDistractor };

std::string_view role_name(Role role);

struct PlantedImage {
  std::string id;
  Role role = Role::kDistractor;
  std::string seed_id;  // owning seed for variants and twins
  std::filesystem::path path;
  std::string text;     // sidecar content
  hashing::PerceptualHash pdq{hashing::HashKind::kPdq256};
  hashing::PerceptualHash phash{hashing::HashKind::kPHash64};
};

struct LabeledPair {
  std::string query_id;
  std::string candidate_id;
  bool relevant = false;
};

struct PlantedOptions {
  int seeds = 5;
  int variants_per_seed = 8;
  int twins_per_seed = 2;
  int distractors = 150;
  int image_size = 128;
  std::uint64_t rng_seed = 20240501;

  int variant_max_distance = 60;   // PDQ, variant or twin to its seed
  int foreign_min_distance = 91;   // PDQ, variant or twin to any other seed
  int distractor_min_distance = 97;  // PDQ, distractor to every seed
};

/// Procedural images with sidecar text, written under `dir/seeds` and
/// `dir/corpus`, plus `dir/ground_truth.csv`. Rejection sampling enforces the
/// distance bands in the options, unique hashes, Jaccard-4 >= 0.2 between a
/// variant's text and its seed's, and < 0.05 for twins.
struct PlantedCorpus {
  std::filesystem::path root;
  std::vector<PlantedImage> seeds;
  std::vector<PlantedImage> corpus;

  /// Every (seed, corpus image) pair; relevant iff the image is a variant of
  /// that seed.
  std::vector<LabeledPair> ground_truth() const;
  const PlantedImage& find(const std::string& id) const;
};

PlantedCorpus generate_planted_corpus(const std::filesystem::path& dir,
                                      const PlantedOptions& options = {});

}  // namespace pixelmod::synthetic
