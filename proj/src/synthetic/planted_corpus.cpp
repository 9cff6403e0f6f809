#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_set>

#include "pixelmod/error.hpp"
#include "pixelmod/ocr.hpp"
#include "pixelmod/synthetic.hpp"
#include "pixelmod/text_similarity.hpp"

namespace pixelmod::synthetic {
namespace {

using hashing::hamming;

const std::vector<std::string> kClaimWords = {
    "BALLOTS", "STOLEN",   "ELECTION", "RIGGED",  "FRAUD",    "DEAD",
    "VOTERS",  "MACHINES", "COUNTED",  "TWICE",   "MIDNIGHT", "DUMP",
    "SHARPIE", "PENS",     "MAIL",     "IN",      "ILLEGAL",  "FAKE",
    "RESULTS", "OBSERVERS", "BLOCKED", "SWING",   "STATE",    "DISGRACE"};

const std::vector<std::string> kOtherWords = {
    "PROJECTS", "WIN",    "LIVE",    "COVERAGE", "TONIGHT", "WEATHER",
    "SUNNY",    "PARADE", "MUSEUM",  "OPENS",    "HOLIDAY", "GARDEN",
    "PUPPY",    "ADOPT",  "FOOTBALL", "SCORE",   "COOKING", "SOUP",
    "HAPPY",    "BIRTHDAY", "CONCERT", "JAZZ",   "MOUNTAIN", "LAKE"};

struct Canvas {
  int size;
  std::vector<std::uint8_t> rgb;

  explicit Canvas(int s) : size(s), rgb(static_cast<std::size_t>(s) * s * 3) {}

  void put(int x, int y, int c, int v) {
    rgb[(static_cast<std::size_t>(y) * size + x) * 3 + c] =
        static_cast<std::uint8_t>(std::clamp(v, 0, 255));
  }
  int get(int x, int y, int c) const {
    return rgb[(static_cast<std::size_t>(y) * size + x) * 3 + c];
  }
};

using Rng = std::mt19937_64;

int uniform(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

Canvas random_scene(Rng& rng, int size) {
  Canvas img(size);
  int from[3], to[3];
  for (int c = 0; c < 3; ++c) {
    from[c] = uniform(rng, 0, 255);
    to[c] = uniform(rng, 0, 255);
  }
  const bool horizontal = uniform(rng, 0, 1) == 1;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double t = static_cast<double>(horizontal ? x : y) / (size - 1);
      for (int c = 0; c < 3; ++c) {
        img.put(x, y, c, static_cast<int>(from[c] + t * (to[c] - from[c])));
      }
    }
  }
  const int shapes = uniform(rng, 6, 12);
  for (int s = 0; s < shapes; ++s) {
    const int cx = uniform(rng, 0, size - 1);
    const int cy = uniform(rng, 0, size - 1);
    const int rx = uniform(rng, size / 12, size / 3);
    const int ry = uniform(rng, size / 12, size / 3);
    const bool ellipse = uniform(rng, 0, 1) == 1;
    int color[3];
    for (int& c : color) c = uniform(rng, 0, 255);
    for (int y = std::max(0, cy - ry); y < std::min(size, cy + ry); ++y) {
      for (int x = std::max(0, cx - rx); x < std::min(size, cx + rx); ++x) {
        const double dx = static_cast<double>(x - cx) / rx;
        const double dy = static_cast<double>(y - cy) / ry;
        if (!ellipse || dx * dx + dy * dy <= 1.0) {
          for (int c = 0; c < 3; ++c) img.put(x, y, c, color[c]);
        }
      }
    }
  }
  return img;
}

// Mild edits that keep the image visually the same: brightness shift, sensor
// noise and a small stamp.
Canvas perturb_scene(const Canvas& base, Rng& rng) {
  Canvas img = base;
  const int shift = uniform(rng, -15, 15);
  std::normal_distribution<double> noise(0.0, std::uniform_real_distribution<double>(1.0, 5.0)(rng));
  for (int y = 0; y < img.size; ++y) {
    for (int x = 0; x < img.size; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.put(x, y, c, base.get(x, y, c) + shift + static_cast<int>(noise(rng)));
      }
    }
  }
  const int w = uniform(rng, 6, 12);
  const int x0 = uniform(rng, 0, img.size - w);
  const int y0 = uniform(rng, 0, img.size - w);
  const int v = uniform(rng, 0, 255);
  for (int y = y0; y < y0 + w; ++y) {
    for (int x = x0; x < x0 + w; ++x) {
      for (int c = 0; c < 3; ++c) img.put(x, y, c, v);
    }
  }
  return img;
}

std::string sentence(Rng& rng, const std::vector<std::string>& pool, int lines) {
  std::vector<std::string> words = pool;
  std::shuffle(words.begin(), words.end(), rng);
  std::string out;
  std::size_t w = 0;
  for (int l = 0; l < lines; ++l) {
    if (l > 0) out += '\n';
    const int count = uniform(rng, 3, 4);
    for (int k = 0; k < count; ++k) {
      if (k > 0) out += ' ';
      out += words[w++ % words.size()];
    }
  }
  return out;
}

// OCR-style corruption: shuffled lines, occasional wrong letters, case drift.
std::string noisy_copy(const std::string& text, Rng& rng) {
  std::vector<std::string> lines;
  std::string line;
  for (char ch : text) {
    if (ch == '\n') {
      lines.push_back(line);
      line.clear();
    } else {
      line += ch;
    }
  }
  lines.push_back(line);
  if (uniform(rng, 0, 1) == 1) std::shuffle(lines.begin(), lines.end(), rng);
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i > 0) out += uniform(rng, 0, 1) ? "\n" : "  ";
    out += lines[i];
  }
  for (char& ch : out) {
    if (ch >= 'A' && ch <= 'Z') {
      const int roll = uniform(rng, 0, 99);
      if (roll < 3) {
        ch = static_cast<char>('A' + uniform(rng, 0, 25));
      } else if (roll < 10) {
        ch = static_cast<char>(ch - 'A' + 'a');
      }
    }
  }
  return out;
}

double j4(const std::string& a, const std::string& b) {
  return text::similarity(text::TextMetric::jaccard(4), ocr::normalize(a),
                          ocr::normalize(b));
}

class Writer {
 public:
  Writer(std::filesystem::path dir, Rng& rng) : dir_(std::move(dir)), rng_(rng) {
    std::filesystem::create_directories(dir_);
  }

  // Encodes (PNG, or JPEG for some variants), hashes the encoded bytes.
  PlantedImage encode(const std::string& id, const Canvas& img, bool allow_jpeg) {
    PlantedImage out;
    out.id = id;
    std::vector<std::uint8_t> bytes;
    if (allow_jpeg && uniform(rng_, 0, 2) == 0) {
      bytes = hashing::encode_jpeg_rgb(img.size, img.size, img.rgb, uniform(rng_, 70, 95));
      out.path = dir_ / (id + ".jpg");
    } else {
      bytes = hashing::encode_png_rgb(img.size, img.size, img.rgb);
      out.path = dir_ / (id + ".png");
    }
    const auto plane = hashing::decode_image(bytes);
    out.pdq = hashing::pdqhash256(plane);
    out.phash = hashing::phash64(plane);
    pending_bytes_ = std::move(bytes);
    return out;
  }

  void commit(const PlantedImage& image) {
    std::ofstream(image.path, std::ios::binary)
        .write(reinterpret_cast<const char*>(pending_bytes_.data()),
               static_cast<std::streamsize>(pending_bytes_.size()));
    std::ofstream(ocr::SidecarProvider::sidecar_for(image.path), std::ios::binary)
        << image.text;
  }

 private:
  std::filesystem::path dir_;
  Rng& rng_;
  std::vector<std::uint8_t> pending_bytes_;
};

}  // namespace

std::string_view role_name(Role role) {
  switch (role) {
    case Role::kSeed:
      return "seed";
    case Role::kVariant:
      return "variant";
    case Role::kTwin:
      return "twin";
    case Role::kDistractor:
      return "distractor";
  }
  return "?";
}

std::vector<LabeledPair> PlantedCorpus::ground_truth() const {
  std::vector<LabeledPair> out;
  for (const auto& s : seeds) {
    for (const auto& c : corpus) {
      out.push_back({s.id, c.id, c.role == Role::kVariant && c.seed_id == s.id});
    }
  }
  return out;
}

const PlantedImage& PlantedCorpus::find(const std::string& id) const {
  for (const auto* list : {&seeds, &corpus}) {
    for (const auto& img : *list) {
      if (img.id == id) return img;
    }
  }
  throw Error(ErrorCode::kNotFound, "no planted image " + id);
}

PlantedCorpus generate_planted_corpus(const std::filesystem::path& dir,
                                      const PlantedOptions& o) {
  Rng rng(o.rng_seed);
  PlantedCorpus out;
  out.root = dir;
  Writer seed_writer(dir / "seeds", rng);
  Writer corpus_writer(dir / "corpus", rng);
  std::unordered_set<hashing::PerceptualHash> seen_pdq, seen_phash;
  std::vector<Canvas> seed_scenes;
  constexpr int kMaxTries = 2000;
  constexpr int kSeedSeparation = 120;

  // Corpus ids are a shuffled numbering so they carry no hint of the role.
  const int total = o.seeds * (o.variants_per_seed + o.twins_per_seed) + o.distractors;
  std::vector<int> numbering(total);
  std::iota(numbering.begin(), numbering.end(), 0);
  std::shuffle(numbering.begin(), numbering.end(), rng);

  auto fresh = [&](const PlantedImage& img) {
    return !seen_pdq.contains(img.pdq) && !seen_phash.contains(img.phash);
  };
  auto remember = [&](const PlantedImage& img) {
    seen_pdq.insert(img.pdq);
    seen_phash.insert(img.phash);
  };
  auto give_up = [](const std::string& what) {
    throw Error(ErrorCode::kValidation, "planted corpus: cannot place " + what);
  };

  for (int s = 0; s < o.seeds; ++s) {
    const std::string id = "seed-" + std::to_string(s);
    int tries = 0;
    for (;; ++tries) {
      if (tries == kMaxTries) give_up(id);
      Canvas scene = random_scene(rng, o.image_size);
      PlantedImage img = seed_writer.encode(id, scene, false);
      const bool far = std::all_of(out.seeds.begin(), out.seeds.end(), [&](const auto& other) {
        return hamming(img.pdq, other.pdq) >= kSeedSeparation;
      });
      if (!far || !fresh(img)) continue;
      img.role = Role::kSeed;
      img.seed_id = id;
      img.text = sentence(rng, kClaimWords, 2 + s % 2);
      seed_writer.commit(img);
      remember(img);
      out.seeds.push_back(img);
      seed_scenes.push_back(std::move(scene));
      break;
    }
  }

  auto near_own_far_others = [&](const PlantedImage& img, std::size_t owner) {
    for (std::size_t k = 0; k < out.seeds.size(); ++k) {
      const int d = hamming(img.pdq, out.seeds[k].pdq);
      if (k == owner ? d > o.variant_max_distance : d < o.foreign_min_distance) return false;
    }
    return true;
  };

  int counter = 0;
  for (std::size_t s = 0; s < out.seeds.size(); ++s) {
    const auto& seed = out.seeds[s];
    for (int v = 0; v < o.variants_per_seed + o.twins_per_seed; ++v) {
      const bool twin = v >= o.variants_per_seed;
      const std::string id = "img-" + std::to_string(1000 + numbering[counter++]);
      for (int tries = 0;; ++tries) {
        if (tries == kMaxTries) give_up(id);
        PlantedImage img = corpus_writer.encode(id, perturb_scene(seed_scenes[s], rng), true);
        if (!near_own_far_others(img, s) || !fresh(img)) continue;
        img.role = twin ? Role::kTwin : Role::kVariant;
        img.seed_id = seed.id;
        for (int t = 0;; ++t) {
          if (t == kMaxTries) give_up(id + " text");
          img.text = twin ? sentence(rng, kOtherWords, 2) : noisy_copy(seed.text, rng);
          const double sim = j4(img.text, seed.text);
          if (twin ? sim < 0.05 : sim >= 0.2) break;
        }
        corpus_writer.commit(img);
        remember(img);
        out.corpus.push_back(img);
        break;
      }
    }
  }

  for (int d = 0; d < o.distractors; ++d) {
    const std::string id = "img-" + std::to_string(1000 + numbering[counter++]);
    for (int tries = 0;; ++tries) {
      if (tries == kMaxTries) give_up(id);
      PlantedImage img = corpus_writer.encode(id, random_scene(rng, o.image_size), true);
      const bool far = std::all_of(out.seeds.begin(), out.seeds.end(), [&](const auto& s) {
        return hamming(img.pdq, s.pdq) >= o.distractor_min_distance;
      });
      if (!far || !fresh(img)) continue;
      img.role = Role::kDistractor;
      img.text = sentence(rng, uniform(rng, 0, 1) ? kClaimWords : kOtherWords, 1);
      corpus_writer.commit(img);
      remember(img);
      out.corpus.push_back(img);
      break;
    }
  }

  std::sort(out.corpus.begin(), out.corpus.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });

  std::ofstream gt(dir / "ground_truth.csv");
  gt << "query_id,candidate_id,is_relevant\n";
  for (const auto& p : out.ground_truth()) {
    gt << p.query_id << ',' << p.candidate_id << ',' << (p.relevant ? 1 : 0) << '\n';
  }
  return out;
}

}  // namespace pixelmod::synthetic
