#include <algorithm>
#include <random>
#include <unordered_set>

#include "pixelmod/calibration.hpp"
#include "pixelmod/error.hpp"

namespace pixelmod::calibration {
namespace {

using hashing::HashKind;
using hashing::PerceptualHash;
using Rng = std::mt19937_64;

int uniform(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

std::string word(Rng& rng, char lo, char hi, int min_len, int max_len) {
  std::string w;
  for (int i = uniform(rng, min_len, max_len); i > 0; --i) {
    w += static_cast<char>(uniform(rng, lo, hi));
  }
  return w;
}

std::string words(Rng& rng, char lo, char hi, int count) {
  std::string out;
  for (int i = 0; i < count; ++i) {
    if (i > 0) out += ' ';
    out += word(rng, lo, hi, 3, 7);
  }
  return out;
}

PerceptualHash random_hash(HashKind kind, Rng& rng) {
  PerceptualHash::Words w{};
  for (int i = 0; i < hashing::word_count(kind); ++i) w[i] = rng();
  return PerceptualHash(kind, w);
}

PerceptualHash at_distance(const PerceptualHash& base, int d, Rng& rng) {
  std::vector<int> bits(base.bits());
  for (int i = 0; i < base.bits(); ++i) bits[i] = i;
  std::shuffle(bits.begin(), bits.end(), rng);
  PerceptualHash out = base;
  for (int i = 0; i < d; ++i) out.flip_bit(bits[i]);
  return out;
}

double score(const text::TextMetric& m, const std::string& a, const std::string& b) {
  return text::similarity(m, ocr::normalize(a), ocr::normalize(b));
}

// Query text over a..m; every other text is built from it or from n..z.
std::string close_copy(const std::string& q, Rng& rng) {
  std::string out = q;
  for (char& c : out) {
    if (c != ' ' && uniform(rng, 0, 99) < 5) c = static_cast<char>(uniform(rng, 'a', 'm'));
  }
  return out;
}

// Isolated 4-grams of the query fenced by digits and n..z filler, so it
// shares 4-grams but no 5-gram with the query.
std::string faint_copy(const std::string& q, Rng& rng, int grams) {
  std::string out = "7" + word(rng, 'n', 'z', 3, 6) + "7";
  for (int g = 0; g < grams; ++g) {
    const int at = uniform(rng, 0, static_cast<int>(q.size()) - 4);
    out += q.substr(at, 4) + "7" + word(rng, 'n', 'z', 3, 6) + "7";
  }
  return out;
}

// Query 3-grams fenced by '#': high overlap on short grams, none on 4-grams.
std::string decoy_copy(const std::string& q, Rng& rng) {
  std::string out = "#";
  for (std::size_t i = 0; i + 3 <= q.size(); i += 3) {
    if (uniform(rng, 0, 3) == 0) continue;
    out += q.substr(i, 3) + "#";
  }
  return out;
}

enum class Kind { kClose, kFaint, kPlainTwin, kDecoyTwin, kDistractor };

struct Planned {
  std::string id;
  std::string query;
  Kind kind;
  PerceptualHash pdq{HashKind::kPdq256};
  PerceptualHash phash{HashKind::kPHash64};
  std::string text;
};

bool relevant(Kind k) { return k == Kind::kClose || k == Kind::kFaint; }

// Independent of the engine: checks by direct arithmetic that the target
// cell is perfect and every other cell of the standard grid is not.
void check_optimality(const std::vector<Planned>& items,
                      const std::map<std::string, Planned>& queries) {
  const auto grid = GridSpec::standard();
  auto fail = [](const std::string& why) {
    throw Error(ErrorCode::kValidation, "planted grid is not separable: " + why);
  };
  int max_pos_pdq = 0, max_pos_phash = 0, max_other_pdq_in = 0;
  for (const auto& it : items) {
    const auto& q = queries.at(it.query);
    const int dp = hashing::hamming(it.pdq, q.pdq);
    const int dh = hashing::hamming(it.phash, q.phash);
    if (relevant(it.kind)) {
      max_pos_pdq = std::max(max_pos_pdq, dp);
      max_pos_phash = std::max(max_pos_phash, dh);
    } else if (it.kind != Kind::kDistractor) {
      max_other_pdq_in = std::max(max_other_pdq_in, dp);
    }
    const double j4 = score(text::TextMetric::jaccard(4), it.text, q.text);
    if (relevant(it.kind) && (dp > 90 || j4 < 0.05)) fail(it.id + " would be missed");
    if (!relevant(it.kind) && dp <= 90 && j4 >= 0.05) fail(it.id + " would be accepted");
  }
  if (max_pos_pdq <= 80) fail("no positive needs radius 90");
  if (max_pos_phash <= 10) fail("every positive is inside pHash radius 10");
  if (max_other_pdq_in > 90) fail("twin outside radius 90");

  for (const auto& m : grid.metrics) {
    for (double t : grid.thresholds) {
      if (m == text::TextMetric::jaccard(4) && t == 0.05) continue;
      bool misses = false;
      for (const auto& it : items) {
        if (it.kind == Kind::kDistractor) continue;
        const bool accept = score(m, it.text, queries.at(it.query).text) >= t;
        if (accept != relevant(it.kind)) {
          misses = true;
          break;
        }
      }
      if (!misses) fail(m.name() + " separates perfectly at " + std::to_string(t));
    }
  }
}

}  // namespace

void PlantedGrid::prewarm(ocr::LabelCache& cache) const {
  for (const auto& [id, label] : labels) {
    for (auto kind : {HashKind::kPHash64, HashKind::kPdq256}) {
      cache.put(*catalog.hash_of(id, kind), label);
    }
  }
}

PlantedGrid make_planted_grid(const PlantedGridOptions& o) {
  Rng rng(o.rng_seed);
  std::map<std::string, Planned> queries;
  std::vector<Planned> items;
  std::unordered_set<PerceptualHash> used;

  for (int qi = 0; qi < o.queries; ++qi) {
    Planned q;
    q.id = "q-" + std::to_string(qi);
    q.query = q.id;
    do {
      q.pdq = random_hash(HashKind::kPdq256, rng);
      q.phash = random_hash(HashKind::kPHash64, rng);
    } while (used.contains(q.pdq) || used.contains(q.phash));
    used.insert(q.pdq);
    used.insert(q.phash);
    q.text = words(rng, 'a', 'm', 10);
    queries.emplace(q.id, q);
  }

  int counter = 0;
  for (const auto& [qid, q] : queries) {
    auto plan = [&](Kind kind, int pdq_lo, int pdq_hi, int ph_lo, int ph_hi) {
      Planned it;
      it.id = "c-" + std::to_string(counter++);
      it.query = qid;
      it.kind = kind;
      for (int tries = 0;; ++tries) {
        if (tries == 1000) throw Error(ErrorCode::kValidation, "cannot place " + it.id);
        it.pdq = at_distance(q.pdq, uniform(rng, pdq_lo, pdq_hi), rng);
        it.phash = at_distance(q.phash, uniform(rng, ph_lo, ph_hi), rng);
        bool ok = !used.contains(it.pdq) && !used.contains(it.phash);
        for (const auto& [oid, other] : queries) {
          if (oid == qid) continue;
          ok = ok && hashing::hamming(it.pdq, other.pdq) > 110 &&
               hashing::hamming(it.phash, other.phash) > 10;
        }
        if (ok) break;
      }
      used.insert(it.pdq);
      used.insert(it.phash);
      for (int tries = 0;; ++tries) {
        if (tries == 1000) throw Error(ErrorCode::kValidation, "cannot write text for " + it.id);
        switch (kind) {
          case Kind::kClose:
            it.text = close_copy(q.text, rng);
            break;
          case Kind::kFaint:
            it.text = faint_copy(q.text, rng, uniform(rng, 4, 7));
            break;
          case Kind::kPlainTwin:
          case Kind::kDistractor:
            it.text = words(rng, 'n', 'z', 8);
            break;
          case Kind::kDecoyTwin:
            it.text = decoy_copy(q.text, rng);
            break;
        }
        const double j4 = score(text::TextMetric::jaccard(4), it.text, q.text);
        const double j5 = score(text::TextMetric::jaccard(5), it.text, q.text);
        const bool fits = kind == Kind::kClose ? j4 >= 0.3
                          : kind == Kind::kFaint ? j4 >= 0.05 && j4 < 0.10 && j5 == 0.0
                                                 : j4 < 0.05;
        if (fits) break;
      }
      items.push_back(std::move(it));
    };
    for (int i = 0; i < o.close_positives; ++i) {
      // First positive sits just inside 90; half of them leave pHash radius 10.
      const bool far_phash = i >= o.close_positives / 2;
      plan(Kind::kClose, i == 0 ? 81 : 1, 90, far_phash ? 11 : 1, far_phash ? 20 : 10);
    }
    for (int i = 0; i < o.faint_positives; ++i) plan(Kind::kFaint, 1, 90, 1, 10);
    for (int i = 0; i < o.plain_twins; ++i) plan(Kind::kPlainTwin, 1, 90, 1, 10);
    for (int i = 0; i < o.decoy_twins; ++i) plan(Kind::kDecoyTwin, 1, 90, 1, 10);
    for (int i = 0; i < o.distractors; ++i) plan(Kind::kDistractor, 91, 110, 11, 32);
  }

  check_optimality(items, queries);

  PlantedGrid out;
  out.gt.provenance = "planted grid, rng seed " + std::to_string(o.rng_seed);
  auto label_of = [](const std::string& text) {
    return ocr::OcrLabel{text, ocr::normalize(text), std::nullopt};
  };
  for (const auto& [qid, q] : queries) {
    out.catalog.add(qid, std::nullopt, {q.phash, q.pdq});
    out.labels[qid] = label_of(q.text);
  }
  for (const auto& it : items) {
    out.catalog.add(it.id, std::nullopt, {it.phash, it.pdq});
    out.labels[it.id] = label_of(it.text);
    out.phash_index.insert(it.id, it.phash);
    out.pdq_index.insert(it.id, it.pdq);
    out.gt.entries.push_back({it.query, it.id, relevant(it.kind)});
  }
  return out;
}

}  // namespace pixelmod::calibration
