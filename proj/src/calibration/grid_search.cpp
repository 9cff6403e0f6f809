#include <algorithm>
#include <iomanip>
#include <ostream>
#include <set>

#include "pixelmod/calibration.hpp"
#include "pixelmod/error.hpp"

namespace pixelmod::calibration {
namespace {

using Relevance = std::map<std::string, std::set<std::string>>;

Relevance relevant_by_query(const GroundTruthSet& gt) {
  Relevance out;
  for (const auto& e : gt.entries) {
    auto& r = out[e.query_id];
    if (e.relevant) r.insert(e.candidate_id);
  }
  return out;
}

void require_known(const GroundTruthSet& gt, const pipeline::ImageCatalog& catalog,
                   hashing::HashKind kind) {
  for (const auto& e : gt.entries) {
    for (const auto* id : {&e.query_id, &e.candidate_id}) {
      if (!catalog.hash_of(*id, kind)) {
        throw Error(ErrorCode::kMissingImage, "ground truth references unknown image " + *id);
      }
    }
  }
}

pipeline::Seed seed_for(const std::string& id, hashing::HashKind kind,
                        const pipeline::ImageCatalog& catalog) {
  return {id, *catalog.hash_of(id, kind), [&catalog, id] { return catalog.load(id); }};
}

struct Counts {
  int tp = 0, fp = 0, fn = 0;

  void add(const std::set<std::string>& accepted, const std::set<std::string>& relevant) {
    for (const auto& id : accepted) (relevant.contains(id) ? tp : fp) += 1;
    for (const auto& id : relevant) fn += accepted.contains(id) ? 0 : 1;
  }
};

// Stage-1 hits and text scores for one query at the kind's largest radius.
struct CachedQuery {
  std::string id;
  std::vector<index::SearchHit> hits;
  bool empty_label = false;
  std::vector<bool> errored;                    // per hit
  std::map<std::string, std::vector<double>> scores;  // metric name -> per hit
};

}  // namespace

const index::BinaryIndex& EvalContext::index_for(hashing::HashKind kind) const {
  const auto* idx = kind == hashing::HashKind::kPHash64 ? phash_index : pdq_index;
  if (!idx) {
    throw Error(ErrorCode::kValidation,
                "no index for " + std::string(hashing::hash_kind_name(kind)));
  }
  return *idx;
}

EvalScores evaluate(const PipelineConfig& config, const GroundTruthSet& gt,
                    const EvalContext& ctx) {
  require_known(gt, ctx.catalog, config.hash_kind);
  const auto relevant = relevant_by_query(gt);
  pipeline::Pipeline p(config, ctx.index_for(config.hash_kind), ctx.catalog, ctx.provider,
                       ctx.cache);
  Counts counts;
  for (const auto& [query, rel] : relevant) {
    const auto result = p.query(seed_for(query, config.hash_kind, ctx.catalog));
    std::set<std::string> accepted;
    for (const auto& c : result.candidates) {
      if (c.decision == pipeline::Decision::kAccepted ||
          c.decision == pipeline::Decision::kAcceptedVisualOnly) {
        accepted.insert(c.image_id);
      }
    }
    counts.add(accepted, rel);
  }
  return EvalScores::from_counts(counts.tp, counts.fp, counts.fn);
}

GridSpec GridSpec::standard() {
  GridSpec s;
  for (int r = 4; r <= 10; ++r) s.phash_radii.push_back(r);
  s.pdq_radii = {32, 48, 64, 80, 90};
  for (int i = 0; i <= 16; ++i) s.thresholds.push_back(i / 20.0);
  s.metrics = text::all_metrics();
  return s;
}

std::vector<PipelineConfig> GridSpec::configs() const {
  std::vector<PipelineConfig> out;
  for (auto kind : {hashing::HashKind::kPHash64, hashing::HashKind::kPdq256}) {
    for (int r : kind == hashing::HashKind::kPHash64 ? phash_radii : pdq_radii) {
      for (const auto& m : metrics) {
        for (double t : thresholds) {
          PipelineConfig c = base;
          c.hash_kind = kind;
          c.theta_visual = r;
          c.text_metric = m;
          c.theta_textual = t;
          out.push_back(c);
        }
      }
    }
  }
  return out;
}

std::vector<GridRow> grid_search(const GridSpec& spec, const GroundTruthSet& gt,
                                 const EvalContext& ctx) {
  gt.validate();
  const auto relevant = relevant_by_query(gt);
  const auto configs = spec.configs();
  for (const auto& c : configs) c.validate();

  std::map<hashing::HashKind, std::vector<CachedQuery>> cached;
  for (auto kind : {hashing::HashKind::kPHash64, hashing::HashKind::kPdq256}) {
    const auto& radii = kind == hashing::HashKind::kPHash64 ? spec.phash_radii : spec.pdq_radii;
    if (radii.empty()) continue;
    require_known(gt, ctx.catalog, kind);
    const int max_radius = *std::max_element(radii.begin(), radii.end());
    const auto& idx = ctx.index_for(kind);
    auto& queries = cached[kind];
    for (const auto& [query, rel] : relevant) {
      CachedQuery q;
      q.id = query;
      const auto seed = seed_for(query, kind, ctx.catalog);
      q.hits = idx.search_range(seed.hash, max_radius);
      std::erase_if(q.hits, [&](const auto& h) { return h.image_id == query; });
      if (!q.hits.empty()) {
        const auto qlabel =
            ctx.cache
                .get_or_extract(seed.hash,
                                [&] { return ocr::extract_label(seed.load(), ctx.provider); })
                .label;
        q.empty_label = qlabel.empty();
        const auto& qtext = spec.base.compare_raw_text ? qlabel.raw : qlabel.normalized;
        const auto qpoints = text::to_code_points(qtext);
        q.errored.assign(q.hits.size(), false);
        for (const auto& m : spec.metrics) q.scores[m.name()].assign(q.hits.size(), 0.0);
        if (!q.empty_label) {
          for (std::size_t i = 0; i < q.hits.size(); ++i) {
            const auto& id = q.hits[i].image_id;
            try {
              const auto hash = ctx.catalog.hash_of(id, kind);
              if (!hash) throw Error(ErrorCode::kUnknownImage, id);
              const auto label =
                  ctx.cache
                      .get_or_extract(*hash,
                                      [&] {
                                        return ocr::extract_label(ctx.catalog.load(id),
                                                                  ctx.provider);
                                      })
                      .label;
              const auto points = text::to_code_points(
                  spec.base.compare_raw_text ? label.raw : label.normalized);
              for (const auto& m : spec.metrics) {
                q.scores[m.name()][i] = text::similarity(m, qpoints, points);
              }
            } catch (const std::exception&) {
              q.errored[i] = true;  // never accepted, like ERRORED candidates
            }
          }
        }
      }
      queries.push_back(std::move(q));
    }
  }

  std::vector<GridRow> rows;
  rows.reserve(configs.size());
  for (const auto& c : configs) {
    Counts counts;
    for (const auto& q : cached.at(c.hash_kind)) {
      std::set<std::string> accepted;
      static const std::vector<double> kNoScores;
      const auto it = q.scores.find(c.text_metric.name());
      const auto& scores = it == q.scores.end() ? kNoScores : it->second;
      for (std::size_t i = 0; i < q.hits.size(); ++i) {
        if (q.hits[i].distance > c.theta_visual) break;  // hits are distance-sorted
        bool accept;
        if (q.empty_label) {
          accept = c.empty_query_policy == pipeline::EmptyQueryPolicy::kAcceptVisualOnly;
        } else {
          accept = !q.errored[i] && scores[i] >= c.theta_textual;
        }
        if (accept) accepted.insert(q.hits[i].image_id);
      }
      counts.add(accepted, relevant.at(q.id));
    }
    rows.push_back({c, EvalScores::from_counts(counts.tp, counts.fp, counts.fn)});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const GridRow& a, const GridRow& b) {
    if (a.scores.f1 != b.scores.f1) return a.scores.f1 > b.scores.f1;
    return a.scores.precision > b.scores.precision;
  });
  return rows;
}

void write_grid_csv(std::ostream& out, const std::vector<GridRow>& rows) {
  out << "rank,hash_kind,theta_visual,text_metric,theta_textual,precision,recall,f1,tp,fp,fn\n";
  int rank = 0;
  for (const auto& r : rows) {
    out << ++rank << ',' << hashing::hash_kind_name(r.config.hash_kind) << ','
        << r.config.theta_visual << ',' << r.config.text_metric.name() << ','
        << std::fixed << std::setprecision(2) << r.config.theta_textual << ','
        << std::setprecision(6) << r.scores.precision << ',' << r.scores.recall << ','
        << r.scores.f1 << ',' << r.scores.tp << ',' << r.scores.fp << ',' << r.scores.fn
        << '\n';
    out.unsetf(std::ios::floatfield);
  }
}

nlohmann::json grid_to_json(const std::vector<GridRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"config", r.config.to_json()}, {"scores", r.scores.to_json()}});
  }
  return out;
}

}  // namespace pixelmod::calibration
