#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pixelmod/calibration.hpp"
#include "pixelmod/corpus_store.hpp"
#include "pixelmod/service.hpp"
#include "pixelmod/stories.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pixelmod;

// Pipeline settings shared by every subcommand; unset flags keep the defaults.
struct PipelineFlags {
  std::optional<std::string> hash_kind;
  std::optional<int> theta_visual;
  std::optional<std::string> text_metric;
  std::optional<double> theta_textual;
  std::optional<std::string> empty_query_policy;
  std::optional<bool> compare_raw_text;
  std::optional<int> ocr_workers;
  std::string ocr_provider = "sidecar";
  std::vector<std::string> ocr_command;

  void add_to(CLI::App& app) {
    app.add_option("--hash-kind", hash_kind, "phash64 or pdq256");
    app.add_option("--theta-visual", theta_visual, "Hamming radius");
    app.add_option("--text-metric", text_metric, "e.g. jaccard_4, norm_levenshtein");
    app.add_option("--theta-textual", theta_textual, "Text similarity threshold");
    app.add_option("--empty-query-policy", empty_query_policy,
                   "ACCEPT_VISUAL_ONLY or REJECT_ALL");
    app.add_option("--compare-raw-text", compare_raw_text, "Compare text without normalizing");
    app.add_option("--ocr-workers", ocr_workers, "Concurrent OCR calls");
    app.add_option("--ocr-provider", ocr_provider, "sidecar, process or http");
    app.add_option("--ocr-command", ocr_command, "Command for the process provider");
  }

  pipeline::PipelineConfig config() const {
    json j = json::object();
    if (hash_kind) j["hash_kind"] = *hash_kind;
    if (theta_visual) j["theta_visual"] = *theta_visual;
    if (text_metric) j["text_metric"] = *text_metric;
    if (theta_textual) j["theta_textual"] = *theta_textual;
    if (empty_query_policy) j["empty_query_policy"] = *empty_query_policy;
    if (compare_raw_text) j["compare_raw_text"] = *compare_raw_text;
    if (ocr_workers) j["ocr_workers"] = *ocr_workers;
    auto c = pipeline::PipelineConfig::from_json(j);
    c.validate();
    return c;
  }

  ocr::ProviderConfig provider() const { return {ocr_provider, ocr_command}; }
};

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

// `out` of "-" or empty means stdout.
template <typename Fn>
void write_to(const std::string& out, Fn&& fn) {
  if (out.empty() || out == "-") {
    fn(std::cout);
    return;
  }
  std::ofstream file(out);
  if (!file) throw Error(ErrorCode::kIoError, "cannot write " + out);
  fn(file);
  if (!file) throw Error(ErrorCode::kIoError, "cannot write " + out);
}

// Two-column CSV with an optional header line.
std::map<std::string, std::string> read_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::map<std::string, std::string> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw Error(ErrorCode::kValidation, path + ":" + std::to_string(n) + ": expected two columns");
    }
    if (n == 1 && line.rfind("image_id,", 0) == 0) continue;
    out[line.substr(0, comma)] = line.substr(comma + 1);
  }
  return out;
}

std::vector<fs::path> image_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void cmd_ingest(const fs::path& store_root, const std::string& manifest,
                const std::string& job_id, const std::string& seed_set) {
  store::CorpusStore store(store_root);
  const auto summary = store.ingest(store::read_manifest(manifest), job_id);
  json out = {{"summary", summary.to_json()}};
  if (!seed_set.empty()) {
    std::vector<std::string> ids;
    for (const auto& id : summary.image_ids) {
      if (!id.empty()) ids.push_back(id);
    }
    if (ids.empty()) throw Error(ErrorCode::kValidation, "no images ingested for the seed set");
    out["seed_set"] = store.create_seed_set(seed_set, ids).to_json();
  }
  print(out);
}

void cmd_query(const fs::path& store_root, const PipelineFlags& flags, const std::string& image,
               const std::string& image_id, const std::string& out) {
  const auto config = flags.config();
  store::CorpusStore store(store_root);
  ocr::LabelCache cache;
  store.prewarm(cache);
  const auto provider = ocr::make_provider(flags.provider());
  std::optional<pipeline::Seed> seed;
  if (!image_id.empty()) {
    const auto hash = store.hash_of(image_id, config.hash_kind);
    if (!hash) throw Error(ErrorCode::kUnknownImage, "unknown image " + image_id);
    seed = pipeline::Seed{image_id, *hash, [&store, image_id] { return store.load(image_id); }};
  } else {
    auto source = ocr::ImageSource::from_file(image);
    const auto id = store::sha256_hex(source.bytes);
    seed = pipeline::make_seed(id, std::move(source), config.hash_kind);
  }
  pipeline::Pipeline p(config, store.index(config.hash_kind), store, *provider, cache);
  auto result = p.query(*seed);
  store.persist_labels(cache);
  std::sort(result.candidates.begin(), result.candidates.end(), pipeline::candidate_before);
  if (out.empty()) {
    json items = json::array();
    for (const auto& c : result.candidates) items.push_back(c.to_json());
    print({{"config", config.to_json()}, {"candidates", items}, {"report", result.report.to_json()}});
    return;
  }
  write_to(out, [&](std::ostream& o) { pipeline::write_candidates_jsonl(o, result.candidates); });
  std::cerr << result.report.to_json().dump() << '\n';
}

void cmd_batch_query(const fs::path& store_root, const PipelineFlags& flags,
                     const std::string& seed_set, const std::string& seeds_dir,
                     const std::string& out) {
  const auto config = flags.config();
  store::CorpusStore store(store_root);
  ocr::LabelCache cache;
  store.prewarm(cache);
  const auto provider = ocr::make_provider(flags.provider());
  std::vector<pipeline::Seed> seeds;
  if (!seed_set.empty()) {
    if (!store.seed_set(seed_set)) throw Error(ErrorCode::kNotFound, "no seed set " + seed_set);
    seeds = store.seeds_of(seed_set, config.hash_kind);
  } else {
    for (const auto& path : image_files(seeds_dir)) {
      auto source = ocr::ImageSource::from_file(path);
      const auto id = store::sha256_hex(source.bytes);
      seeds.push_back(pipeline::make_seed(id, std::move(source), config.hash_kind));
    }
  }
  pipeline::Pipeline p(config, store.index(config.hash_kind), store, *provider, cache);
  const auto batch = p.batch_query(seeds);
  store.persist_labels(cache);
  write_to(out, [&](std::ostream& o) { pipeline::write_candidates_jsonl(o, batch.candidates); });
  std::map<std::string, int> counts;
  for (const auto& c : batch.candidates) counts[std::string(pipeline::decision_name(c.decision))]++;
  std::cerr << json{{"seeds", seeds.size()}, {"candidates", batch.candidates.size()},
                    {"decision_counts", counts}}
                   .dump()
            << '\n';
}

void cmd_calibrate(const fs::path& store_root, const PipelineFlags& flags, const std::string& gt_path,
                   bool planted, const std::string& csv_out, const std::string& json_out,
                   int top) {
  const auto base = flags.config();
  auto spec = calibration::GridSpec::standard();
  spec.base = base;
  const auto provider = ocr::make_provider(flags.provider());
  ocr::LabelCache cache;
  std::vector<calibration::GridRow> rows;
  if (planted) {
    const auto grid = calibration::make_planted_grid();
    grid.prewarm(cache);
    const calibration::EvalContext ctx{grid.catalog, &grid.phash_index, &grid.pdq_index,
                                       *provider, cache};
    rows = calibration::grid_search(spec, grid.gt, ctx);
  } else {
    if (gt_path.empty()) throw Error(ErrorCode::kValidation, "--gt or --planted is required");
    store::CorpusStore store(store_root);
    store.prewarm(cache);
    const auto gt = calibration::GroundTruthSet::read_csv(fs::path(gt_path));
    const calibration::EvalContext ctx{store, &store.index(hashing::HashKind::kPHash64),
                                       &store.index(hashing::HashKind::kPdq256), *provider, cache};
    rows = calibration::grid_search(spec, gt, ctx);
    store.persist_labels(cache);
  }
  if (!csv_out.empty()) write_to(csv_out, [&](std::ostream& o) { calibration::write_grid_csv(o, rows); });
  if (!json_out.empty()) {
    write_to(json_out, [&](std::ostream& o) { o << calibration::grid_to_json(rows).dump(2) << '\n'; });
  }
  json best = json::array();
  for (int i = 0; i < top && i < static_cast<int>(rows.size()); ++i) {
    best.push_back({{"rank", i + 1}, {"config", rows[i].config.to_json()},
                    {"scores", rows[i].scores.to_json()}});
  }
  print({{"cells", rows.size()}, {"top", best}});
}

void cmd_stories(const fs::path& store_root, const stories::ClusterParams& params,
                 const std::vector<std::string>& candidate_files, const std::string& categories_csv,
                 const std::string& flags_csv, const std::string& report_csv) {
  params.validate(hashing::HashKind::kPdq256);
  store::CorpusStore store(store_root);
  std::set<std::string> ids;
  if (candidate_files.empty()) {
    for (const auto& id : store.image_ids()) ids.insert(id);
  } else {
    for (const auto& file : candidate_files) {
      std::ifstream in(file);
      if (!in) throw Error(ErrorCode::kIoError, "cannot open " + file);
      for (const auto& c : pipeline::read_candidates_jsonl(in)) {
        if (c.decision == pipeline::Decision::kAccepted ||
            c.decision == pipeline::Decision::kAcceptedVisualOnly) {
          ids.insert(c.image_id);
        }
      }
    }
  }
  std::vector<stories::HashedImage> images;
  for (const auto& id : ids) {
    const auto hash = store.hash_of(id, hashing::HashKind::kPdq256);
    if (!hash) throw Error(ErrorCode::kUnknownImage, "unknown image " + id);
    images.emplace_back(id, *hash);
  }
  auto built = stories::cluster(images, params);

  if (!categories_csv.empty()) {
    const auto cats = read_pairs(categories_csv);
    for (auto& s : built) {
      std::vector<stories::PolicyCategory> applicable;
      for (const auto& m : s.members) {
        if (const auto it = cats.find(m); it != cats.end()) {
          applicable.push_back(stories::parse_category(it->second));
        }
      }
      if (!applicable.empty()) s.category = stories::resolve_category(applicable);
    }
  }
  json out = {{"stories", stories::stories_to_json(built)}};
  if (!flags_csv.empty()) {
    std::map<std::string, bool> flags;
    for (const auto& [id, v] : read_pairs(flags_csv)) flags[id] = v == "1" || v == "true";
    stories::apply_flags(built, flags);
    const auto report = stories::moderation_report(built, flags);
    out["stories"] = stories::stories_to_json(built);
    out["report"] = report.to_json();
    std::cerr << report.table();
    if (!report_csv.empty()) write_to(report_csv, [&](std::ostream& o) { report.write_csv(o); });
  }
  print(out);
}

void cmd_bench(const PipelineFlags& flags, const std::string& dir, int runs,
               const std::string& json_out) {
  const auto provider = ocr::make_provider(flags.provider());
  const auto report = calibration::bench(flags.config(), image_files(dir), *provider, runs);
  std::cout << report.table();
  if (!json_out.empty()) {
    write_to(json_out, [&](std::ostream& o) { o << report.to_json().dump(2) << '\n'; });
  }
}

int cmd_serve(const fs::path& store_root, const PipelineFlags& flags, const std::string& host,
              int port) {
  service::ServiceConfig config;
  config.store_root = store_root;
  config.pipeline = flags.config();
  config.provider = flags.provider();
  if (const char* token = std::getenv("PIXELMOD_API_TOKEN"); token && *token) {
    config.api_token = token;
  }
  service::Service svc(config);
  std::cerr << "serving on " << host << ":" << port << '\n';
  if (!svc.serve(host, port)) {
    std::cerr << "error: cannot bind " << host << ":" << port << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pixelmod: find visual variants of moderated images and check their text"};
  app.set_config("--config", "", "TOML-style config file; [section] per subcommand");
  app.require_subcommand(1);

  std::string store_root = "pixelmod-store";
  app.add_option("--store", store_root, "Corpus store directory");
  PipelineFlags flags;
  flags.add_to(app);

  auto* ingest = app.add_subcommand("ingest", "Ingest images listed in a JSONL manifest");
  std::string manifest, job_id, ingest_seed_set;
  ingest->add_option("manifest", manifest, "Manifest file")->required();
  ingest->add_option("--job-id", job_id, "Resumable job id (default: derived from manifest)");
  ingest->add_option("--seed-set", ingest_seed_set, "Create a seed set from the ingested images");

  auto* query = app.add_subcommand("query", "Query the corpus with one seed image");
  std::string query_image, query_id, query_out;
  auto* image_opt = query->add_option("image", query_image, "Seed image file");
  auto* id_opt = query->add_option("--image-id", query_id, "Seed image already in the store");
  image_opt->excludes(id_opt);
  query->add_option("--out", query_out, "Write candidates as JSONL instead of JSON");

  auto* batch = app.add_subcommand("batch-query", "Query with every seed of a set or directory");
  std::string batch_set, batch_dir, batch_out;
  auto* set_opt = batch->add_option("--seed-set", batch_set, "Stored seed set");
  auto* dir_opt = batch->add_option("--seeds-dir", batch_dir, "Directory of seed images")
                      ->check(CLI::ExistingDirectory);
  set_opt->excludes(dir_opt);
  batch->add_option("--out", batch_out, "Candidates JSONL (default stdout)");

  auto* calibrate = app.add_subcommand("calibrate", "Grid-search thresholds against ground truth");
  std::string gt_path, grid_csv, grid_json;
  bool planted = false;
  int top = 5;
  calibrate->add_option("--gt", gt_path, "Ground truth CSV: query_id,candidate_id,is_relevant");
  calibrate->add_flag("--planted", planted, "Use the built-in synthetic ground truth");
  calibrate->add_option("--csv", grid_csv, "Write every grid cell as CSV");
  calibrate->add_option("--json", grid_json, "Write every grid cell as JSON");
  calibrate->add_option("--top", top, "Rows to print")->check(CLI::PositiveNumber);

  auto* stories_cmd = app.add_subcommand("stories", "Cluster images into stories and report");
  stories::ClusterParams params;
  std::vector<std::string> candidate_files;
  std::string categories_csv, flags_csv, report_csv;
  stories_cmd->add_option("--eps", params.eps, "PDQ Hamming radius");
  stories_cmd->add_option("--min-cluster-size", params.min_cluster_size, "DBSCAN minPts");
  stories_cmd->add_option("--candidates", candidate_files,
                          "Cluster accepted images from these JSONL files (default: whole corpus)");
  stories_cmd->add_option("--categories", categories_csv, "CSV image_id,CATEGORY");
  stories_cmd->add_option("--flags", flags_csv, "CSV image_id,moderated (1/0)");
  stories_cmd->add_option("--report-csv", report_csv, "Write the moderation report as CSV");

  auto* bench = app.add_subcommand("bench", "Time hashing and OCR over a directory of images");
  std::string bench_dir, bench_json;
  int runs = 5;
  bench->add_option("images", bench_dir, "Directory with at least 30 images")
      ->required()
      ->check(CLI::ExistingDirectory);
  bench->add_option("--runs", runs, "Passes to average")->check(CLI::PositiveNumber);
  bench->add_option("--json", bench_json, "Also write the report as JSON");

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API (token from PIXELMOD_API_TOKEN)");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) cmd_ingest(store_root, manifest, job_id, ingest_seed_set);
    if (*query) {
      if (query_image.empty() && query_id.empty()) {
        throw Error(ErrorCode::kValidation, "give an image file or --image-id");
      }
      cmd_query(store_root, flags, query_image, query_id, query_out);
    }
    if (*batch) {
      if (batch_set.empty() && batch_dir.empty()) {
        throw Error(ErrorCode::kValidation, "give --seed-set or --seeds-dir");
      }
      cmd_batch_query(store_root, flags, batch_set, batch_dir, batch_out);
    }
    if (*calibrate) cmd_calibrate(store_root, flags, gt_path, planted, grid_csv, grid_json, top);
    if (*stories_cmd) {
      cmd_stories(store_root, params, candidate_files, categories_csv, flags_csv, report_csv);
    }
    if (*bench) cmd_bench(flags, bench_dir, runs, bench_json);
    if (*serve) return cmd_serve(store_root, flags, host, port);
  } catch (const Error& e) {
    std::cerr << "error: " << error_code_name(e.code()) << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
