#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pixelmod/corpus_store.hpp"
#include "pixelmod/synthetic.hpp"

namespace {

std::string image_id(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return pixelmod::store::sha256_hex(bytes);
}

}  // namespace

// Writes the synthetic corpus, manifests for `pixelmod ingest`, and the ground
// truth keyed by store image ids.
int main(int argc, char** argv) {
  CLI::App app{"Generate the planted evaluation corpus"};
  std::string dir;
  pixelmod::synthetic::PlantedOptions options;
  app.add_option("dir", dir, "Output directory")->required();
  app.add_option("--rng-seed", options.rng_seed, "Generator seed");
  CLI11_PARSE(app, argc, argv);

  const auto corpus = pixelmod::synthetic::generate_planted_corpus(dir, options);
  const auto root = std::filesystem::absolute(dir);
  auto write = [](const std::filesystem::path& path, const auto& images) {
    std::ofstream out(path);
    for (const auto& img : images) {
      out << nlohmann::json{{"path", std::filesystem::absolute(img.path).string()}, {"post_id", "post-" + img.id}}.dump()
          << '\n';
    }
  };
  write(root / "seeds.jsonl", corpus.seeds);
  write(root / "corpus.jsonl", corpus.corpus);
  std::map<std::string, std::string> ids;
  for (const auto& img : corpus.seeds) ids[img.id] = image_id(img.path);
  for (const auto& img : corpus.corpus) ids[img.id] = image_id(img.path);
  std::ofstream gt(root / "ground_truth.ids.csv");
  gt << "query_id,candidate_id,is_relevant\n";
  for (const auto& pair : corpus.ground_truth()) {
    gt << ids.at(pair.query_id) << ',' << ids.at(pair.candidate_id) << ','
       << (pair.relevant ? 1 : 0) << '\n';
  }
  std::cout << "seeds: " << corpus.seeds.size() << ", corpus: " << corpus.corpus.size()
            << ", ground truth: " << (root / "ground_truth.ids.csv").string() << '\n';
  return 0;
}
