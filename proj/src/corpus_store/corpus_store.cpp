#include "pixelmod/corpus_store.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <set>

#include "sqlite.hpp"

namespace pixelmod::store {
namespace fs = std::filesystem;

namespace {

constexpr int kSchemaVersion = 1;
constexpr int kSeedExportVersion = 1;

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS meta(key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS images(
  image_id TEXT PRIMARY KEY,
  storage_path TEXT NOT NULL,
  phash64 TEXT NOT NULL,
  pdq256 TEXT NOT NULL,
  pdq_quality INTEGER,
  ingested_at TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS sources(
  image_id TEXT NOT NULL REFERENCES images(image_id),
  seq INTEGER NOT NULL,
  post_id TEXT,
  post_text TEXT,
  PRIMARY KEY(image_id, seq));
CREATE TABLE IF NOT EXISTS labels(
  image_id TEXT PRIMARY KEY,
  raw TEXT NOT NULL,
  normalized TEXT NOT NULL,
  coverage REAL);
CREATE TABLE IF NOT EXISTS journal(
  job_id TEXT NOT NULL,
  entry INTEGER NOT NULL,
  status TEXT NOT NULL,
  image_id TEXT,
  path TEXT,
  error_code TEXT,
  message TEXT,
  PRIMARY KEY(job_id, entry));
CREATE TABLE IF NOT EXISTS seed_sets(name TEXT PRIMARY KEY, version INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS seed_members(
  name TEXT NOT NULL REFERENCES seed_sets(name),
  seq INTEGER NOT NULL,
  image_id TEXT NOT NULL,
  provenance TEXT NOT NULL,
  from_candidate TEXT,
  reviewer TEXT,
  phash64 TEXT NOT NULL,
  pdq256 TEXT NOT NULL,
  PRIMARY KEY(name, seq),
  UNIQUE(name, image_id));
)sql";

std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingImage, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Writes via a temporary name so a crash never leaves a partial file under
// the content address.
void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string extension_for(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' && bytes[2] == 'N' &&
      bytes[3] == 'G') {
    return ".png";
  }
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8) return ".jpg";
  return ".bin";
}

Provenance parse_provenance(const std::string& s) {
  if (s == "IMPORTED") return Provenance::kImported;
  if (s == "PROMOTED") return Provenance::kPromoted;
  throw Error(ErrorCode::kValidation, "unknown provenance " + s);
}

struct Hashes {
  PerceptualHash phash{HashKind::kPHash64};
  PerceptualHash pdq{HashKind::kPdq256};
};

PerceptualHash pdq_from(const std::string& hex, std::optional<int> quality) {
  return PerceptualHash::from_hex(HashKind::kPdq256, hex, quality);
}

}  // namespace

std::string_view provenance_name(Provenance p) {
  return p == Provenance::kImported ? "IMPORTED" : "PROMOTED";
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kIoError, "sha256 failed");
  }
  static const char* kHex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 15];
  }
  return out;
}

nlohmann::json ImageRecord::to_json() const {
  nlohmann::json sources_json = nlohmann::json::array();
  for (const auto& s : sources) {
    sources_json.push_back({{"post_id", s.post_id ? nlohmann::json(*s.post_id) : nullptr},
                            {"post_text", s.post_text ? nlohmann::json(*s.post_text) : nullptr}});
  }
  nlohmann::json j = {{"image_id", image_id},
                      {"storage_path", storage_path.string()},
                      {"sources", sources_json},
                      {"phash64", phash64.hex()},
                      {"pdq256", pdq256.hex()},
                      {"pdq_quality", nullptr},
                      {"has_label", has_label},
                      {"ingested_at", ingested_at}};
  if (pdq256.quality()) j["pdq_quality"] = *pdq256.quality();
  return j;
}

nlohmann::json IngestSummary::to_json() const {
  nlohmann::json errs = nlohmann::json::array();
  for (const auto& e : errors) {
    errs.push_back({{"entry", e.entry},
                    {"path", e.path},
                    {"code", error_code_name(e.code)},
                    {"message", e.message}});
  }
  return {{"job_id", job_id},     {"total", total},   {"ingested", ingested},
          {"duplicates", duplicates}, {"failed", failed}, {"resumed", resumed},
          {"errors", errs}, {"image_ids", image_ids}};
}

bool SeedSet::contains(const std::string& image_id) const {
  return std::any_of(members.begin(), members.end(),
                     [&](const SeedMember& m) { return m.image_id == image_id; });
}

nlohmann::json SeedSet::to_json() const {
  nlohmann::json ms = nlohmann::json::array();
  for (const auto& m : members) {
    ms.push_back({{"image_id", m.image_id},
                  {"provenance", provenance_name(m.provenance)},
                  {"from_candidate", m.from_candidate ? nlohmann::json(*m.from_candidate) : nullptr},
                  {"reviewer", m.reviewer ? nlohmann::json(*m.reviewer) : nullptr}});
  }
  return {{"name", name}, {"version", version}, {"members", ms}};
}

struct CorpusStore::Impl {
  struct Cached {
    Hashes hashes;
    std::string rel_path;
  };

  fs::path root;
  sql::Db db;
  std::map<std::string, Cached> images;
  index::BinaryIndex phash_index{HashKind::kPHash64};
  index::BinaryIndex pdq_index{HashKind::kPdq256};

  explicit Impl(const fs::path& r) : root(r), db((fs::create_directories(r), r / "meta.sqlite")) {
    db.exec("PRAGMA foreign_keys = ON");
    db.exec(kSchema);
    sql::Stmt version(db, "SELECT value FROM meta WHERE key = 'schema_version'");
    if (version.step()) {
      if (version.text(0) != std::to_string(kSchemaVersion)) {
        throw Error(ErrorCode::kVersionMismatch, "store schema version " + version.text(0));
      }
    } else {
      sql::Stmt put(db, "INSERT INTO meta(key, value) VALUES ('schema_version', ?)");
      put.bind(1, std::to_string(kSchemaVersion)).run();
    }
    sql::Stmt rows(db, "SELECT image_id, storage_path, phash64, pdq256, pdq_quality FROM images");
    while (rows.step()) {
      std::optional<int> quality;
      if (!rows.is_null(4)) quality = static_cast<int>(rows.integer(4));
      add_to_memory(rows.text(0), rows.text(1),
                    {PerceptualHash::from_hex(HashKind::kPHash64, rows.text(2)),
                     pdq_from(rows.text(3), quality)});
    }
  }

  void add_to_memory(const std::string& id, const std::string& rel, const Hashes& h) {
    images[id] = {h, rel};
    phash_index.insert(id, h.phash);
    pdq_index.insert(id, h.pdq);
  }

  std::optional<SeedSet> load_seed_set(const std::string& name) {
    sql::Stmt set(db, "SELECT version FROM seed_sets WHERE name = ?");
    set.bind(1, name);
    if (!set.step()) return std::nullopt;
    SeedSet s{name, {}, static_cast<int>(set.integer(0))};
    sql::Stmt ms(db,
                 "SELECT image_id, provenance, from_candidate, reviewer FROM seed_members "
                 "WHERE name = ? ORDER BY seq");
    ms.bind(1, name);
    while (ms.step()) {
      s.members.push_back(
          {ms.text(0), parse_provenance(ms.text(1)), ms.opt_text(2), ms.opt_text(3)});
    }
    return s;
  }

  void insert_member(const std::string& name, int seq, const SeedMember& m, const Hashes& h) {
    sql::Stmt ins(db,
                  "INSERT INTO seed_members(name, seq, image_id, provenance, from_candidate, "
                  "reviewer, phash64, pdq256) VALUES (?, ?, ?, ?, ?, ?, ?, ?)");
    ins.bind(1, name)
        .bind(2, seq)
        .bind(3, m.image_id)
        .bind(4, std::string(provenance_name(m.provenance)))
        .bind(5, m.from_candidate)
        .bind(6, m.reviewer)
        .bind(7, h.phash.hex())
        .bind(8, h.pdq.hex())
        .run();
  }

  void store_label(const std::string& id, const ocr::OcrLabel& label) {
    sql::Stmt put(db,
                  "INSERT OR REPLACE INTO labels(image_id, raw, normalized, coverage) "
                  "VALUES (?, ?, ?, ?)");
    put.bind(1, id).bind(2, label.raw).bind(3, label.normalized).bind(4, label.coverage).run();
  }
};

CorpusStore::CorpusStore(const fs::path& root) : impl_(std::make_unique<Impl>(root)) {}
CorpusStore::~CorpusStore() = default;

const fs::path& CorpusStore::root() const { return impl_->root; }

IngestSummary CorpusStore::ingest(const std::vector<ManifestEntry>& entries, std::string job_id,
                                  const IngestHooks& hooks) {
  auto& db = impl_->db;
  if (job_id.empty()) {
    std::string all;
    for (const auto& e : entries) all += e.to_json().dump() + "\n";
    job_id = "ingest-" + sha256_hex({reinterpret_cast<const std::uint8_t*>(all.data()),
                                     all.size()})
                             .substr(0, 16);
  }
  IngestSummary summary;
  summary.job_id = job_id;
  summary.total = static_cast<int>(entries.size());

  struct Journaled {
    std::string status, path;
    std::optional<std::string> code, message, image_id;
  };
  std::map<std::size_t, Journaled> done;
  {
    sql::Stmt j(db,
                "SELECT entry, status, path, error_code, message, image_id FROM journal "
                "WHERE job_id = ?");
    j.bind(1, job_id);
    while (j.step()) {
      done[static_cast<std::size_t>(j.integer(0))] = {j.text(1), j.text(2), j.opt_text(3),
                                                     j.opt_text(4), j.opt_text(5)};
    }
  }
  auto count = [&](const std::string& status) {
    if (status == "ingested") ++summary.ingested;
    if (status == "duplicate") ++summary.duplicates;
    if (status == "failed") ++summary.failed;
  };

  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& entry = entries[i];
    if (const auto it = done.find(i); it != done.end()) {
      ++summary.resumed;
      count(it->second.status);
      summary.image_ids.push_back(it->second.image_id.value_or(""));
      if (it->second.status == "failed") {
        summary.errors.push_back(
            {i, it->second.path,
             parse_error_code(it->second.code.value_or("")).value_or(ErrorCode::kIoError),
             it->second.message.value_or("")});
      }
      continue;
    }

    // Everything that can fail per entry happens before the transaction.
    std::string id, rel;
    Hashes hashes;
    std::optional<IngestError> failure;
    try {
      const auto bytes = read_file(entry.path);
      const auto plane = hashing::decode_image(bytes);
      hashes = {hashing::phash64(plane), hashing::pdqhash256(plane)};
      id = sha256_hex(bytes);
      rel = (fs::path("images") / id.substr(0, 2) / (id + extension_for(bytes))).string();
      const auto dest = impl_->root / rel;
      if (!fs::exists(dest)) write_file_atomic(dest, bytes);
      auto sidecar = entry.ocr_sidecar;
      if (!sidecar && fs::exists(ocr::SidecarProvider::sidecar_for(entry.path))) {
        sidecar = ocr::SidecarProvider::sidecar_for(entry.path);
      }
      if (sidecar) {
        const auto stored = ocr::SidecarProvider::sidecar_for(dest);
        if (!fs::exists(*sidecar)) {
          throw Error(ErrorCode::kMissingImage, "missing OCR sidecar " + sidecar->string());
        }
        if (!fs::exists(stored)) write_file_atomic(stored, read_file(*sidecar));
      }
    } catch (const Error& e) {
      failure = IngestError{i, entry.path.string(), e.code(), e.what()};
    } catch (const std::exception& e) {
      failure = IngestError{i, entry.path.string(), ErrorCode::kIoError, e.what()};
    }

    sql::Transaction tx(db);
    std::string status;
    if (failure) {
      status = "failed";
    } else {
      const bool exists = impl_->images.contains(id);
      status = exists ? "duplicate" : "ingested";
      if (!exists) {
        sql::Stmt ins(db,
                      "INSERT INTO images(image_id, storage_path, phash64, pdq256, pdq_quality, "
                      "ingested_at) VALUES (?, ?, ?, ?, ?, ?)");
        ins.bind(1, id)
            .bind(2, rel)
            .bind(3, hashes.phash.hex())
            .bind(4, hashes.pdq.hex())
            .bind(5, hashes.pdq.quality())
            .bind(6, now_iso8601())
            .run();
      }
      const SourceRef src{entry.post_id, entry.post_text};
      bool known = false;
      int next_seq = 0;
      sql::Stmt q(db, "SELECT seq, post_id, post_text FROM sources WHERE image_id = ?");
      q.bind(1, id);
      while (q.step()) {
        next_seq = std::max(next_seq, static_cast<int>(q.integer(0)) + 1);
        known = known || SourceRef{q.opt_text(1), q.opt_text(2)} == src;
      }
      if (!known) {
        sql::Stmt ins(db,
                      "INSERT INTO sources(image_id, seq, post_id, post_text) VALUES (?, ?, ?, ?)");
        ins.bind(1, id).bind(2, next_seq).bind(3, src.post_id).bind(4, src.post_text).run();
      }
    }
    sql::Stmt j(db,
                "INSERT INTO journal(job_id, entry, status, image_id, path, error_code, message) "
                "VALUES (?, ?, ?, ?, ?, ?, ?)");
    j.bind(1, job_id)
        .bind(2, static_cast<long long>(i))
        .bind(3, status)
        .bind(4, failure ? std::optional<std::string>() : std::optional<std::string>(id))
        .bind(5, entry.path.string())
        .bind(6, failure ? std::optional<std::string>(std::string(error_code_name(failure->code)))
                         : std::nullopt)
        .bind(7, failure ? std::optional<std::string>(failure->message) : std::nullopt)
        .run();
    if (hooks.before_commit) hooks.before_commit(i);
    tx.commit();
    if (status == "ingested") impl_->add_to_memory(id, rel, hashes);
    count(status);
    summary.image_ids.push_back(failure ? std::string() : id);
    if (failure) summary.errors.push_back(*failure);
    if (hooks.after_commit) hooks.after_commit(i);
  }
  return summary;
}

std::size_t CorpusStore::size() const { return impl_->images.size(); }

std::vector<std::string> CorpusStore::image_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, c] : impl_->images) out.push_back(id);
  return out;
}

std::optional<ImageRecord> CorpusStore::record(const std::string& image_id) const {
  auto& db = impl_->db;
  sql::Stmt q(db,
              "SELECT storage_path, phash64, pdq256, pdq_quality, ingested_at FROM images "
              "WHERE image_id = ?");
  q.bind(1, image_id);
  if (!q.step()) return std::nullopt;
  ImageRecord r;
  r.image_id = image_id;
  r.storage_path = impl_->root / q.text(0);
  r.phash64 = PerceptualHash::from_hex(HashKind::kPHash64, q.text(1));
  std::optional<int> quality;
  if (!q.is_null(3)) quality = static_cast<int>(q.integer(3));
  r.pdq256 = pdq_from(q.text(2), quality);
  r.ingested_at = q.text(4);
  sql::Stmt s(db, "SELECT post_id, post_text FROM sources WHERE image_id = ? ORDER BY seq");
  s.bind(1, image_id);
  while (s.step()) r.sources.push_back({s.opt_text(0), s.opt_text(1)});
  sql::Stmt l(db, "SELECT 1 FROM labels WHERE image_id = ?");
  l.bind(1, image_id);
  r.has_label = l.step();
  return r;
}

const index::BinaryIndex& CorpusStore::index(HashKind kind) const {
  return kind == HashKind::kPHash64 ? impl_->phash_index : impl_->pdq_index;
}

bool CorpusStore::reconcile() const {
  sql::Stmt q(impl_->db, "SELECT image_id FROM images ORDER BY image_id");
  std::size_t n = 0;
  while (q.step()) {
    const auto id = q.text(0);
    ++n;
    if (!impl_->images.contains(id) || !impl_->phash_index.contains(id) ||
        !impl_->pdq_index.contains(id)) {
      return false;
    }
  }
  return n == impl_->images.size() && n == impl_->phash_index.size() &&
         n == impl_->pdq_index.size();
}

std::optional<PerceptualHash> CorpusStore::hash_of(const std::string& id, HashKind kind) const {
  const auto it = impl_->images.find(id);
  if (it == impl_->images.end()) return std::nullopt;
  return kind == HashKind::kPHash64 ? it->second.hashes.phash : it->second.hashes.pdq;
}

ocr::ImageSource CorpusStore::load(const std::string& id) const {
  const auto it = impl_->images.find(id);
  if (it == impl_->images.end() || it->second.rel_path.empty()) {
    throw Error(ErrorCode::kMissingImage, "no stored bytes for " + id);
  }
  return ocr::ImageSource::from_file(impl_->root / it->second.rel_path);
}

void CorpusStore::save_label(const std::string& image_id, const ocr::OcrLabel& label) {
  impl_->store_label(image_id, label);
}

std::optional<ocr::OcrLabel> CorpusStore::label(const std::string& image_id) const {
  sql::Stmt q(impl_->db, "SELECT raw, normalized, coverage FROM labels WHERE image_id = ?");
  q.bind(1, image_id);
  if (!q.step()) return std::nullopt;
  ocr::OcrLabel l{q.text(0), q.text(1), std::nullopt};
  if (!q.is_null(2)) l.coverage = q.real(2);
  return l;
}

void CorpusStore::prewarm(ocr::LabelCache& cache) const {
  // Corpus images first, then seed-only members known by their inline hashes.
  sql::Stmt q(impl_->db,
              "SELECT l.raw, l.normalized, l.coverage, i.phash64, i.pdq256 FROM labels l "
              "JOIN images i ON i.image_id = l.image_id "
              "UNION ALL "
              "SELECT l.raw, l.normalized, l.coverage, m.phash64, m.pdq256 FROM labels l "
              "JOIN seed_members m ON m.image_id = l.image_id "
              "WHERE l.image_id NOT IN (SELECT image_id FROM images)");
  while (q.step()) {
    ocr::OcrLabel l{q.text(0), q.text(1), std::nullopt};
    if (!q.is_null(2)) l.coverage = q.real(2);
    cache.put(PerceptualHash::from_hex(HashKind::kPHash64, q.text(3)), l);
    cache.put(PerceptualHash::from_hex(HashKind::kPdq256, q.text(4)), l);
  }
}

void CorpusStore::persist_labels(const ocr::LabelCache& cache) {
  sql::Transaction tx(impl_->db);
  for (const auto& [id, c] : impl_->images) {
    auto l = cache.peek(c.hashes.pdq);
    if (!l) l = cache.peek(c.hashes.phash);
    if (l && label(id) != l) impl_->store_label(id, *l);
  }
  tx.commit();
}

SeedSet CorpusStore::create_seed_set(const std::string& name,
                                     const std::vector<std::string>& image_ids) {
  if (name.empty()) throw Error(ErrorCode::kValidation, "seed set name must not be empty");
  auto& db = impl_->db;
  sql::Transaction tx(db);
  if (impl_->load_seed_set(name)) {
    throw Error(ErrorCode::kConflict, "seed set '" + name + "' exists");
  }
  sql::Stmt ins(db, "INSERT INTO seed_sets(name, version) VALUES (?, 1)");
  ins.bind(1, name).run();
  std::set<std::string> seen;
  int seq = 0;
  for (const auto& id : image_ids) {
    const auto it = impl_->images.find(id);
    if (it == impl_->images.end()) throw Error(ErrorCode::kUnknownImage, "unknown image " + id);
    if (!seen.insert(id).second) continue;
    impl_->insert_member(name, seq++, {id, Provenance::kImported, std::nullopt, std::nullopt},
                         it->second.hashes);
  }
  tx.commit();
  return *impl_->load_seed_set(name);
}

std::optional<SeedSet> CorpusStore::seed_set(const std::string& name) const {
  return impl_->load_seed_set(name);
}

std::vector<std::string> CorpusStore::seed_set_names() const {
  sql::Stmt q(impl_->db, "SELECT name FROM seed_sets ORDER BY name");
  std::vector<std::string> out;
  while (q.step()) out.push_back(q.text(0));
  return out;
}

SeedSet CorpusStore::promote_to_seed(const std::string& name, const std::string& candidate_id,
                                     const std::string& reviewer,
                                     const std::optional<std::string>& from_candidate,
                                     std::optional<int> expected_version) {
  if (reviewer.empty()) throw Error(ErrorCode::kValidation, "reviewer must not be empty");
  auto& db = impl_->db;
  sql::Transaction tx(db);
  const auto set = impl_->load_seed_set(name);
  if (!set) throw Error(ErrorCode::kNotFound, "no seed set '" + name + "'");
  if (expected_version && *expected_version != set->version) {
    throw Error(ErrorCode::kConflict, "seed set '" + name + "' is at version " +
                                          std::to_string(set->version) + ", expected " +
                                          std::to_string(*expected_version));
  }
  const auto it = impl_->images.find(candidate_id);
  if (it == impl_->images.end()) {
    throw Error(ErrorCode::kUnknownImage, "unknown image " + candidate_id);
  }
  if (set->contains(candidate_id)) {
    throw Error(ErrorCode::kAlreadyMember, candidate_id + " is already in '" + name + "'");
  }
  sql::Stmt seq(db, "SELECT COALESCE(MAX(seq) + 1, 0) FROM seed_members WHERE name = ?");
  seq.bind(1, name);
  seq.step();
  impl_->insert_member(name, static_cast<int>(seq.integer(0)),
                       {candidate_id, Provenance::kPromoted, from_candidate, reviewer},
                       it->second.hashes);
  sql::Stmt bump(db, "UPDATE seed_sets SET version = version + 1 WHERE name = ?");
  bump.bind(1, name).run();
  tx.commit();
  return *impl_->load_seed_set(name);
}

nlohmann::json CorpusStore::export_seed_set(const std::string& name) const {
  const auto set = impl_->load_seed_set(name);
  if (!set) throw Error(ErrorCode::kNotFound, "no seed set '" + name + "'");
  nlohmann::json members = nlohmann::json::array();
  sql::Stmt q(impl_->db,
              "SELECT m.image_id, m.provenance, m.from_candidate, m.reviewer, m.phash64, "
              "m.pdq256, l.raw FROM seed_members m LEFT JOIN labels l ON l.image_id = m.image_id "
              "WHERE m.name = ? ORDER BY m.seq");
  q.bind(1, name);
  while (q.step()) {
    nlohmann::json m = {{"image_id", q.text(0)},
                        {"provenance", q.text(1)},
                        {"phash64", q.text(4)},
                        {"pdq256", q.text(5)}};
    if (auto v = q.opt_text(2)) m["from_candidate"] = *v;
    if (auto v = q.opt_text(3)) m["reviewer"] = *v;
    if (auto v = q.opt_text(6)) m["ocr_text"] = *v;
    members.push_back(std::move(m));
  }
  return {{"schema_version", kSeedExportVersion},
          {"name", set->name},
          {"version", set->version},
          {"members", members}};
}

SeedSet CorpusStore::import_seed_set(const nlohmann::json& exported) {
  std::string name;
  struct Incoming {
    SeedMember member;
    Hashes hashes;
    std::optional<std::string> ocr_text;
  };
  std::vector<Incoming> incoming;
  try {
    if (exported.at("schema_version").get<int>() != kSeedExportVersion) {
      throw Error(ErrorCode::kVersionMismatch, "unsupported seed export version");
    }
    name = exported.at("name").get<std::string>();
    for (const auto& m : exported.at("members")) {
      Incoming in;
      in.member.image_id = m.at("image_id").get<std::string>();
      in.member.provenance = parse_provenance(m.at("provenance").get<std::string>());
      if (m.contains("from_candidate")) in.member.from_candidate = m["from_candidate"].get<std::string>();
      if (m.contains("reviewer")) in.member.reviewer = m["reviewer"].get<std::string>();
      in.hashes = {PerceptualHash::from_hex(HashKind::kPHash64, m.at("phash64").get<std::string>()),
                   PerceptualHash::from_hex(HashKind::kPdq256, m.at("pdq256").get<std::string>())};
      if (m.contains("ocr_text")) in.ocr_text = m["ocr_text"].get<std::string>();
      incoming.push_back(std::move(in));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kValidation, std::string("bad seed export: ") + e.what());
  }
  if (name.empty()) throw Error(ErrorCode::kValidation, "seed set name must not be empty");

  auto& db = impl_->db;
  sql::Transaction tx(db);
  if (impl_->load_seed_set(name)) {
    throw Error(ErrorCode::kConflict, "seed set '" + name + "' exists");
  }
  sql::Stmt ins(db, "INSERT INTO seed_sets(name, version) VALUES (?, 1)");
  ins.bind(1, name).run();
  int seq = 0;
  for (const auto& in : incoming) {
    const auto it = impl_->images.find(in.member.image_id);
    if (it != impl_->images.end() && !(it->second.hashes.phash == in.hashes.phash &&
                                       it->second.hashes.pdq == in.hashes.pdq)) {
      throw Error(ErrorCode::kValidation,
                  "hashes of " + in.member.image_id + " differ from the stored image");
    }
    impl_->insert_member(name, seq++, in.member, in.hashes);
    if (in.ocr_text && !label(in.member.image_id)) {
      impl_->store_label(in.member.image_id,
                         {*in.ocr_text, ocr::normalize(*in.ocr_text), std::nullopt});
    }
  }
  tx.commit();
  return *impl_->load_seed_set(name);
}

std::vector<pipeline::Seed> CorpusStore::seeds_of(const std::string& name, HashKind kind) const {
  if (!impl_->load_seed_set(name)) throw Error(ErrorCode::kNotFound, "no seed set '" + name + "'");
  sql::Stmt q(impl_->db,
              "SELECT image_id, phash64, pdq256 FROM seed_members WHERE name = ? ORDER BY seq");
  q.bind(1, name);
  std::vector<pipeline::Seed> out;
  while (q.step()) {
    const auto id = q.text(0);
    const auto hash = PerceptualHash::from_hex(kind, q.text(kind == HashKind::kPHash64 ? 1 : 2));
    out.push_back({id, hash, [this, id] { return load(id); }});
  }
  return out;
}

}  // namespace pixelmod::store
