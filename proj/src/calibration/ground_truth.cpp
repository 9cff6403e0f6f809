#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "pixelmod/calibration.hpp"
#include "pixelmod/error.hpp"

namespace pixelmod::calibration {
namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

void GroundTruthSet::validate() const {
  std::set<std::pair<std::string, std::string>> seen;
  bool positive = false, negative = false;
  for (const auto& e : entries) {
    if (!seen.emplace(e.query_id, e.candidate_id).second) {
      throw Error(ErrorCode::kValidation,
                  "duplicate ground-truth pair " + e.query_id + "," + e.candidate_id);
    }
    (e.relevant ? positive : negative) = true;
  }
  if (!positive || !negative) {
    throw Error(ErrorCode::kValidation,
                "ground truth needs at least one relevant and one irrelevant pair");
  }
}

std::vector<std::string> GroundTruthSet::query_ids() const {
  std::set<std::string> ids;
  for (const auto& e : entries) ids.insert(e.query_id);
  return {ids.begin(), ids.end()};
}

GroundTruthSet GroundTruthSet::read_csv(std::istream& in) {
  GroundTruthSet gt;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, ',');) cols.push_back(trim(col));
    if (line_no == 1 && !cols.empty() && cols[0] == "query_id") continue;
    if (cols.size() != 3) {
      throw Error(ErrorCode::kValidation,
                  "ground truth line " + std::to_string(line_no) + ": expected 3 columns");
    }
    const auto& flag = cols[2];
    bool relevant;
    if (flag == "1" || flag == "true") {
      relevant = true;
    } else if (flag == "0" || flag == "false") {
      relevant = false;
    } else {
      throw Error(ErrorCode::kValidation,
                  "ground truth line " + std::to_string(line_no) + ": bad is_relevant '" +
                      flag + "'");
    }
    gt.entries.push_back({cols[0], cols[1], relevant});
  }
  return gt;
}

GroundTruthSet GroundTruthSet::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  auto gt = read_csv(in);
  gt.provenance = path.string();
  return gt;
}

void GroundTruthSet::write_csv(std::ostream& out) const {
  out << "query_id,candidate_id,is_relevant\n";
  for (const auto& e : entries) {
    out << e.query_id << ',' << e.candidate_id << ',' << (e.relevant ? 1 : 0) << '\n';
  }
}

EvalScores EvalScores::from_counts(int tp, int fp, int fn) {
  EvalScores s;
  s.tp = tp;
  s.fp = fp;
  s.fn = fn;
  s.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  s.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  s.f1 = s.precision + s.recall > 0
             ? 2 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

nlohmann::json EvalScores::to_json() const {
  return {{"precision", precision}, {"recall", recall}, {"f1", f1},
          {"tp", tp},               {"fp", fp},         {"fn", fn}};
}

}  // namespace pixelmod::calibration
