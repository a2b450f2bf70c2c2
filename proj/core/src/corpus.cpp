#include "longctx/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "longctx/util.hpp"

namespace longctx {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Genre g) { return g == Genre::Fiction ? "fiction" : "nonfiction"; }
std::string to_string(Continuity c) {
  return c == Continuity::Continuous ? "continuous" : "discontinuous";
}
std::string to_string(Authorship a) { return a == Authorship::Single ? "single" : "various"; }

const Document* Corpus::find(const std::string& doc_id) const {
  auto it = std::lower_bound(documents.begin(), documents.end(), doc_id,
                             [](const Document& d, const std::string& id) { return d.doc_id < id; });
  if (it == documents.end() || it->doc_id != doc_id) return nullptr;
  return &*it;
}

namespace {

Genre parse_genre(const std::string& s) {
  if (s == "fiction") return Genre::Fiction;
  if (s == "nonfiction") return Genre::Nonfiction;
  throw std::runtime_error("metadata: bad genre value '" + s + "'");
}

Continuity parse_continuity(const std::string& s) {
  if (s == "continuous") return Continuity::Continuous;
  if (s == "discontinuous") return Continuity::Discontinuous;
  throw std::runtime_error("metadata: bad continuity value '" + s + "'");
}

Authorship parse_authorship(const std::string& s) {
  if (s == "single") return Authorship::Single;
  if (s == "various") return Authorship::Various;
  throw std::runtime_error("metadata: bad authorship value '" + s + "'");
}

std::unordered_map<std::string, BookLabels> load_metadata(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_corpus: cannot open metadata file " + path);
  std::unordered_map<std::string, BookLabels> labels;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("metadata line " + std::to_string(line_no) + ": " + e.what());
    }
    std::string doc_id = j.at("doc_id").get<std::string>();
    if (labels.count(doc_id) != 0)
      throw std::runtime_error("metadata: duplicate doc_id '" + doc_id + "'");
    BookLabels l;
    l.genre = parse_genre(j.at("genre").get<std::string>());
    l.continuity = parse_continuity(j.at("continuity").get<std::string>());
    l.authorship = parse_authorship(j.at("authorship").get<std::string>());
    labels.emplace(std::move(doc_id), l);
  }
  return labels;
}

}  // namespace

Corpus load_corpus(const std::string& directory_path, const std::string& metadata_path) {
  if (!fs::is_directory(directory_path))
    throw std::runtime_error("load_corpus: not a directory: " + directory_path);

  Corpus corpus;
  for (const auto& entry : fs::directory_iterator(directory_path)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    Document doc;
    doc.doc_id = entry.path().stem().string();
    std::ifstream in(entry.path(), std::ios::binary);
    if (!in) throw std::runtime_error("load_corpus: unreadable file " + entry.path().string());
    std::ostringstream ss;
    ss << in.rdbuf();
    doc.text = ss.str();
    if (doc.text.empty())
      throw std::runtime_error("load_corpus: empty document " + entry.path().string());
    corpus.documents.push_back(std::move(doc));
  }
  if (corpus.documents.empty())
    throw std::runtime_error("load_corpus: no .txt documents in " + directory_path);
  std::sort(corpus.documents.begin(), corpus.documents.end(),
            [](const Document& a, const Document& b) { return a.doc_id < b.doc_id; });
  for (size_t i = 1; i < corpus.documents.size(); ++i)
    if (corpus.documents[i].doc_id == corpus.documents[i - 1].doc_id)
      throw std::runtime_error("load_corpus: duplicate doc_id '" + corpus.documents[i].doc_id + "'");

  if (!metadata_path.empty()) {
    auto labels = load_metadata(metadata_path);
    std::unordered_set<std::string> known;
    for (Document& doc : corpus.documents) {
      auto it = labels.find(doc.doc_id);
      if (it == labels.end())
        throw std::runtime_error("load_corpus: metadata missing label for doc_id '" +
                                 doc.doc_id + "'");
      doc.labels = it->second;
      known.insert(doc.doc_id);
    }
    for (const auto& [doc_id, _] : labels)
      if (known.count(doc_id) == 0)
        throw std::runtime_error("load_corpus: metadata references unknown document '" + doc_id +
                                 "'");
  }
  return corpus;
}

std::vector<TargetWindow> sample_targets(const Corpus& corpus,
                                         const std::vector<TokenSequence>& tokenized,
                                         int prefix_len, int n_targets, int exclude_last,
                                         int total, uint64_t seed) {
  if (tokenized.size() != corpus.documents.size())
    throw std::invalid_argument("sample_targets: tokenized size does not match corpus");
  if (total < 1) throw std::invalid_argument("sample_targets: total must be >= 1");
  if (prefix_len < 1 || n_targets < 1 || exclude_last < 0)
    throw std::invalid_argument("sample_targets: bad window shape");

  struct Eligible {
    size_t doc_index;
    int64_t n_tokens;
    int64_t n_anchors;  // valid anchors: prefix_len <= anchor <= len - n_targets - exclude_last
  };
  std::vector<Eligible> eligible;
  int64_t total_tokens = 0;
  const int64_t min_len =
      static_cast<int64_t>(prefix_len) + n_targets + exclude_last;
  for (size_t d = 0; d < corpus.documents.size(); ++d) {
    const int64_t len = static_cast<int64_t>(tokenized[d].size());
    if (len < min_len) {
      std::cerr << "sample_targets: skipping '" << corpus.documents[d].doc_id << "' (" << len
                << " tokens < " << min_len << " required)\n";
      continue;
    }
    eligible.push_back({d, len, len - min_len + 1});
    total_tokens += len;
  }
  if (eligible.empty())
    throw std::runtime_error("sample_targets: no document has at least " +
                             std::to_string(min_len) + " tokens");

  // Largest-remainder apportionment of `total` over token counts.
  struct Share {
    size_t idx;  // into eligible
    int64_t count;
    double remainder;
  };
  std::vector<Share> shares(eligible.size());
  int64_t assigned = 0;
  for (size_t i = 0; i < eligible.size(); ++i) {
    double exact = static_cast<double>(total) * static_cast<double>(eligible[i].n_tokens) /
                   static_cast<double>(total_tokens);
    int64_t floor_count = static_cast<int64_t>(exact);
    shares[i] = {i, floor_count, exact - static_cast<double>(floor_count)};
    assigned += floor_count;
  }
  std::vector<size_t> by_remainder(eligible.size());
  for (size_t i = 0; i < by_remainder.size(); ++i) by_remainder[i] = i;
  std::sort(by_remainder.begin(), by_remainder.end(), [&](size_t a, size_t b) {
    if (shares[a].remainder != shares[b].remainder)
      return shares[a].remainder > shares[b].remainder;
    return a < b;  // ties: document order
  });
  for (size_t r = 0; assigned < total; ++r, ++assigned)
    shares[by_remainder[r % by_remainder.size()]].count += 1;

  int64_t capacity = 0;
  for (const Eligible& e : eligible) capacity += e.n_anchors;
  if (total > capacity)
    throw std::runtime_error("sample_targets: requested " + std::to_string(total) +
                             " windows but only " + std::to_string(capacity) +
                             " valid anchor positions exist");

  std::vector<TargetWindow> windows;
  windows.reserve(static_cast<size_t>(total));
  for (size_t i = 0; i < eligible.size(); ++i) {
    const Eligible& e = eligible[i];
    const int64_t want = shares[i].count;
    if (want == 0) continue;
    if (want > e.n_anchors)
      throw std::runtime_error("sample_targets: document '" +
                               corpus.documents[e.doc_index].doc_id + "' owes " +
                               std::to_string(want) + " windows but has only " +
                               std::to_string(e.n_anchors) + " valid anchors");
    // Partial Fisher-Yates over the anchor range, seeded per document so other
    // documents' draws are unaffected by corpus membership changes.
    Rng rng(derive_seed(seed, corpus.documents[e.doc_index].doc_id, 0, 0));
    std::vector<int64_t> anchors(static_cast<size_t>(e.n_anchors));
    for (int64_t a = 0; a < e.n_anchors; ++a)
      anchors[static_cast<size_t>(a)] = prefix_len + a;
    for (int64_t j = 0; j < want; ++j) {
      int64_t pick = j + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(e.n_anchors - j)));
      std::swap(anchors[static_cast<size_t>(j)], anchors[static_cast<size_t>(pick)]);
    }
    anchors.resize(static_cast<size_t>(want));
    std::sort(anchors.begin(), anchors.end());
    for (int64_t a : anchors)
      windows.push_back({corpus.documents[e.doc_index].doc_id, a, prefix_len, n_targets,
                         exclude_last});
  }
  return windows;
}

}  // namespace longctx
