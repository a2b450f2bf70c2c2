#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "longctx/tokenizer.hpp"

namespace longctx {

enum class Genre : uint8_t { Fiction, Nonfiction };
enum class Continuity : uint8_t { Continuous, Discontinuous };
enum class Authorship : uint8_t { Single, Various };

struct BookLabels {
  Genre genre = Genre::Fiction;
  Continuity continuity = Continuity::Continuous;
  Authorship authorship = Authorship::Single;
};

struct Document {
  std::string doc_id;
  std::string text;
  std::optional<BookLabels> labels;
};

struct Corpus {
  std::vector<Document> documents;  // ordered by doc_id

  const Document* find(const std::string& doc_id) const;
};

// One evaluation site: `anchor` is the index of the first target token, the
// prefix is tokens [anchor - prefix_len, anchor), the targets are tokens
// [anchor, anchor + n_targets), and at least exclude_last tokens remain
// between the last target and the end of the document.
struct TargetWindow {
  std::string doc_id;
  int64_t anchor = 0;
  int prefix_len = 0;
  int n_targets = 0;
  int exclude_last = 0;
};

// Reads one UTF-8 .txt file per document (doc_id = filename stem) plus an
// optional JSONL metadata file with doc_id/genre/continuity/authorship.
Corpus load_corpus(const std::string& directory_path, const std::string& metadata_path = "");

// Samples M target windows with per-document counts apportioned to token
// counts by largest remainder, anchors uniform without replacement.
// Documents shorter than prefix_len + n_targets + exclude_last are skipped.
std::vector<TargetWindow> sample_targets(const Corpus& corpus,
                                         const std::vector<TokenSequence>& tokenized,
                                         int prefix_len, int n_targets, int exclude_last,
                                         int total, uint64_t seed);

std::string to_string(Genre g);
std::string to_string(Continuity c);
std::string to_string(Authorship a);

}  // namespace longctx
