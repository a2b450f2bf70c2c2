#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace longctx {

struct Corpus;

// Position of a token within the run of subword tokens spelling one source
// word ("Trocadero" -> Tro/cade/ro gives FirstOfCluster, Interior, Interior).
enum class ClusterPos : uint8_t { FirstOfCluster, Interior, Singleton };

struct TokenSequence {
  std::vector<int> ids;
  std::vector<ClusterPos> cluster_pos;

  size_t size() const { return ids.size(); }
};

// Byte-pair vocabulary. Ids 0..255 are raw bytes, id 256 is the reserved pad
// token (never produced by encode), ids 257+ are merges in training order.
struct Vocab {
  std::vector<std::pair<int, int>> merges;
  std::vector<std::string> id_to_token;  // pad maps to the empty string
  std::unordered_map<std::string, int> token_to_id;
  int pad_id = 256;
  int vocab_size = 0;

  static constexpr int kNumBaseTypes = 257;  // 256 bytes + pad

  int merge_rank(int left, int right) const;
  void rebuild_index();

 private:
  std::unordered_map<uint64_t, int> pair_rank_;
};

struct FrequencyTable {
  std::vector<int64_t> counts;       // indexed by token id
  std::vector<uint8_t> is_frequent;  // indexed by token id
  int frequent_size = 0;             // == ceil(0.10 * vocab_size)

  bool frequent(int id) const { return is_frequent[static_cast<size_t>(id)] != 0; }
};

// Deterministic BPE training: byte-level base alphabet, pair counts over
// whitespace/word/punctuation segments, ties broken by lexicographically
// smaller (left, right) byte strings. vocab_size counts pad and the 256 byte
// types, so vocab_size - 257 merges are learned.
Vocab train_bpe(const Corpus& corpus, int vocab_size);

TokenSequence encode(const Vocab& vocab, std::string_view text);
std::string decode(const Vocab& vocab, const std::vector<int>& ids);

FrequencyTable frequency_table(const std::vector<TokenSequence>& corpus_tokens,
                               const Vocab& vocab);

// Text serialization: a header line, one merge per line, then one id/token
// pair per line. Symbols are hex-encoded; the format is golden-tested.
std::string save_vocab(const Vocab& vocab);
Vocab load_vocab(std::string_view serialized);
void save_vocab_file(const Vocab& vocab, const std::string& path);
Vocab load_vocab_file(const std::string& path);

// Hash of the serialized vocab, used to pair checkpoints with vocabularies.
std::string vocab_hash(const Vocab& vocab);

// Pre-tokenization segments: maximal whitespace runs, maximal word-byte runs
// (alphanumeric or >= 0x80), and single punctuation bytes. Exposed for tests.
std::vector<std::string> pretokenize(std::string_view text);

}  // namespace longctx
