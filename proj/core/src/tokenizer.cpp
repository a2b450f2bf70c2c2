#include "longctx/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "longctx/corpus.hpp"
#include "longctx/util.hpp"

namespace longctx {

namespace {

bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

bool is_word_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c >= 0x80;
}

uint64_t pair_key(int a, int b) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) | static_cast<uint32_t>(b);
}

std::string hex_encode(std::string_view bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 0xf]);
  }
  return out;
}

std::string hex_decode(std::string_view hex) {
  if (hex.size() % 2 != 0) throw std::runtime_error("vocab file: odd-length hex field");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw std::runtime_error("vocab file: bad hex digit");
  };
  std::string out;
  out.reserve(hex.size() / 2);
  for (size_t i = 0; i < hex.size(); i += 2)
    out.push_back(static_cast<char>((nibble(hex[i]) << 4) | nibble(hex[i + 1])));
  return out;
}

// Applies one merge to a symbol string, left to right, non-overlapping.
void apply_merge(std::vector<int>& syms, int left, int right, int merged_id) {
  size_t w = 0;
  for (size_t r = 0; r < syms.size();) {
    if (r + 1 < syms.size() && syms[r] == left && syms[r + 1] == right) {
      syms[w++] = merged_id;
      r += 2;
    } else {
      syms[w++] = syms[r++];
    }
  }
  syms.resize(w);
}

std::vector<int> bpe_encode_segment(const Vocab& vocab, std::string_view segment) {
  std::vector<int> syms;
  syms.reserve(segment.size());
  for (unsigned char c : segment) syms.push_back(c);
  while (syms.size() >= 2) {
    int best_rank = -1;
    int best_pos = -1;
    for (size_t i = 0; i + 1 < syms.size(); ++i) {
      int rank = vocab.merge_rank(syms[i], syms[i + 1]);
      if (rank >= 0 && (best_rank < 0 || rank < best_rank)) {
        best_rank = rank;
        best_pos = static_cast<int>(i);
      }
    }
    if (best_rank < 0) break;
    (void)best_pos;
    apply_merge(syms, vocab.merges[static_cast<size_t>(best_rank)].first,
                vocab.merges[static_cast<size_t>(best_rank)].second,
                Vocab::kNumBaseTypes + best_rank);
  }
  return syms;
}

}  // namespace

int Vocab::merge_rank(int left, int right) const {
  auto it = pair_rank_.find(pair_key(left, right));
  return it == pair_rank_.end() ? -1 : it->second;
}

void Vocab::rebuild_index() {
  pair_rank_.clear();
  for (size_t r = 0; r < merges.size(); ++r)
    pair_rank_[pair_key(merges[r].first, merges[r].second)] = static_cast<int>(r);
  token_to_id.clear();
  for (int id = 0; id < vocab_size; ++id)
    if (id != pad_id) token_to_id[id_to_token[static_cast<size_t>(id)]] = id;
}

std::vector<std::string> pretokenize(std::string_view text) {
  std::vector<std::string> segments;
  size_t i = 0;
  while (i < text.size()) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    size_t start = i;
    if (is_space_byte(c)) {
      while (i < text.size() && is_space_byte(static_cast<unsigned char>(text[i]))) ++i;
    } else if (is_word_byte(c)) {
      while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
    } else {
      ++i;  // punctuation: one byte per segment
    }
    segments.emplace_back(text.substr(start, i - start));
  }
  return segments;
}

Vocab train_bpe(const Corpus& corpus, int vocab_size) {
  if (vocab_size < Vocab::kNumBaseTypes)
    throw std::invalid_argument("train_bpe: vocab_size must be at least " +
                                std::to_string(Vocab::kNumBaseTypes) +
                                " (256 byte types plus pad)");
  if (corpus.documents.empty()) throw std::invalid_argument("train_bpe: empty corpus");

  Vocab vocab;
  vocab.vocab_size = vocab_size;
  vocab.pad_id = 256;
  vocab.id_to_token.resize(static_cast<size_t>(vocab_size));
  for (int b = 0; b < 256; ++b) vocab.id_to_token[static_cast<size_t>(b)] = std::string(1, static_cast<char>(b));
  vocab.id_to_token[256] = "";  // pad

  // Unique segments with corpus counts; ordered map keeps iteration stable.
  std::map<std::string, int64_t> seg_counts;
  for (const Document& doc : corpus.documents)
    for (const std::string& seg : pretokenize(doc.text)) seg_counts[seg] += 1;

  struct Seg {
    std::vector<int> syms;
    int64_t count;
  };
  std::vector<Seg> segs;
  segs.reserve(seg_counts.size());
  for (const auto& [text, count] : seg_counts) {
    Seg s;
    s.count = count;
    s.syms.reserve(text.size());
    for (unsigned char c : text) s.syms.push_back(c);
    segs.push_back(std::move(s));
  }

  std::unordered_map<std::string, int> token_ids;
  for (int b = 0; b < 256; ++b) token_ids[std::string(1, static_cast<char>(b))] = b;

  const int n_merges = vocab_size - Vocab::kNumBaseTypes;
  for (int m = 0; m < n_merges; ++m) {
    std::unordered_map<uint64_t, int64_t> pair_counts;
    for (const Seg& s : segs) {
      if (s.syms.size() < 2) continue;
      for (size_t i = 0; i + 1 < s.syms.size(); ++i)
        pair_counts[pair_key(s.syms[i], s.syms[i + 1])] += s.count;
    }
    // Best pair by count; ties go to the lexicographically smaller
    // (left bytes, right bytes). Pairs whose concatenation collides with an
    // existing token are skipped so token<->id stays bijective.
    int64_t best_count = 0;
    int best_left = -1, best_right = -1;
    std::string best_bytes_l, best_bytes_r;
    for (const auto& [key, count] : pair_counts) {
      int left = static_cast<int>(key >> 32);
      int right = static_cast<int>(key & 0xffffffffu);
      const std::string& bl = vocab.id_to_token[static_cast<size_t>(left)];
      const std::string& br = vocab.id_to_token[static_cast<size_t>(right)];
      if (token_ids.count(bl + br) != 0) continue;
      bool better = count > best_count;
      if (count == best_count && best_left >= 0)
        better = std::tie(bl, br) < std::tie(best_bytes_l, best_bytes_r);
      if (better) {
        best_count = count;
        best_left = left;
        best_right = right;
        best_bytes_l = bl;
        best_bytes_r = br;
      }
    }
    if (best_left < 0)
      throw std::runtime_error("train_bpe: corpus exhausted after " + std::to_string(m) +
                               " merges; vocab_size " + std::to_string(vocab_size) +
                               " is not reachable");
    const int new_id = Vocab::kNumBaseTypes + m;
    vocab.merges.emplace_back(best_left, best_right);
    vocab.id_to_token[static_cast<size_t>(new_id)] = best_bytes_l + best_bytes_r;
    token_ids[best_bytes_l + best_bytes_r] = new_id;
    for (Seg& s : segs) apply_merge(s.syms, best_left, best_right, new_id);
  }

  vocab.rebuild_index();
  return vocab;
}

TokenSequence encode(const Vocab& vocab, std::string_view text) {
  TokenSequence out;
  std::unordered_map<std::string, std::vector<int>> cache;
  size_t i = 0;
  while (i < text.size()) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    size_t start = i;
    if (is_space_byte(c)) {
      while (i < text.size() && is_space_byte(static_cast<unsigned char>(text[i]))) ++i;
    } else if (is_word_byte(c)) {
      while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
    } else {
      ++i;
    }
    std::string seg(text.substr(start, i - start));
    auto it = cache.find(seg);
    if (it == cache.end()) it = cache.emplace(seg, bpe_encode_segment(vocab, seg)).first;
    const std::vector<int>& syms = it->second;
    for (size_t t = 0; t < syms.size(); ++t) {
      out.ids.push_back(syms[t]);
      if (syms.size() == 1)
        out.cluster_pos.push_back(ClusterPos::Singleton);
      else
        out.cluster_pos.push_back(t == 0 ? ClusterPos::FirstOfCluster : ClusterPos::Interior);
    }
  }
  return out;
}

std::string decode(const Vocab& vocab, const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= vocab.vocab_size)
      throw std::out_of_range("decode: unknown token id " + std::to_string(id));
    if (id == vocab.pad_id) continue;  // pad carries no text
    out += vocab.id_to_token[static_cast<size_t>(id)];
  }
  return out;
}

FrequencyTable frequency_table(const std::vector<TokenSequence>& corpus_tokens,
                               const Vocab& vocab) {
  if (corpus_tokens.empty()) throw std::invalid_argument("frequency_table: empty input");
  FrequencyTable table;
  table.counts.assign(static_cast<size_t>(vocab.vocab_size), 0);
  for (const TokenSequence& seq : corpus_tokens)
    for (int id : seq.ids) {
      if (id < 0 || id >= vocab.vocab_size)
        throw std::out_of_range("frequency_table: unknown token id " + std::to_string(id));
      table.counts[static_cast<size_t>(id)] += 1;
    }

  table.frequent_size =
      static_cast<int>(std::ceil(0.10 * static_cast<double>(vocab.vocab_size)));
  std::vector<int> order;
  order.reserve(static_cast<size_t>(vocab.vocab_size));
  for (int id = 0; id < vocab.vocab_size; ++id)
    if (id != vocab.pad_id) order.push_back(id);  // pad never occurs in text
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (table.counts[static_cast<size_t>(a)] != table.counts[static_cast<size_t>(b)])
      return table.counts[static_cast<size_t>(a)] > table.counts[static_cast<size_t>(b)];
    return a < b;
  });
  table.is_frequent.assign(static_cast<size_t>(vocab.vocab_size), 0);
  for (int r = 0; r < table.frequent_size && r < static_cast<int>(order.size()); ++r)
    table.is_frequent[static_cast<size_t>(order[static_cast<size_t>(r)])] = 1;
  return table;
}

std::string save_vocab(const Vocab& vocab) {
  std::ostringstream out;
  out << "longctx-vocab v1 " << vocab.vocab_size << ' ' << vocab.merges.size() << ' '
      << vocab.pad_id << '\n';
  for (const auto& [l, r] : vocab.merges)
    out << "m " << hex_encode(vocab.id_to_token[static_cast<size_t>(l)]) << ' '
        << hex_encode(vocab.id_to_token[static_cast<size_t>(r)]) << '\n';
  for (int id = 0; id < vocab.vocab_size; ++id) {
    if (id == vocab.pad_id)
      out << "t " << id << " <pad>\n";
    else
      out << "t " << id << ' ' << hex_encode(vocab.id_to_token[static_cast<size_t>(id)]) << '\n';
  }
  return out.str();
}

Vocab load_vocab(std::string_view serialized) {
  std::istringstream in{std::string(serialized)};
  std::string tag, version;
  int vocab_size = 0, pad_id = -1;
  size_t n_merges = 0;
  if (!(in >> tag >> version >> vocab_size >> n_merges >> pad_id) || tag != "longctx-vocab" ||
      version != "v1")
    throw std::runtime_error("load_vocab: bad header");
  Vocab vocab;
  vocab.vocab_size = vocab_size;
  vocab.pad_id = pad_id;
  vocab.id_to_token.assign(static_cast<size_t>(vocab_size), "");

  std::unordered_map<std::string, int> token_ids;
  std::vector<std::pair<std::string, std::string>> merge_bytes;
  for (size_t m = 0; m < n_merges; ++m) {
    std::string line_tag, l, r;
    if (!(in >> line_tag >> l >> r) || line_tag != "m")
      throw std::runtime_error("load_vocab: bad merge line");
    merge_bytes.emplace_back(hex_decode(l), hex_decode(r));
  }
  for (int i = 0; i < vocab_size; ++i) {
    std::string line_tag, field;
    int id = 0;
    if (!(in >> line_tag >> id >> field) || line_tag != "t" || id != i)
      throw std::runtime_error("load_vocab: bad token line");
    if (field == "<pad>") {
      if (id != pad_id) throw std::runtime_error("load_vocab: <pad> at wrong id");
      continue;
    }
    vocab.id_to_token[static_cast<size_t>(id)] = hex_decode(field);
    token_ids[vocab.id_to_token[static_cast<size_t>(id)]] = id;
  }
  for (const auto& [l, r] : merge_bytes) {
    auto li = token_ids.find(l);
    auto ri = token_ids.find(r);
    if (li == token_ids.end() || ri == token_ids.end())
      throw std::runtime_error("load_vocab: merge references unknown token");
    vocab.merges.emplace_back(li->second, ri->second);
  }
  vocab.rebuild_index();
  return vocab;
}

void save_vocab_file(const Vocab& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_vocab_file: cannot open " + path);
  out << save_vocab(vocab);
}

Vocab load_vocab_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_vocab_file: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_vocab(ss.str());
}

std::string vocab_hash(const Vocab& vocab) { return to_hex(fnv1a64(save_vocab(vocab))); }

}  // namespace longctx
