#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "longctx/probes.hpp"
#include "longctx/trainer.hpp"
#include "longctx/util.hpp"
#include "test_util.hpp"

using namespace longctx;

namespace {

Vocab char_vocab() {
  Vocab v;
  v.vocab_size = Vocab::kNumBaseTypes;
  v.pad_id = 256;
  v.id_to_token.assign(static_cast<size_t>(v.vocab_size), "");
  for (int b = 0; b < 256; ++b) v.id_to_token[static_cast<size_t>(b)] = std::string(1, static_cast<char>(b));
  v.rebuild_index();
  return v;
}

std::string random_sentence_text(Rng& rng, int n_sentences) {
  std::string text;
  for (int s = 0; s < n_sentences; ++s) {
    const int words = 2 + static_cast<int>(rng.next_below(5));
    for (int w = 0; w < words; ++w) {
      const int len = 2 + static_cast<int>(rng.next_below(5));
      for (int c = 0; c < len; ++c)
        text.push_back(static_cast<char>('a' + rng.next_below(26)));
      if (w + 1 < words) text.push_back(' ');
    }
    text.push_back('.');
    if (s + 1 < n_sentences) text.push_back(' ');
  }
  return text;
}

TokenizedCorpus sentence_corpus(const Vocab& vocab, uint64_t seed, int docs, int sentences) {
  Rng rng(seed);
  TokenizedCorpus corpus;
  for (int d = 0; d < docs; ++d) {
    TokenizedDoc doc;
    doc.doc_id = "doc" + std::to_string(d);
    doc.tokens = encode(vocab, random_sentence_text(rng, sentences));
    corpus.docs.push_back(std::move(doc));
  }
  std::sort(corpus.docs.begin(), corpus.docs.end(),
            [](const TokenizedDoc& a, const TokenizedDoc& b) { return a.doc_id < b.doc_id; });
  return corpus;
}

// Constant scorer: every candidate ties.
class ConstantScorer : public SequenceScorer {
 public:
  double sequence_nll(std::span<const int>, std::span<const int>) const override { return 1.0; }
};

// Oracle: the gold suffix is exactly the candidate that continues the
// prefix in the document's token buffer.
class GoldContinuationScorer : public SequenceScorer {
 public:
  double sequence_nll(std::span<const int> prefix,
                      std::span<const int> candidate) const override {
    return candidate.data() == prefix.data() + prefix.size() ? 0.0 : 1.0;
  }
};

// Exchangeable random scorer: independent uniform score per call position,
// derived from the candidate content so it is deterministic.
class RandomScorer : public SequenceScorer {
 public:
  explicit RandomScorer(uint64_t seed) : seed_(seed) {}
  double sequence_nll(std::span<const int> prefix, std::span<const int> candidate) const override {
    uint64_t h = seed_;
    h = mix64(h ^ static_cast<uint64_t>(reinterpret_cast<uintptr_t>(candidate.data())));
    h = mix64(h ^ candidate.size() ^ (prefix.size() << 20));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

 private:
  uint64_t seed_;
};

}  // namespace

TEST_CASE("sentence_starts finds boundaries after full stops") {
  Vocab vocab = char_vocab();
  TokenizedDoc doc;
  doc.doc_id = "d";
  doc.tokens = encode(vocab, "ab cd. ef gh! ij? kl.mn");
  std::vector<int64_t> starts = sentence_starts(doc, vocab);
  // Each boundary is the token right after ./!/?; the final '.' has no
  // following token. "kl.mn": '.' followed by word start also counts.
  const std::string text = "ab cd. ef gh! ij? kl.mn";
  for (int64_t s : starts) {
    REQUIRE(s > 0);
    const char before = text[static_cast<size_t>(s) - 1];
    CHECK((before == '.' || before == '!' || before == '?'));
  }
  CHECK(starts.size() == 4);
}

TEST_CASE("build_suffix_task invariants hold on every example") {
  Vocab vocab = char_vocab();
  TokenizedCorpus corpus = sentence_corpus(vocab, 11, 4, 60);
  const int prefix_len = 40, suffix_len = 12, n_neg = 5;
  std::vector<SuffixExample> task =
      build_suffix_task(corpus, vocab, prefix_len, suffix_len, n_neg, 150, 9);
  REQUIRE(task.size() == 150);
  for (const SuffixExample& ex : task) {
    const TokenizedDoc& doc = corpus.require(ex.doc_id);
    std::vector<int64_t> starts = sentence_starts(doc, vocab);
    std::set<int64_t> start_set(starts.begin(), starts.end());
    // Gold follows the prefix immediately; both spans have the right sizes.
    CHECK(ex.prefix_span.second == ex.gold_span.first);
    CHECK(ex.prefix_span.second - ex.prefix_span.first == prefix_len);
    CHECK(ex.gold_span.second - ex.gold_span.first == suffix_len);
    CHECK(start_set.count(ex.gold_span.first) == 1);
    CHECK(ex.negatives.size() == n_neg);
    std::set<int64_t> seen;
    for (const TokenSpan& s : ex.negatives) {
      CHECK(start_set.count(s.first) == 1);
      CHECK(s.second - s.first == suffix_len);
      CHECK(s.second <= static_cast<int64_t>(doc.tokens.size()));
      // No overlap with the prefix span or the gold span.
      CHECK((s.second <= ex.prefix_span.first || s.first >= ex.gold_span.second));
      CHECK(seen.insert(s.first).second);  // distinct starts
    }
  }
}

TEST_CASE("build_suffix_task is deterministic and serializes") {
  Vocab vocab = char_vocab();
  TokenizedCorpus corpus = sentence_corpus(vocab, 5, 3, 50);
  std::vector<SuffixExample> a = build_suffix_task(corpus, vocab, 30, 10, 5, 40, 123);
  std::vector<SuffixExample> b = build_suffix_task(corpus, vocab, 30, 10, 5, 40, 123);
  CHECK(suffix_task_to_jsonl(a) == suffix_task_to_jsonl(b));
  std::vector<SuffixExample> c = suffix_task_from_jsonl(suffix_task_to_jsonl(a));
  CHECK(suffix_task_to_jsonl(c) == suffix_task_to_jsonl(a));
}

TEST_CASE("forced negatives when exactly five candidates exist") {
  Vocab vocab = char_vocab();
  TokenizedCorpus corpus = sentence_corpus(vocab, 31, 2, 40);
  const int prefix_len = 25, suffix_len = 15;
  std::vector<SuffixExample> task = build_suffix_task(corpus, vocab, prefix_len, suffix_len, 5, 60, 7);
  for (const SuffixExample& ex : task) {
    const TokenizedDoc& doc = corpus.require(ex.doc_id);
    // Oracle pool: every admissible negative start for this gold.
    std::set<int64_t> pool;
    for (int64_t s : sentence_starts(doc, vocab)) {
      if (s == ex.gold_span.first) continue;
      if (s + suffix_len > static_cast<int64_t>(doc.tokens.size())) continue;
      const bool overlaps_prefix = s < ex.prefix_span.second && ex.prefix_span.first < s + suffix_len;
      const bool overlaps_gold = s < ex.gold_span.second && ex.gold_span.first < s + suffix_len;
      if (!overlaps_prefix && !overlaps_gold) pool.insert(s);
    }
    std::set<int64_t> chosen;
    for (const TokenSpan& s : ex.negatives) {
      CHECK(pool.count(s.first) == 1);
      chosen.insert(s.first);
    }
    if (pool.size() == 5) CHECK(chosen == pool);  // pigeonhole
  }
}

TEST_CASE("suffix accuracy with oracle and random scorers") {
  Vocab vocab = char_vocab();
  TokenizedCorpus corpus = sentence_corpus(vocab, 17, 4, 60);
  std::vector<SuffixExample> task = build_suffix_task(corpus, vocab, 30, 10, 5, 400, 3);

  SUBCASE("oracle scorer is always correct") {
    GoldContinuationScorer oracle;
    SuffixAccuracy acc = suffix_accuracy(oracle, task, corpus, 30);
    CHECK(acc.accuracy == doctest::Approx(1.0));
    for (const auto& d : acc.details) CHECK(d.scores[0].rank == 0);
  }

  SUBCASE("exchangeable random scorer sits near 1/6") {
    RandomScorer scorer(99);
    SuffixAccuracy acc = suffix_accuracy(scorer, task, corpus, 30);
    CHECK(acc.accuracy > 1.0 / 6.0 - 0.08);
    CHECK(acc.accuracy < 1.0 / 6.0 + 0.08);
  }

  SUBCASE("ties count as incorrect") {
    ConstantScorer constant;
    SuffixAccuracy acc = suffix_accuracy(constant, task, corpus, 30);
    CHECK(acc.accuracy == doctest::Approx(0.0));
  }

  SUBCASE("accuracy is invariant to negative order") {
    RandomScorer scorer(42);
    SuffixAccuracy before = suffix_accuracy(scorer, task, corpus, 30);
    std::vector<SuffixExample> permuted = task;
    for (SuffixExample& ex : permuted)
      std::rotate(ex.negatives.begin(), ex.negatives.begin() + 2, ex.negatives.end());
    SuffixAccuracy after = suffix_accuracy(scorer, permuted, corpus, 30);
    CHECK(before.accuracy == doctest::Approx(after.accuracy));
  }

  SUBCASE("parallel scoring matches serial") {
    RandomScorer scorer(7);
    SuffixAccuracy serial = suffix_accuracy(scorer, task, corpus, 30, 1);
    SuffixAccuracy parallel = suffix_accuracy(scorer, task, corpus, 30, 4);
    CHECK(serial.accuracy == parallel.accuracy);
  }
}

TEST_CASE("suffix_length_sweep rebuilds tasks per length") {
  Vocab vocab = char_vocab();
  TokenizedCorpus corpus = sentence_corpus(vocab, 19, 3, 60);
  RandomScorer random_scorer(5);
  std::vector<std::pair<int, double>> curve = suffix_length_sweep(
      random_scorer, corpus, vocab, 30, {8, 8, 12}, 5, 150, 21, 30);
  REQUIRE(curve.size() == 3);
  CHECK(curve[0].second == curve[1].second);  // identical length, identical task
  for (const auto& [len, acc] : curve) {
    CHECK(acc > 1.0 / 6.0 - 0.1);
    CHECK(acc < 1.0 / 6.0 + 0.1);
  }
}

namespace {

TokenizedDoc ids_doc(const std::string& id, const std::vector<int>& ids) {
  TokenizedDoc doc;
  doc.doc_id = id;
  doc.tokens.ids = ids;
  doc.tokens.cluster_pos.assign(ids.size(), ClusterPos::Singleton);
  return doc;
}

FrequencyTable no_freq(int vocab) {
  FrequencyTable f;
  f.counts.assign(static_cast<size_t>(vocab), 0);
  f.is_frequent.assign(static_cast<size_t>(vocab), 0);
  f.frequent_size = 0;
  return f;
}

}  // namespace

TEST_CASE("copy_probe rewrites only the pasted span") {
  const int vocab = 37;
  ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.n_heads = 1;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.max_seq_len = 96;
  cfg.vocab_size = vocab;
  cfg.attention = {AttentionSpec::local(4)};
  Model m = zero_model<float>(cfg);
  Rng rng(3);
  std::vector<int> ids(300);
  for (int& t : ids) t = static_cast<int>(rng.next_below(vocab));
  TokenizedCorpus corpus;
  corpus.docs.push_back(ids_doc("doc", ids));
  FrequencyTable freq = no_freq(vocab);
  Evaluator ev(m, corpus, freq, {8, 1.0, 1});
  const int N = 64, k = 4;
  std::vector<TargetWindow> windows = {{"doc", 128, N, k, 0}};

  // Capture the perturbed prefix through a wrapper editor equivalent: redo
  // the probe's paste by hand and compare against the probe's record NLLs
  // under a uniform model (all NLLs identical => probe ran with the right
  // shapes; span correctness checked structurally below).
  std::vector<EvalRecord> records = copy_probe(ev, windows, {0, 8, 60});
  CHECK(records.size() == 3 * k);
  for (const EvalRecord& r : records) {
    CHECK(r.perturb_kind == "copy_paste");
    CHECK(r.nll == doctest::Approx(std::log(static_cast<double>(vocab))).epsilon(1e-12));
  }
  CHECK_THROWS(copy_probe(ev, windows, {61}));  // d + k exceeds prefix
  CHECK_THROWS(copy_probe(ev, windows, {-1}));
}

TEST_CASE("copy beyond an all-local receptive field changes nothing") {
  const int vocab = 23;
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.max_seq_len = 96;
  cfg.vocab_size = vocab;
  cfg.attention = {AttentionSpec::local(3), AttentionSpec::local(3)};  // RF 6
  Model m = init_model<float>(cfg, 55);
  Rng rng(4);
  std::vector<int> ids(300);
  for (int& t : ids) t = static_cast<int>(rng.next_below(vocab));
  TokenizedCorpus corpus;
  corpus.docs.push_back(ids_doc("doc", ids));
  FrequencyTable freq = no_freq(vocab);
  Evaluator ev(m, corpus, freq, {8, 1.0, 1});
  const int N = 64, k = 4;
  std::vector<TargetWindow> windows = {{"doc", 128, N, k, 0}};

  std::vector<EvalRecord> clean = ev.eval_targets(windows, N);
  // Offset N - k puts the copy at the prefix start, 56 tokens from targets.
  std::vector<EvalRecord> pasted = copy_probe(ev, windows, {N - k});
  REQUIRE(clean.size() == pasted.size());
  for (size_t i = 0; i < clean.size(); ++i) CHECK(clean[i].nll == pasted[i].nll);
}

TEST_CASE("trained local model exploits an adjacent pasted copy") {
  // Corpus of documents where every 8-token block appears twice in a row;
  // a Local{8} model learns to copy the block 8 positions back.
  const int vocab = 32;
  Rng rng(6);
  TokenSequence doc;
  for (int block = 0; block < 1500; ++block) {
    std::vector<int> chunk(8);
    for (int& t : chunk) t = static_cast<int>(rng.next_below(vocab));
    for (int rep = 0; rep < 2; ++rep)
      for (int t : chunk) {
        doc.ids.push_back(t);
        doc.cluster_pos.push_back(ClusterPos::Singleton);
      }
  }
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_model = 32;
  cfg.d_ff = 64;
  cfg.max_seq_len = 96;
  cfg.vocab_size = vocab;
  cfg.attention = {AttentionSpec::local(8), AttentionSpec::local(8)};
  TrainParams params;
  params.lr = 1.0f;
  params.steps = 2000;
  params.batch = 2;
  params.seq_len = 64;
  params.seed = 13;
  Model m = train(cfg, {doc}, params);

  // Held-out document with the same doubled-block structure; anchors sit at
  // block starts, so the k targets are a fresh (unpredictable) first copy.
  Rng rng2(91);
  TokenizedDoc held = ids_doc("held", {});
  for (int block = 0; block < 40; ++block) {
    std::vector<int> chunk(8);
    for (int& t : chunk) t = static_cast<int>(rng2.next_below(vocab));
    for (int rep = 0; rep < 2; ++rep)
      for (int t : chunk) {
        held.tokens.ids.push_back(t);
        held.tokens.cluster_pos.push_back(ClusterPos::Singleton);
      }
  }
  TokenizedCorpus corpus;
  corpus.docs.push_back(std::move(held));
  FrequencyTable freq = no_freq(vocab);
  Evaluator ev(m, corpus, freq, {8, 1.0, 1});
  const int N = 64, k = 8;
  std::vector<TargetWindow> windows;
  for (int b = 8; b < 32; b += 4) windows.push_back({"held", 16 * b, N, k, 0});

  // Pasting the targets immediately before themselves recreates the learned
  // doubled-block pattern, so the copy is maximal evidence.
  const double unperturbed = perplexity(ev.eval_targets(windows, N));
  const double adjacent = perplexity(copy_probe(ev, windows, {0}));
  CHECK(adjacent <= unperturbed);
  CHECK(adjacent < unperturbed * 0.5);  // strong effect, validated empirically
}

TEST_CASE("chapter_increment_probe") {
  SUBCASE("untrained model: delta within the control noise band") {
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.max_seq_len = 256;
    cfg.vocab_size = 32;
    cfg.attention = {AttentionSpec::full(), AttentionSpec::full()};
    Model m = init_model<float>(cfg, 17);
    ChapterTemplate tmpl;
    tmpl.header_prefix = {30};
    tmpl.number_tokens = {20, 21, 22, 23, 24, 25, 26, 27};
    tmpl.n_sections = 8;
    tmpl.spacing = 24;
    tmpl.filler_pool = {1, 2, 3, 4, 5, 6, 7, 8};
    tmpl.seed = 5;
    ChapterProbeReport report = chapter_increment_probe(m, tmpl);
    CHECK(report.n_headers == 7);
    CHECK(std::abs(report.delta) <= report.noise_bound);
  }

  SUBCASE("spacing beyond a local receptive field gives exactly zero delta") {
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.max_seq_len = 256;
    cfg.vocab_size = 32;
    cfg.attention = {AttentionSpec::local(2), AttentionSpec::local(2)};  // RF 4
    Model m = init_model<float>(cfg, 29);
    ChapterTemplate tmpl;
    tmpl.header_prefix = {30};
    tmpl.number_tokens = {20, 21, 22, 23};
    tmpl.n_sections = 6;
    tmpl.spacing = 16;  // corruption 16 tokens before the target
    tmpl.filler_pool = {1, 2, 3, 4};
    tmpl.seed = 9;
    ChapterProbeReport report = chapter_increment_probe(m, tmpl);
    for (double d : report.per_header_delta) CHECK(d == 0.0);
    CHECK(report.noise_bound == 0.0);
  }

  SUBCASE("trained model shows a positive increment delta") {
    // Documents with numbered headers at fixed spacing; the starting number
    // varies per document so only prev+1 predicts the next number.
    const int header = 30, spacing = 16, n_numbers = 8;
    Rng rng(3);
    std::vector<TokenSequence> docs;
    for (int d = 0; d < 24; ++d) {
      TokenSequence doc;
      const int start = static_cast<int>(rng.next_below(n_numbers));
      for (int s = 0; s < 24; ++s) {
        doc.ids.push_back(header);
        doc.ids.push_back(20 + (start + s) % n_numbers);
        for (int f = 2; f < spacing; ++f)
          doc.ids.push_back(1 + static_cast<int>(rng.next_below(8)));
      }
      doc.cluster_pos.assign(doc.ids.size(), ClusterPos::Singleton);
      docs.push_back(std::move(doc));
    }
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_model = 32;
    cfg.d_ff = 64;
    cfg.max_seq_len = 256;
    cfg.vocab_size = 32;
    cfg.attention = {AttentionSpec::local(20), AttentionSpec::local(20)};
    TrainParams params;
    params.lr = 1.0f;
    params.steps = 1200;
    params.batch = 2;
    params.seq_len = 128;
    params.seed = 31;
    Model m = train(cfg, docs, params);

    ChapterTemplate tmpl;
    tmpl.header_prefix = {header};
    tmpl.number_tokens = {20, 21, 22, 23, 24, 25, 26, 27};
    tmpl.n_sections = 8;
    tmpl.spacing = spacing;
    tmpl.filler_pool = {1, 2, 3, 4, 5, 6, 7, 8};
    tmpl.start_number = 2;
    tmpl.seed = 77;
    ChapterProbeReport report = chapter_increment_probe(m, tmpl);
    CHECK(report.delta > 0.0);
    CHECK(report.delta > report.noise_bound);  // direction, not magnitude
  }
}
