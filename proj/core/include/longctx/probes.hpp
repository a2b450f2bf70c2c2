#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "longctx/evaluator.hpp"
#include "longctx/perturbations.hpp"

namespace longctx {

// Token spans are half-open [begin, end) document offsets.
using TokenSpan = std::pair<int64_t, int64_t>;

struct SuffixExample {
  std::string doc_id;
  TokenSpan prefix_span;
  TokenSpan gold_span;
  std::vector<TokenSpan> negatives;
  uint64_t seed = 0;
};

// Positions where a new sentence starts: the token right after a './?/!'
// token, provided it begins a new whitespace-delimited word.
std::vector<int64_t> sentence_starts(const TokenizedDoc& doc, const Vocab& vocab);

// Gold suffixes begin at sentence starts with a full prefix available;
// negatives are same-document suffixes at other sentence starts whose spans
// overlap neither the prefix nor the gold span.
std::vector<SuffixExample> build_suffix_task(const TokenizedCorpus& corpus, const Vocab& vocab,
                                             int prefix_len, int suffix_len, int n_negatives,
                                             int count, uint64_t seed);

std::string suffix_task_to_jsonl(std::span<const SuffixExample> examples);
std::vector<SuffixExample> suffix_task_from_jsonl(const std::string& text);

// Mean per-token NLL of a candidate continuation given a prefix. Tests plug
// in oracle/random scorers; ModelScorer is the production path.
class SequenceScorer {
 public:
  virtual ~SequenceScorer() = default;
  virtual double sequence_nll(std::span<const int> prefix,
                              std::span<const int> candidate) const = 0;
};

class ModelScorer : public SequenceScorer {
 public:
  explicit ModelScorer(const Model& model) : model_(&model) {}
  double sequence_nll(std::span<const int> prefix, std::span<const int> candidate) const override;

 private:
  const Model* model_;
};

struct SuffixCandidateScore {
  int candidate = 0;  // 0 = gold, 1.. = negatives in stored order
  double nll = 0.0;
  int rank = 0;  // 0 = lowest nll
};

struct SuffixExampleResult {
  bool correct = false;  // gold strictly minimal; ties count as incorrect
  std::vector<SuffixCandidateScore> scores;
};

struct SuffixAccuracy {
  double accuracy = 0.0;
  std::vector<SuffixExampleResult> details;
};

SuffixAccuracy suffix_accuracy(const SequenceScorer& scorer, std::span<const SuffixExample> examples,
                               const TokenizedCorpus& corpus, int prefix_len, int n_threads = 1);

// Rebuilds the task per suffix length with the same seed and reports
// (suffix_len, accuracy) pairs.
std::vector<std::pair<int, double>> suffix_length_sweep(
    const SequenceScorer& scorer, const TokenizedCorpus& corpus, const Vocab& vocab,
    int prefix_len, const std::vector<int>& suffix_lengths, int n_negatives, int count,
    uint64_t seed, int eval_prefix_len, int n_threads = 1);

// Pastes each window's target token sequence into its prefix so the copy
// ends `offset` tokens before the targets, then scores the targets at full
// prefix length. Records carry perturb_kind "copy_paste" and perturb_m =
// offset.
std::vector<EvalRecord> copy_probe(const Evaluator& evaluator,
                                   std::span<const TargetWindow> windows,
                                   const std::vector<int>& offsets);

struct ChapterTemplate {
  std::vector<int> header_prefix;  // tokens that introduce a section header
  std::vector<int> number_tokens;  // numeral tokens, cycled in order
  int n_sections = 8;
  int spacing = 64;  // tokens from one header start to the next
  std::vector<int> filler_pool;
  int start_number = 0;
  uint64_t seed = 0;
};

struct ChapterProbeReport {
  int n_headers = 0;
  double mean_nll_clean = 0.0;
  double mean_nll_corrupted = 0.0;
  double delta = 0.0;  // corrupted - clean, averaged over headers
  std::vector<double> per_header_delta;
  std::vector<double> control_delta;  // same-distance corruption of a filler token
  double noise_bound = 0.0;           // max |control_delta|
  std::vector<int> document;          // the synthetic token document
  std::vector<int64_t> number_positions;
};

// Measures how much corrupting the previous section's number (replacing it
// with the target's own number) raises the NLL of the next section number.
ChapterProbeReport chapter_increment_probe(const Model& model, const ChapterTemplate& tmpl);

}  // namespace longctx
