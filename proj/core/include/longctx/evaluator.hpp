#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "longctx/corpus.hpp"
#include "longctx/model.hpp"
#include "longctx/tokenizer.hpp"

namespace longctx {

enum class FreqClass : uint8_t { Frequent, Infrequent };
enum class SubwordClass : uint8_t { First, Rest, Singleton };
enum class CopyClass : uint8_t { Local, Distant, Absent };

std::string to_string(FreqClass c);
std::string to_string(SubwordClass c);
std::string to_string(CopyClass c);

struct CategorySet {
  FreqClass frequency = FreqClass::Frequent;
  SubwordClass subword = SubwordClass::Singleton;
  CopyClass copy = CopyClass::Absent;
  int64_t copy_distance = -1;  // -1 iff copy == Absent
  std::optional<BookLabels> labels;
};

struct EvalRecord {
  std::string doc_id;
  int64_t anchor = 0;
  int target_index = 0;
  int token_id = 0;
  int prefix_len = 0;
  double nll = 0.0;
  CategorySet cats;
  bool perturbed = false;
  std::string perturb_kind;  // empty when unperturbed
  int perturb_m = 0;
  int run_index = 0;
  uint64_t seed = 0;  // perturbation stream seed; 0 when unperturbed
};

struct TokenizedDoc {
  std::string doc_id;
  TokenSequence tokens;
  std::optional<BookLabels> labels;
};

struct TokenizedCorpus {
  std::vector<TokenizedDoc> docs;  // sorted by doc_id

  const TokenizedDoc* find(const std::string& doc_id) const;
  const TokenizedDoc& require(const std::string& doc_id) const;
};

TokenizedCorpus tokenize_corpus(const Corpus& corpus, const Vocab& vocab, int n_threads = 1);

struct CurvePoint {
  double x = 0.0;
  double ppl = 0.0;
  int64_t token_count = 0;
};

struct AggregateCurve {
  std::string group;  // e.g. "overall" or "copy=distant"
  std::vector<CurvePoint> points;
};

// exp(loss_scale * mean nll). Throws on empty input.
double perplexity(std::span<const EvalRecord> records, double loss_scale = 1.0);
double perplexity_of_nll(std::span<const double> nll, double loss_scale = 1.0);

// Token categories against the prefix the model saw: copy distance is the
// gap to the most recent earlier occurrence of the token in that prefix.
CategorySet categorize(int token_id, SubwordClass subword, std::span<const int> prefix,
                       int target_offset, const FrequencyTable& freq, int cutoff,
                       const std::optional<BookLabels>& labels);

enum class XField : uint8_t { PrefixLen, PerturbM };

// Perplexity per group; group_by names fields of EvalRecord/CategorySet:
// frequency, subword, copy, genre, continuity, authorship, perturb_kind, run.
std::vector<AggregateCurve> aggregate(std::span<const EvalRecord> records,
                                      const std::vector<std::string>& group_by, XField x_field,
                                      double loss_scale = 1.0);

// Like aggregate over prefix_len, but every record inherits the categories
// observed at the largest prefix length so that each curve tracks an
// identical token set at every length.
std::vector<AggregateCurve> sweep_curves(std::span<const EvalRecord> records,
                                         const std::vector<std::string>& group_by,
                                         double loss_scale = 1.0);

struct OverlapMatrix {
  // rows/cols ordered: infrequent, subword-rest, copy-distant
  static constexpr const char* kNames[3] = {"infrequent", "subword-rest", "copy-distant"};
  double ratio[3][3];   // NaN when the row set is empty
  int64_t sizes[3];
};

OverlapMatrix overlap_matrix(std::span<const EvalRecord> records);

struct EvalOptions {
  int copy_cutoff = 2000;
  double loss_scale = 1.0;
  int n_threads = 1;
};

class Evaluator {
 public:
  Evaluator(const Model& model, const TokenizedCorpus& corpus, const FrequencyTable& freq,
            EvalOptions opts);

  // Mutates a window's prefix before scoring; seed is this window/run's
  // derived perturbation seed.
  using PrefixEditor =
      std::function<void(const TargetWindow& window, uint64_t seed, std::vector<int>& prefix)>;

  struct PerturbTag {
    std::string kind;
    int m = 0;
    int run_index = 0;
    uint64_t base_seed = 0;
  };

  // Scores the k targets of every window given its last `prefix_len` prefix
  // tokens. Categories always describe the clean prefix; the editor (if any)
  // only changes what the model sees.
  std::vector<EvalRecord> eval_targets(std::span<const TargetWindow> windows,
                                       int prefix_len) const;
  std::vector<EvalRecord> eval_targets(std::span<const TargetWindow> windows, int prefix_len,
                                       const PrefixEditor& editor, const PerturbTag& tag) const;

  // One eval_targets pass per length over the same fixed window set.
  std::vector<EvalRecord> prefix_sweep(std::span<const TargetWindow> windows,
                                       const std::vector<int>& lengths) const;

  const Model& model() const { return *model_; }
  const TokenizedCorpus& corpus() const { return *corpus_; }
  const FrequencyTable& freq() const { return *freq_; }
  const EvalOptions& options() const { return opts_; }

 private:
  const Model* model_;
  const TokenizedCorpus* corpus_;
  const FrequencyTable* freq_;
  EvalOptions opts_;
};

}  // namespace longctx
