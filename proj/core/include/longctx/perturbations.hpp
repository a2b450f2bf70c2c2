#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "longctx/evaluator.hpp"

namespace longctx {

enum class PerturbKind : uint8_t { Shuffle, RandomReplace, TokenDrop };
enum class DropPredicate : uint8_t { TargetOccurrences, RandomControl };

std::string to_string(PerturbKind k);
std::string to_string(DropPredicate p);

struct PerturbationSpec {
  PerturbKind kind = PerturbKind::Shuffle;
  int m = 0;  // perturbed token count, applied to prefix positions [0, m)
  DropPredicate drop_predicate = DropPredicate::TargetOccurrences;  // TokenDrop only
  uint64_t seed = 0;
  int run_index = 0;
};

// Seeded uniform permutation of prefix positions [0, m); everything at or
// beyond m is untouched.
std::vector<int> shuffle_window(const std::vector<int>& prefix, int m, uint64_t seed);

// Replaces prefix[0, m) with a contiguous m-token span from a uniformly
// chosen donor document (never exclude_doc).
std::vector<int> random_replace(const std::vector<int>& prefix, int m,
                                const TokenizedCorpus& donors, const std::string& exclude_doc,
                                uint64_t seed);

// TargetOccurrences: every position < m whose token occurs in `targets`
// becomes pad_id. RandomControl: the same number of uniformly chosen
// positions < m becomes pad_id.
std::vector<int> drop_tokens(const std::vector<int>& prefix, int m, std::span<const int> targets,
                             DropPredicate predicate, int pad_id, uint64_t seed);

struct PerturbationSweepOptions {
  PerturbKind kind = PerturbKind::Shuffle;
  DropPredicate drop_predicate = DropPredicate::TargetOccurrences;
  std::vector<int> m_values;
  int runs = 5;
  uint64_t base_seed = 0;
  int pad_id = 0;
};

// For every (m, run) pair, perturbs each window's full prefix with the
// window's derived seed, scores the targets, and returns the pooled records
// (run_index distinguishes runs; aggregate over perturb_m for the curves).
std::vector<EvalRecord> perturbation_sweep(const Evaluator& evaluator,
                                           std::span<const TargetWindow> windows,
                                           const PerturbationSweepOptions& opts);

}  // namespace longctx
