#include "longctx/perturbations.hpp"

#include <algorithm>
#include <stdexcept>

#include "longctx/util.hpp"

namespace longctx {

std::string to_string(PerturbKind k) {
  switch (k) {
    case PerturbKind::Shuffle: return "shuffle";
    case PerturbKind::RandomReplace: return "random_replace";
    case PerturbKind::TokenDrop: return "token_drop";
  }
  return "?";
}

std::string to_string(DropPredicate p) {
  return p == DropPredicate::TargetOccurrences ? "targets" : "control";
}

namespace {

void check_m(const std::vector<int>& prefix, int m) {
  if (m < 0 || m > static_cast<int>(prefix.size()))
    throw std::invalid_argument("perturbation: m out of range [0, " +
                                std::to_string(prefix.size()) + "]");
}

}  // namespace

std::vector<int> shuffle_window(const std::vector<int>& prefix, int m, uint64_t seed) {
  check_m(prefix, m);
  std::vector<int> out = prefix;
  Rng rng(seed);
  for (int i = m - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_below(static_cast<uint64_t>(i) + 1));
    std::swap(out[static_cast<size_t>(i)], out[static_cast<size_t>(j)]);
  }
  return out;
}

std::vector<int> random_replace(const std::vector<int>& prefix, int m,
                                const TokenizedCorpus& donors, const std::string& exclude_doc,
                                uint64_t seed) {
  check_m(prefix, m);
  std::vector<int> out = prefix;
  if (m == 0) return out;
  std::vector<const TokenizedDoc*> eligible;
  for (const TokenizedDoc& doc : donors.docs)
    if (doc.doc_id != exclude_doc && static_cast<int>(doc.tokens.size()) >= m)
      eligible.push_back(&doc);
  if (eligible.empty())
    throw std::runtime_error("random_replace: no donor document other than '" + exclude_doc +
                             "' has " + std::to_string(m) + " tokens");
  Rng rng(seed);
  const TokenizedDoc* donor = eligible[rng.next_below(eligible.size())];
  const int64_t max_start = static_cast<int64_t>(donor->tokens.size()) - m;
  const int64_t start = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(max_start + 1)));
  for (int i = 0; i < m; ++i)
    out[static_cast<size_t>(i)] = donor->tokens.ids[static_cast<size_t>(start + i)];
  return out;
}

std::vector<int> drop_tokens(const std::vector<int>& prefix, int m, std::span<const int> targets,
                             DropPredicate predicate, int pad_id, uint64_t seed) {
  check_m(prefix, m);
  std::vector<int> out = prefix;
  std::vector<int> hit_positions;
  for (int i = 0; i < m; ++i)
    if (std::find(targets.begin(), targets.end(), out[static_cast<size_t>(i)]) != targets.end())
      hit_positions.push_back(i);

  if (predicate == DropPredicate::TargetOccurrences) {
    for (int i : hit_positions) out[static_cast<size_t>(i)] = pad_id;
    return out;
  }
  // Control: pad an equal count of uniformly chosen positions in [0, m).
  const int n_drop = static_cast<int>(hit_positions.size());
  Rng rng(seed);
  std::vector<int> positions(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) positions[static_cast<size_t>(i)] = i;
  for (int i = 0; i < n_drop; ++i) {
    const int j = i + static_cast<int>(rng.next_below(static_cast<uint64_t>(m - i)));
    std::swap(positions[static_cast<size_t>(i)], positions[static_cast<size_t>(j)]);
    out[static_cast<size_t>(positions[static_cast<size_t>(i)])] = pad_id;
  }
  return out;
}

std::vector<EvalRecord> perturbation_sweep(const Evaluator& evaluator,
                                           std::span<const TargetWindow> windows,
                                           const PerturbationSweepOptions& opts) {
  if (opts.runs < 1) throw std::invalid_argument("perturbation_sweep: runs must be >= 1");
  std::vector<EvalRecord> records;
  const TokenizedCorpus& corpus = evaluator.corpus();
  for (int m : opts.m_values) {
    for (int run = 0; run < opts.runs; ++run) {
      auto editor = [&, m](const TargetWindow& w, uint64_t seed, std::vector<int>& prefix) {
        switch (opts.kind) {
          case PerturbKind::Shuffle:
            prefix = shuffle_window(prefix, m, seed);
            break;
          case PerturbKind::RandomReplace:
            prefix = random_replace(prefix, m, corpus, w.doc_id, seed);
            break;
          case PerturbKind::TokenDrop: {
            const TokenizedDoc& doc = corpus.require(w.doc_id);
            std::span<const int> targets(doc.tokens.ids.data() + w.anchor,
                                         static_cast<size_t>(w.n_targets));
            prefix = drop_tokens(prefix, m, targets, opts.drop_predicate,
                                 opts.pad_id, seed);
            break;
          }
        }
      };
      std::string kind = to_string(opts.kind);
      if (opts.kind == PerturbKind::TokenDrop) kind += "_" + to_string(opts.drop_predicate);
      Evaluator::PerturbTag tag{kind, m, run, opts.base_seed};
      std::vector<EvalRecord> part =
          evaluator.eval_targets(windows, windows.empty() ? 1 : windows[0].prefix_len, editor, tag);
      for (auto& r : part) records.push_back(std::move(r));
    }
  }
  return records;
}

}  // namespace longctx
