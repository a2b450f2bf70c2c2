#include "longctx/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "longctx/util.hpp"

namespace longctx {

std::string to_string(FreqClass c) {
  return c == FreqClass::Frequent ? "frequent" : "infrequent";
}
std::string to_string(SubwordClass c) {
  switch (c) {
    case SubwordClass::First: return "first";
    case SubwordClass::Rest: return "rest";
    case SubwordClass::Singleton: return "singleton";
  }
  return "?";
}
std::string to_string(CopyClass c) {
  switch (c) {
    case CopyClass::Local: return "local";
    case CopyClass::Distant: return "distant";
    case CopyClass::Absent: return "absent";
  }
  return "?";
}

const TokenizedDoc* TokenizedCorpus::find(const std::string& doc_id) const {
  auto it = std::lower_bound(
      docs.begin(), docs.end(), doc_id,
      [](const TokenizedDoc& d, const std::string& id) { return d.doc_id < id; });
  if (it == docs.end() || it->doc_id != doc_id) return nullptr;
  return &*it;
}

const TokenizedDoc& TokenizedCorpus::require(const std::string& doc_id) const {
  const TokenizedDoc* doc = find(doc_id);
  if (doc == nullptr) throw std::runtime_error("unknown document '" + doc_id + "'");
  return *doc;
}

TokenizedCorpus tokenize_corpus(const Corpus& corpus, const Vocab& vocab, int n_threads) {
  TokenizedCorpus out;
  out.docs.resize(corpus.documents.size());
  parallel_for(static_cast<int64_t>(corpus.documents.size()), n_threads, [&](int64_t i) {
    const Document& doc = corpus.documents[static_cast<size_t>(i)];
    out.docs[static_cast<size_t>(i)] = {doc.doc_id, encode(vocab, doc.text), doc.labels};
  });
  return out;
}

double perplexity_of_nll(std::span<const double> nll, double loss_scale) {
  if (nll.empty()) throw std::invalid_argument("perplexity: empty input");
  double sum = 0.0;
  for (double v : nll) sum += v;
  return std::exp(loss_scale * sum / static_cast<double>(nll.size()));
}

double perplexity(std::span<const EvalRecord> records, double loss_scale) {
  if (records.empty()) throw std::invalid_argument("perplexity: empty input");
  double sum = 0.0;
  for (const EvalRecord& r : records) sum += r.nll;
  return std::exp(loss_scale * sum / static_cast<double>(records.size()));
}

CategorySet categorize(int token_id, SubwordClass subword, std::span<const int> prefix,
                       int target_offset, const FrequencyTable& freq, int cutoff,
                       const std::optional<BookLabels>& labels) {
  CategorySet cats;
  cats.frequency = freq.frequent(token_id) ? FreqClass::Frequent : FreqClass::Infrequent;
  cats.subword = subword;
  cats.labels = labels;
  cats.copy = CopyClass::Absent;
  cats.copy_distance = -1;
  for (int64_t p = static_cast<int64_t>(prefix.size()) - 1; p >= 0; --p) {
    if (prefix[static_cast<size_t>(p)] == token_id) {
      // Distance from the target position to the occurrence, in tokens.
      cats.copy_distance = static_cast<int64_t>(prefix.size()) - p + target_offset;
      cats.copy = cats.copy_distance < cutoff ? CopyClass::Local : CopyClass::Distant;
      break;
    }
  }
  return cats;
}

namespace {

SubwordClass subword_class(ClusterPos pos) {
  switch (pos) {
    case ClusterPos::FirstOfCluster: return SubwordClass::First;
    case ClusterPos::Interior: return SubwordClass::Rest;
    case ClusterPos::Singleton: return SubwordClass::Singleton;
  }
  return SubwordClass::Singleton;
}

std::string group_key(const EvalRecord& r, const CategorySet& cats,
                      const std::vector<std::string>& group_by) {
  if (group_by.empty()) return "overall";
  std::string key;
  for (const std::string& field : group_by) {
    std::string value;
    if (field == "frequency") {
      value = to_string(cats.frequency);
    } else if (field == "subword") {
      value = to_string(cats.subword);
    } else if (field == "copy") {
      value = to_string(cats.copy);
    } else if (field == "genre") {
      value = cats.labels ? to_string(cats.labels->genre) : "unlabeled";
    } else if (field == "continuity") {
      value = cats.labels ? to_string(cats.labels->continuity) : "unlabeled";
    } else if (field == "authorship") {
      value = cats.labels ? to_string(cats.labels->authorship) : "unlabeled";
    } else if (field == "perturb_kind") {
      value = r.perturbed ? r.perturb_kind : "none";
    } else if (field == "run") {
      value = std::to_string(r.run_index);
    } else {
      throw std::invalid_argument("aggregate: unknown group field '" + field + "'");
    }
    if (!key.empty()) key += ',';
    key += field + "=" + value;
  }
  return key;
}

std::vector<AggregateCurve> build_curves(
    std::span<const EvalRecord> records,
    const std::function<std::string(const EvalRecord&)>& key_of,
    const std::function<double(const EvalRecord&)>& x_of, double loss_scale) {
  struct Cell {
    double nll_sum = 0.0;
    int64_t count = 0;
  };
  std::map<std::string, std::map<double, Cell>> groups;
  for (const EvalRecord& r : records) {
    Cell& cell = groups[key_of(r)][x_of(r)];
    cell.nll_sum += r.nll;
    cell.count += 1;
  }
  std::vector<AggregateCurve> curves;
  for (const auto& [key, cells] : groups) {
    AggregateCurve curve;
    curve.group = key;
    for (const auto& [x, cell] : cells)
      curve.points.push_back(
          {x, std::exp(loss_scale * cell.nll_sum / static_cast<double>(cell.count)),
           cell.count});
    curves.push_back(std::move(curve));
  }
  return curves;
}

}  // namespace

std::vector<AggregateCurve> aggregate(std::span<const EvalRecord> records,
                                      const std::vector<std::string>& group_by, XField x_field,
                                      double loss_scale) {
  auto key_of = [&group_by](const EvalRecord& r) { return group_key(r, r.cats, group_by); };
  auto x_of = [x_field](const EvalRecord& r) {
    return x_field == XField::PrefixLen ? static_cast<double>(r.prefix_len)
                                        : static_cast<double>(r.perturb_m);
  };
  return build_curves(records, key_of, x_of, loss_scale);
}

std::vector<AggregateCurve> sweep_curves(std::span<const EvalRecord> records,
                                         const std::vector<std::string>& group_by,
                                         double loss_scale) {
  int ref_len = 0;
  for (const EvalRecord& r : records) ref_len = std::max(ref_len, r.prefix_len);
  // Categories at the reference (largest) length label the token set; every
  // curve then aggregates the same (window, target) multiset at each length.
  std::map<std::tuple<std::string, int64_t, int>, const CategorySet*> ref;
  for (const EvalRecord& r : records)
    if (r.prefix_len == ref_len) ref[{r.doc_id, r.anchor, r.target_index}] = &r.cats;
  auto key_of = [&](const EvalRecord& r) {
    auto it = ref.find({r.doc_id, r.anchor, r.target_index});
    if (it == ref.end())
      throw std::runtime_error("sweep_curves: record missing at reference length");
    return group_key(r, *it->second, group_by);
  };
  auto x_of = [](const EvalRecord& r) { return static_cast<double>(r.prefix_len); };
  return build_curves(records, key_of, x_of, loss_scale);
}

OverlapMatrix overlap_matrix(std::span<const EvalRecord> records) {
  auto in_set = [](const EvalRecord& r, int s) {
    switch (s) {
      case 0: return r.cats.frequency == FreqClass::Infrequent;
      case 1: return r.cats.subword == SubwordClass::Rest;
      default: return r.cats.copy == CopyClass::Distant;
    }
  };
  OverlapMatrix m{};
  int64_t inter[3][3] = {};
  for (const EvalRecord& r : records)
    for (int a = 0; a < 3; ++a) {
      if (!in_set(r, a)) continue;
      m.sizes[a] += 1;
      for (int b = 0; b < 3; ++b)
        if (in_set(r, b)) inter[a][b] += 1;
    }
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      m.ratio[a][b] = m.sizes[a] == 0
                          ? std::numeric_limits<double>::quiet_NaN()
                          : static_cast<double>(inter[a][b]) / static_cast<double>(m.sizes[a]);
  return m;
}

Evaluator::Evaluator(const Model& model, const TokenizedCorpus& corpus,
                     const FrequencyTable& freq, EvalOptions opts)
    : model_(&model), corpus_(&corpus), freq_(&freq), opts_(opts) {
  if (opts_.n_threads < 1) opts_.n_threads = 1;
}

std::vector<EvalRecord> Evaluator::eval_targets(std::span<const TargetWindow> windows,
                                                int prefix_len) const {
  return eval_targets(windows, prefix_len, PrefixEditor{}, PerturbTag{});
}

std::vector<EvalRecord> Evaluator::eval_targets(std::span<const TargetWindow> windows,
                                                int prefix_len, const PrefixEditor& editor,
                                                const PerturbTag& tag) const {
  if (windows.empty()) return {};
  const int k = windows[0].n_targets;
  if (prefix_len < 1) throw std::invalid_argument("eval_targets: prefix_len must be >= 1");
  if (prefix_len + k > model_->cfg.max_seq_len)
    throw std::invalid_argument("eval_targets: prefix_len " + std::to_string(prefix_len) +
                                " exceeds max_seq_len - n_targets");

  std::vector<std::vector<EvalRecord>> slots(windows.size());
  parallel_for(static_cast<int64_t>(windows.size()), opts_.n_threads, [&](int64_t wi) {
    const TargetWindow& w = windows[static_cast<size_t>(wi)];
    if (prefix_len > w.prefix_len)
      throw std::invalid_argument("eval_targets: prefix_len exceeds window prefix");
    const TokenizedDoc& doc = corpus_->require(w.doc_id);
    const auto& ids = doc.tokens.ids;
    const int64_t first = w.anchor - prefix_len;
    if (first < 0 || w.anchor + w.n_targets > static_cast<int64_t>(ids.size()))
      throw std::runtime_error("eval_targets: window out of document range");

    std::vector<int> clean_prefix(ids.begin() + first, ids.begin() + w.anchor);
    std::vector<int> prefix = clean_prefix;
    uint64_t seed = 0;
    if (editor) {
      seed = derive_seed(tag.base_seed, w.doc_id, w.anchor, tag.run_index);
      editor(w, seed, prefix);
      if (prefix.size() != clean_prefix.size())
        throw std::runtime_error("eval_targets: editor changed prefix length");
    }
    std::vector<int> input = prefix;
    input.insert(input.end(), ids.begin() + w.anchor, ids.begin() + w.anchor + w.n_targets);
    const std::vector<double> nll = forward_nll(*model_, input);

    std::vector<EvalRecord>& out = slots[static_cast<size_t>(wi)];
    out.reserve(static_cast<size_t>(w.n_targets));
    for (int t = 0; t < w.n_targets; ++t) {
      EvalRecord r;
      r.doc_id = w.doc_id;
      r.anchor = w.anchor;
      r.target_index = t;
      r.token_id = ids[static_cast<size_t>(w.anchor + t)];
      r.prefix_len = prefix_len;
      r.nll = nll[static_cast<size_t>(prefix_len + t - 1)];
      if (!std::isfinite(r.nll))
        throw std::runtime_error("eval_targets: non-finite NLL for doc '" + w.doc_id + "'");
      r.cats = categorize(r.token_id,
                          subword_class(doc.tokens.cluster_pos[static_cast<size_t>(w.anchor + t)]),
                          clean_prefix, t, *freq_, opts_.copy_cutoff, doc.labels);
      if (editor) {
        r.perturbed = true;
        r.perturb_kind = tag.kind;
        r.perturb_m = tag.m;
        r.run_index = tag.run_index;
        r.seed = seed;
      }
      out.push_back(std::move(r));
    }
  });

  std::vector<EvalRecord> records;
  for (auto& slot : slots)
    for (auto& r : slot) records.push_back(std::move(r));
  return records;
}

std::vector<EvalRecord> Evaluator::prefix_sweep(std::span<const TargetWindow> windows,
                                                const std::vector<int>& lengths) const {
  if (lengths.empty()) throw std::invalid_argument("prefix_sweep: no lengths");
  for (size_t i = 1; i < lengths.size(); ++i)
    if (lengths[i] < lengths[i - 1])
      throw std::invalid_argument("prefix_sweep: lengths must be ascending");
  std::vector<EvalRecord> records;
  for (int L : lengths) {
    std::vector<EvalRecord> part = eval_targets(windows, L);
    for (auto& r : part) records.push_back(std::move(r));
  }
  return records;
}

}  // namespace longctx
