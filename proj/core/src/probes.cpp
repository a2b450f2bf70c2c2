#include "longctx/probes.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "longctx/util.hpp"

namespace longctx {

using nlohmann::json;

std::vector<int64_t> sentence_starts(const TokenizedDoc& doc, const Vocab& vocab) {
  std::vector<int64_t> starts;
  const auto& ids = doc.tokens.ids;
  for (int64_t i = 0; i + 1 < static_cast<int64_t>(ids.size()); ++i) {
    const std::string& text = vocab.id_to_token[static_cast<size_t>(ids[static_cast<size_t>(i)])];
    if (text != "." && text != "?" && text != "!") continue;
    if (doc.tokens.cluster_pos[static_cast<size_t>(i) + 1] == ClusterPos::Interior) continue;
    starts.push_back(i + 1);
  }
  return starts;
}

namespace {

bool spans_overlap(TokenSpan a, TokenSpan b) {
  return a.first < b.second && b.first < a.second;
}

}  // namespace

std::vector<SuffixExample> build_suffix_task(const TokenizedCorpus& corpus, const Vocab& vocab,
                                             int prefix_len, int suffix_len, int n_negatives,
                                             int count, uint64_t seed) {
  if (prefix_len < 1 || suffix_len < 1 || n_negatives < 1 || count < 1)
    throw std::invalid_argument("build_suffix_task: bad parameters");

  struct DocStarts {
    const TokenizedDoc* doc;
    std::vector<int64_t> starts;
    std::vector<int64_t> golds;  // starts with a full prefix and room for the suffix
  };
  std::vector<DocStarts> eligible;
  for (const TokenizedDoc& doc : corpus.docs) {
    DocStarts ds{&doc, sentence_starts(doc, vocab), {}};
    const int64_t len = static_cast<int64_t>(doc.tokens.size());
    for (int64_t s : ds.starts)
      if (s >= prefix_len && s + suffix_len <= len) ds.golds.push_back(s);
    if (ds.golds.empty()) continue;
    // Keep only documents where at least one gold admits enough negatives.
    bool ok = false;
    for (int64_t g : ds.golds) {
      int avail = 0;
      const TokenSpan prefix_span{g - prefix_len, g};
      const TokenSpan gold_span{g, g + suffix_len};
      for (int64_t s : ds.starts) {
        if (s == g || s + suffix_len > len) continue;
        const TokenSpan cand{s, s + suffix_len};
        if (!spans_overlap(cand, prefix_span) && !spans_overlap(cand, gold_span)) ++avail;
      }
      if (avail >= n_negatives) {
        ok = true;
        break;
      }
    }
    if (ok) eligible.push_back(std::move(ds));
  }
  if (eligible.empty())
    throw std::runtime_error(
        "build_suffix_task: no document is long enough or has enough sentence boundaries");

  std::vector<SuffixExample> examples;
  examples.reserve(static_cast<size_t>(count));
  for (int e = 0; e < count; ++e) {
    const uint64_t ex_seed = mix64(seed ^ (static_cast<uint64_t>(e) + 1));
    Rng rng(ex_seed);
    // Bounded retries over (document, gold) draws; a draw can fail when that
    // gold has too few non-overlapping negatives.
    SuffixExample ex;
    bool built = false;
    for (int attempt = 0; attempt < 64 && !built; ++attempt) {
      const DocStarts& ds = eligible[rng.next_below(eligible.size())];
      const int64_t len = static_cast<int64_t>(ds.doc->tokens.size());
      const int64_t g = ds.golds[rng.next_below(ds.golds.size())];
      const TokenSpan prefix_span{g - prefix_len, g};
      const TokenSpan gold_span{g, g + suffix_len};
      std::vector<int64_t> pool;
      for (int64_t s : ds.starts) {
        if (s == g || s + suffix_len > len) continue;
        const TokenSpan cand{s, s + suffix_len};
        if (!spans_overlap(cand, prefix_span) && !spans_overlap(cand, gold_span))
          pool.push_back(s);
      }
      if (static_cast<int>(pool.size()) < n_negatives) continue;
      for (int i = 0; i < n_negatives; ++i) {
        const size_t j =
            static_cast<size_t>(i) + static_cast<size_t>(rng.next_below(pool.size() - static_cast<size_t>(i)));
        std::swap(pool[static_cast<size_t>(i)], pool[j]);
      }
      ex.doc_id = ds.doc->doc_id;
      ex.prefix_span = prefix_span;
      ex.gold_span = gold_span;
      ex.negatives.clear();
      for (int i = 0; i < n_negatives; ++i)
        ex.negatives.push_back({pool[static_cast<size_t>(i)], pool[static_cast<size_t>(i)] + suffix_len});
      ex.seed = ex_seed;
      built = true;
    }
    if (!built)
      throw std::runtime_error("build_suffix_task: could not place example " + std::to_string(e));
    examples.push_back(std::move(ex));
  }
  return examples;
}

std::string suffix_task_to_jsonl(std::span<const SuffixExample> examples) {
  std::ostringstream out;
  for (const SuffixExample& ex : examples) {
    json j;
    j["doc_id"] = ex.doc_id;
    j["prefix_span"] = {ex.prefix_span.first, ex.prefix_span.second};
    j["gold_span"] = {ex.gold_span.first, ex.gold_span.second};
    j["negative_spans"] = json::array();
    for (const TokenSpan& s : ex.negatives) j["negative_spans"].push_back({s.first, s.second});
    j["seed"] = ex.seed;
    out << j.dump() << '\n';
  }
  return out.str();
}

std::vector<SuffixExample> suffix_task_from_jsonl(const std::string& text) {
  std::vector<SuffixExample> examples;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    SuffixExample ex;
    ex.doc_id = j.at("doc_id").get<std::string>();
    ex.prefix_span = {j.at("prefix_span")[0].get<int64_t>(), j.at("prefix_span")[1].get<int64_t>()};
    ex.gold_span = {j.at("gold_span")[0].get<int64_t>(), j.at("gold_span")[1].get<int64_t>()};
    for (const json& s : j.at("negative_spans"))
      ex.negatives.push_back({s[0].get<int64_t>(), s[1].get<int64_t>()});
    ex.seed = j.at("seed").get<uint64_t>();
    examples.push_back(std::move(ex));
  }
  return examples;
}

double ModelScorer::sequence_nll(std::span<const int> prefix,
                                 std::span<const int> candidate) const {
  if (candidate.empty()) throw std::invalid_argument("sequence_nll: empty candidate");
  std::vector<int> input(prefix.begin(), prefix.end());
  input.insert(input.end(), candidate.begin(), candidate.end());
  const std::vector<double> nll = forward_nll(*model_, input);
  double sum = 0.0;
  // Candidate token c sits at input index prefix.size() + c; its NLL is the
  // entry one position earlier.
  for (size_t c = 0; c < candidate.size(); ++c) sum += nll[prefix.size() + c - 1];
  return sum / static_cast<double>(candidate.size());
}

SuffixAccuracy suffix_accuracy(const SequenceScorer& scorer,
                               std::span<const SuffixExample> examples,
                               const TokenizedCorpus& corpus, int prefix_len, int n_threads) {
  SuffixAccuracy result;
  result.details.assign(examples.size(), SuffixExampleResult{});
  parallel_for(static_cast<int64_t>(examples.size()), n_threads, [&](int64_t i) {
    const SuffixExample& ex = examples[static_cast<size_t>(i)];
    const TokenizedDoc& doc = corpus.require(ex.doc_id);
    const auto& ids = doc.tokens.ids;
    const int64_t avail = ex.prefix_span.second - ex.prefix_span.first;
    if (prefix_len > avail)
      throw std::invalid_argument("suffix_accuracy: prefix_len exceeds available prefix");
    std::span<const int> prefix(ids.data() + ex.prefix_span.second - prefix_len,
                                static_cast<size_t>(prefix_len));
    SuffixExampleResult& detail = result.details[static_cast<size_t>(i)];
    std::vector<TokenSpan> spans;
    spans.push_back(ex.gold_span);
    for (const TokenSpan& s : ex.negatives) spans.push_back(s);
    for (size_t c = 0; c < spans.size(); ++c) {
      std::span<const int> cand(ids.data() + spans[c].first,
                                static_cast<size_t>(spans[c].second - spans[c].first));
      detail.scores.push_back(
          {static_cast<int>(c), scorer.sequence_nll(prefix, cand), 0});
    }
    // Ranks by nll ascending; gold must be strictly minimal to count.
    std::vector<size_t> order(detail.scores.size());
    for (size_t c = 0; c < order.size(); ++c) order[c] = c;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return detail.scores[a].nll < detail.scores[b].nll;
    });
    for (size_t r = 0; r < order.size(); ++r) detail.scores[order[r]].rank = static_cast<int>(r);
    const double gold_nll = detail.scores[0].nll;
    detail.correct = true;
    for (size_t c = 1; c < detail.scores.size(); ++c)
      if (!(gold_nll < detail.scores[c].nll)) detail.correct = false;
  });
  int64_t correct = 0;
  for (const SuffixExampleResult& d : result.details) correct += d.correct ? 1 : 0;
  result.accuracy = examples.empty()
                        ? 0.0
                        : static_cast<double>(correct) / static_cast<double>(examples.size());
  return result;
}

std::vector<std::pair<int, double>> suffix_length_sweep(
    const SequenceScorer& scorer, const TokenizedCorpus& corpus, const Vocab& vocab,
    int prefix_len, const std::vector<int>& suffix_lengths, int n_negatives, int count,
    uint64_t seed, int eval_prefix_len, int n_threads) {
  std::vector<std::pair<int, double>> out;
  for (int s : suffix_lengths) {
    std::vector<SuffixExample> task =
        build_suffix_task(corpus, vocab, prefix_len, s, n_negatives, count, seed);
    out.emplace_back(s, suffix_accuracy(scorer, task, corpus, eval_prefix_len, n_threads).accuracy);
  }
  return out;
}

std::vector<EvalRecord> copy_probe(const Evaluator& evaluator,
                                   std::span<const TargetWindow> windows,
                                   const std::vector<int>& offsets) {
  std::vector<EvalRecord> records;
  const TokenizedCorpus& corpus = evaluator.corpus();
  for (int d : offsets) {
    auto editor = [&corpus, d](const TargetWindow& w, uint64_t, std::vector<int>& prefix) {
      if (d < 0 || d + w.n_targets > static_cast<int>(prefix.size()))
        throw std::invalid_argument("copy_probe: offset out of range");
      const TokenizedDoc& doc = corpus.require(w.doc_id);
      const int n = static_cast<int>(prefix.size());
      for (int t = 0; t < w.n_targets; ++t)
        prefix[static_cast<size_t>(n - d - w.n_targets + t)] =
            doc.tokens.ids[static_cast<size_t>(w.anchor + t)];
    };
    Evaluator::PerturbTag tag{"copy_paste", d, 0, 0};
    std::vector<EvalRecord> part = evaluator.eval_targets(
        windows, windows.empty() ? 1 : windows[0].prefix_len, editor, tag);
    for (auto& r : part) records.push_back(std::move(r));
  }
  return records;
}

ChapterProbeReport chapter_increment_probe(const Model& model, const ChapterTemplate& tmpl) {
  if (tmpl.header_prefix.empty() || tmpl.number_tokens.empty() || tmpl.filler_pool.empty())
    throw std::invalid_argument("chapter_increment_probe: empty template fields");
  const int header_len = static_cast<int>(tmpl.header_prefix.size()) + 1;
  if (tmpl.spacing <= header_len)
    throw std::invalid_argument("chapter_increment_probe: spacing must exceed header length");
  if (tmpl.n_sections < 2)
    throw std::invalid_argument("chapter_increment_probe: need at least 2 sections");

  ChapterProbeReport report;
  Rng rng(tmpl.seed);
  for (int t = 0; t < tmpl.n_sections; ++t) {
    for (int id : tmpl.header_prefix) report.document.push_back(id);
    report.number_positions.push_back(static_cast<int64_t>(report.document.size()));
    report.document.push_back(
        tmpl.number_tokens[static_cast<size_t>(tmpl.start_number + t) % tmpl.number_tokens.size()]);
    for (int f = header_len; f < tmpl.spacing; ++f)
      report.document.push_back(
          tmpl.filler_pool[rng.next_below(tmpl.filler_pool.size())]);
  }
  if (static_cast<int>(report.document.size()) > model.cfg.max_seq_len)
    throw std::invalid_argument("chapter_increment_probe: document exceeds max_seq_len");

  const std::vector<double> clean = forward_nll(model, report.document);
  Rng control_rng(mix64(tmpl.seed ^ 0x636f6e74726f6cull));
  for (int t = 1; t < tmpl.n_sections; ++t) {
    const int64_t target_pos = report.number_positions[static_cast<size_t>(t)];
    const int64_t prev_pos = report.number_positions[static_cast<size_t>(t) - 1];
    const int target_tok = report.document[static_cast<size_t>(target_pos)];
    const double nll_clean = clean[static_cast<size_t>(target_pos) - 1];

    std::vector<int> corrupted = report.document;
    corrupted[static_cast<size_t>(prev_pos)] = target_tok;  // previous number -> target number
    const double nll_corrupted =
        forward_nll(model, corrupted)[static_cast<size_t>(target_pos) - 1];

    report.mean_nll_clean += nll_clean;
    report.mean_nll_corrupted += nll_corrupted;
    report.per_header_delta.push_back(nll_corrupted - nll_clean);

    // Control: corrupt a filler token right after the previous header, i.e.
    // at essentially the same distance from the target.
    std::vector<int> control = report.document;
    const int64_t control_pos = prev_pos + 1;
    int replacement = control[static_cast<size_t>(control_pos)];
    while (replacement == control[static_cast<size_t>(control_pos)] && tmpl.filler_pool.size() > 1)
      replacement = tmpl.filler_pool[control_rng.next_below(tmpl.filler_pool.size())];
    control[static_cast<size_t>(control_pos)] = replacement;
    const double nll_control = forward_nll(model, control)[static_cast<size_t>(target_pos) - 1];
    report.control_delta.push_back(nll_control - nll_clean);
    ++report.n_headers;
  }
  report.mean_nll_clean /= static_cast<double>(report.n_headers);
  report.mean_nll_corrupted /= static_cast<double>(report.n_headers);
  double delta_sum = 0.0;
  for (double d : report.per_header_delta) delta_sum += d;
  report.delta = delta_sum / static_cast<double>(report.n_headers);
  report.noise_bound = 0.0;
  for (double d : report.control_delta) report.noise_bound = std::max(report.noise_bound, std::abs(d));
  return report;
}

}  // namespace longctx
