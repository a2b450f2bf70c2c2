#include "longctx/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "longctx/report.hpp"
#include "longctx/util.hpp"

namespace longctx {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json model_config_json(const ModelConfig& cfg) { return json::parse(config_to_json(cfg)); }

template <class T>
std::vector<T> int_list(const json& j) {
  std::vector<T> out;
  for (const auto& v : j) out.push_back(v.get<T>());
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j = json::parse(text);
  ExperimentConfig cfg;
  cfg.corpus_dir = j.value("corpus_dir", "");
  cfg.metadata_path = j.value("metadata_path", "");
  cfg.vocab_path = j.value("vocab_path", cfg.vocab_path);
  cfg.vocab_size = j.value("vocab_size", cfg.vocab_size);
  cfg.model_path = j.value("model_path", cfg.model_path);
  cfg.records_csv = j.value("records_csv", "");
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.threads = j.value("threads", cfg.threads);
  if (j.contains("model")) {
    cfg.model = config_from_json(j.at("model").dump());
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    cfg.train.lr = t.value("lr", cfg.train.lr);
    cfg.train.steps = t.value("steps", cfg.train.steps);
    cfg.train.batch = t.value("batch", cfg.train.batch);
    cfg.train.seq_len = t.value("seq_len", cfg.train.seq_len);
    cfg.train.clip_norm = t.value("clip_norm", cfg.train.clip_norm);
    cfg.train.log_every = t.value("log_every", cfg.train.log_every);
  }
  if (j.contains("protocol")) {
    const json& p = j.at("protocol");
    ProtocolParams& pp = cfg.protocol;
    pp.prefix_len = p.value("prefix_len", pp.prefix_len);
    pp.n_targets = p.value("n_targets", pp.n_targets);
    pp.exclude_last = p.value("exclude_last", pp.exclude_last);
    pp.n_windows = p.value("n_windows", pp.n_windows);
    pp.copy_cutoff = p.value("copy_cutoff", pp.copy_cutoff);
    pp.loss_scale = p.value("loss_scale", pp.loss_scale);
    if (p.contains("lengths")) pp.lengths = int_list<int>(p.at("lengths"));
    if (p.contains("m_values")) pp.m_values = int_list<int>(p.at("m_values"));
    pp.runs = p.value("runs", pp.runs);
    if (p.contains("offsets")) pp.offsets = int_list<int>(p.at("offsets"));
    pp.suffix_len = p.value("suffix_len", pp.suffix_len);
    if (p.contains("suffix_lengths")) pp.suffix_lengths = int_list<int>(p.at("suffix_lengths"));
    pp.n_negatives = p.value("n_negatives", pp.n_negatives);
    pp.suffix_count = p.value("suffix_count", pp.suffix_count);
  }
  if (j.contains("chapter")) {
    const json& c = j.at("chapter");
    cfg.chapter.header_text = c.value("header_text", cfg.chapter.header_text);
    if (c.contains("numbers")) {
      cfg.chapter.numbers.clear();
      for (const auto& v : c.at("numbers")) cfg.chapter.numbers.push_back(v.get<std::string>());
    }
    cfg.chapter.n_sections = c.value("n_sections", cfg.chapter.n_sections);
    cfg.chapter.spacing = c.value("spacing", cfg.chapter.spacing);
    cfg.chapter.start_number = c.value("start_number", cfg.chapter.start_number);
  }
  return cfg;
}

std::string ExperimentConfig::to_json_text() const {
  json j;
  j["corpus_dir"] = corpus_dir;
  j["metadata_path"] = metadata_path;
  j["vocab_path"] = vocab_path;
  j["vocab_size"] = vocab_size;
  j["model_path"] = model_path;
  j["records_csv"] = records_csv;
  j["out_dir"] = out_dir;
  j["seed"] = seed;
  j["threads"] = threads;
  j["model"] = model_config_json(model);
  j["train"] = {{"lr", train.lr},       {"steps", train.steps},
                {"batch", train.batch}, {"seq_len", train.seq_len},
                {"clip_norm", train.clip_norm}, {"log_every", train.log_every}};
  j["protocol"] = {{"prefix_len", protocol.prefix_len},
                   {"n_targets", protocol.n_targets},
                   {"exclude_last", protocol.exclude_last},
                   {"n_windows", protocol.n_windows},
                   {"copy_cutoff", protocol.copy_cutoff},
                   {"loss_scale", protocol.loss_scale},
                   {"lengths", protocol.lengths},
                   {"m_values", protocol.m_values},
                   {"runs", protocol.runs},
                   {"offsets", protocol.offsets},
                   {"suffix_len", protocol.suffix_len},
                   {"suffix_lengths", protocol.suffix_lengths},
                   {"n_negatives", protocol.n_negatives},
                   {"suffix_count", protocol.suffix_count}};
  j["chapter"] = {{"header_text", chapter.header_text},
                  {"numbers", chapter.numbers},
                  {"n_sections", chapter.n_sections},
                  {"spacing", chapter.spacing},
                  {"start_number", chapter.start_number}};
  return j.dump(2) + "\n";
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return ExperimentConfig::from_json_text(read_text_file(path));
}

namespace {

struct RunContext {
  Corpus corpus;
  Vocab vocab;
  TokenizedCorpus tokenized;
  FrequencyTable freq;
  std::optional<Model> model;
  int threads = 1;
};

void require_path(const std::string& path, const std::string& what) {
  if (path.empty()) throw std::runtime_error("config: missing " + what);
  if (!fs::exists(path)) throw std::runtime_error(what + " not found: " + path);
}

RunContext load_context(const ExperimentConfig& cfg, bool need_model) {
  RunContext ctx;
  require_path(cfg.corpus_dir, "corpus_dir");
  require_path(cfg.vocab_path, "vocab file");
  ctx.threads = resolve_threads(cfg.threads);
  ctx.corpus = load_corpus(cfg.corpus_dir, cfg.metadata_path);
  ctx.vocab = load_vocab_file(cfg.vocab_path);
  ctx.tokenized = tokenize_corpus(ctx.corpus, ctx.vocab, ctx.threads);
  std::vector<TokenSequence> streams;
  streams.reserve(ctx.tokenized.docs.size());
  for (const TokenizedDoc& d : ctx.tokenized.docs) streams.push_back(d.tokens);
  ctx.freq = frequency_table(streams, ctx.vocab);
  if (need_model) {
    require_path(cfg.model_path, "model file");
    ctx.model = load_checkpoint(cfg.model_path);
    const std::string vhash = vocab_hash(ctx.vocab);
    if (!ctx.model->cfg.vocab_hash.empty() && ctx.model->cfg.vocab_hash != vhash)
      throw std::runtime_error("model/corpus mismatch: checkpoint was trained with vocab hash " +
                               ctx.model->cfg.vocab_hash + " but " + cfg.vocab_path +
                               " hashes to " + vhash);
  }
  return ctx;
}

std::vector<TargetWindow> sample_protocol_windows(const ExperimentConfig& cfg,
                                                  const RunContext& ctx) {
  std::vector<TokenSequence> streams;
  streams.reserve(ctx.tokenized.docs.size());
  for (const TokenizedDoc& d : ctx.tokenized.docs) streams.push_back(d.tokens);
  return sample_targets(ctx.corpus, streams, cfg.protocol.prefix_len, cfg.protocol.n_targets,
                        cfg.protocol.exclude_last, cfg.protocol.n_windows, cfg.seed);
}

void write_manifest(const ExperimentConfig& cfg, const std::string& subcommand,
                    const std::vector<std::string>& outputs, const RunContext* ctx) {
  json m;
  m["tool"] = "longctx";
  m["version"] = kVersion;
  m["subcommand"] = subcommand;
  m["config"] = json::parse(cfg.to_json_text());
  m["seed"] = cfg.seed;
  if (ctx != nullptr) {
    m["vocab_hash"] = vocab_hash(ctx->vocab);
    if (ctx->model) m["model_hash"] = file_hash(cfg.model_path);
    m["threads"] = ctx->threads;
  }
  m["outputs"] = outputs;
  write_text_file((fs::path(cfg.out_dir) / "manifest.json").string(), m.dump(2) + "\n");
  write_text_file((fs::path(cfg.out_dir) / "config.json").string(), cfg.to_json_text());
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out_dir) / name).string();
}

// Standard figure set: overall plus the paper's token taxonomies and any
// book-type labels present.
std::vector<std::vector<std::string>> standard_groupings(bool labeled) {
  std::vector<std::vector<std::string>> groups = {
      {}, {"frequency"}, {"subword"}, {"copy"}};
  if (labeled) {
    groups.push_back({"genre"});
    groups.push_back({"continuity"});
    groups.push_back({"authorship"});
  }
  return groups;
}

std::string grouping_name(const std::vector<std::string>& g) {
  if (g.empty()) return "overall";
  std::string name;
  for (const std::string& k : g) {
    if (!name.empty()) name += "_";
    name += k;
  }
  return name;
}

void emit_curves(const ExperimentConfig& cfg, const std::string& stem,
                 std::span<const AggregateCurve> curves, const std::string& x_name,
                 const AxesConfig& axes, std::vector<std::string>& outputs) {
  const std::string csv_path = out_path(cfg, stem + ".csv");
  const std::string svg_path = out_path(cfg, stem + ".svg");
  write_text_file(csv_path, curves_to_csv(curves, x_name));
  write_text_file(svg_path, render_chart(curves, axes));
  outputs.push_back(csv_path);
  outputs.push_back(svg_path);
}

}  // namespace

void run_tokenize(const ExperimentConfig& cfg) {
  require_path(cfg.corpus_dir, "corpus_dir");
  Corpus corpus = load_corpus(cfg.corpus_dir, cfg.metadata_path);
  Vocab vocab = train_bpe(corpus, cfg.vocab_size);
  save_vocab_file(vocab, cfg.vocab_path);
  json m;
  m["tool"] = "longctx";
  m["version"] = kVersion;
  m["subcommand"] = "tokenize";
  m["config"] = json::parse(cfg.to_json_text());
  m["vocab_hash"] = vocab_hash(vocab);
  m["outputs"] = {cfg.vocab_path};
  write_text_file(out_path(cfg, "manifest.json"), m.dump(2) + "\n");
  write_text_file(out_path(cfg, "config.json"), cfg.to_json_text());
}

void run_train(const ExperimentConfig& cfg) {
  RunContext ctx = load_context(cfg, false);
  ModelConfig mc = cfg.model;
  mc.vocab_size = ctx.vocab.vocab_size;
  mc.vocab_hash = vocab_hash(ctx.vocab);
  std::vector<TokenSequence> streams;
  for (const TokenizedDoc& d : ctx.tokenized.docs) streams.push_back(d.tokens);
  TrainParams params = cfg.train;
  params.seed = cfg.seed;
  TrainResult result;
  Model model = train(mc, streams, params, &result);
  save_checkpoint(model, cfg.model_path);

  std::ostringstream loss_csv;
  loss_csv << "step,loss\n";
  for (size_t s = 0; s < result.loss_history.size(); ++s) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", result.loss_history[s]);
    loss_csv << s << ',' << buf << '\n';
  }
  const std::string loss_path = out_path(cfg, "train_loss.csv");
  write_text_file(loss_path, loss_csv.str());
  ctx.model = std::move(model);
  write_manifest(cfg, "train", {cfg.model_path, loss_path}, &ctx);
}

void run_sweep(const ExperimentConfig& cfg) {
  RunContext ctx = load_context(cfg, true);
  std::vector<TargetWindow> windows = sample_protocol_windows(cfg, ctx);
  Evaluator ev(*ctx.model, ctx.tokenized, ctx.freq,
               {cfg.protocol.copy_cutoff, cfg.protocol.loss_scale, ctx.threads});
  std::vector<EvalRecord> records = ev.prefix_sweep(windows, cfg.protocol.lengths);

  std::vector<std::string> outputs;
  const std::string records_path = out_path(cfg, "records.csv");
  write_text_file(records_path, records_to_csv(records));
  outputs.push_back(records_path);

  const bool labeled = !cfg.metadata_path.empty();
  for (const auto& grouping : standard_groupings(labeled)) {
    const std::string name = grouping_name(grouping);
    emit_curves(cfg, "sweep_" + name, sweep_curves(records, grouping, cfg.protocol.loss_scale),
                "prefix_len",
                {"Perplexity vs prefix length (" + name + ")", "prefix length (tokens)",
                 "perplexity", false},
                outputs);
  }
  // Overlap of the taxonomy sets at the reference (largest) prefix length.
  int ref_len = 0;
  for (const EvalRecord& r : records) ref_len = std::max(ref_len, r.prefix_len);
  std::vector<EvalRecord> at_ref;
  for (const EvalRecord& r : records)
    if (r.prefix_len == ref_len) at_ref.push_back(r);
  const std::string overlap_path = out_path(cfg, "overlap.csv");
  write_text_file(overlap_path, overlap_to_csv(overlap_matrix(at_ref)));
  outputs.push_back(overlap_path);
  write_manifest(cfg, "sweep", outputs, &ctx);
}

void run_perturb(const ExperimentConfig& cfg, PerturbKind kind) {
  RunContext ctx = load_context(cfg, true);
  std::vector<TargetWindow> windows = sample_protocol_windows(cfg, ctx);
  Evaluator ev(*ctx.model, ctx.tokenized, ctx.freq,
               {cfg.protocol.copy_cutoff, cfg.protocol.loss_scale, ctx.threads});

  PerturbationSweepOptions opts;
  opts.kind = kind;
  opts.m_values = cfg.protocol.m_values;
  opts.runs = cfg.protocol.runs;
  opts.base_seed = cfg.seed;
  opts.pad_id = ctx.vocab.pad_id;

  std::vector<EvalRecord> records;
  if (kind == PerturbKind::TokenDrop) {
    opts.drop_predicate = DropPredicate::TargetOccurrences;
    records = perturbation_sweep(ev, windows, opts);
    opts.drop_predicate = DropPredicate::RandomControl;
    std::vector<EvalRecord> control = perturbation_sweep(ev, windows, opts);
    records.insert(records.end(), control.begin(), control.end());
  } else {
    records = perturbation_sweep(ev, windows, opts);
  }

  std::vector<std::string> outputs;
  const std::string records_path = out_path(cfg, "perturb_records.csv");
  write_text_file(records_path, records_to_csv(records));
  outputs.push_back(records_path);

  const std::string kind_name = to_string(kind);
  for (const auto& grouping :
       std::vector<std::vector<std::string>>{{"perturb_kind"},
                                             {"perturb_kind", "frequency"},
                                             {"perturb_kind", "subword"},
                                             {"perturb_kind", "copy"}}) {
    const std::string name = grouping_name(grouping);
    emit_curves(cfg, "perturb_" + kind_name + "_" + name,
                aggregate(records, grouping, XField::PerturbM, cfg.protocol.loss_scale),
                "perturb_m",
                {"Perplexity vs perturbed prefix tokens (" + kind_name + ")",
                 "number of perturbed tokens from the prefix start", "perplexity", false},
                outputs);
  }
  write_manifest(cfg, "perturb", outputs, &ctx);
}

void run_copy_probe(const ExperimentConfig& cfg) {
  RunContext ctx = load_context(cfg, true);
  std::vector<TargetWindow> windows = sample_protocol_windows(cfg, ctx);
  Evaluator ev(*ctx.model, ctx.tokenized, ctx.freq,
               {cfg.protocol.copy_cutoff, cfg.protocol.loss_scale, ctx.threads});
  std::vector<EvalRecord> records = copy_probe(ev, windows, cfg.protocol.offsets);
  std::vector<EvalRecord> baseline = ev.eval_targets(windows, cfg.protocol.prefix_len);

  std::vector<std::string> outputs;
  const std::string records_path = out_path(cfg, "copy_probe_records.csv");
  write_text_file(records_path, probe_records_to_csv(records, "copy"));
  outputs.push_back(records_path);

  std::vector<AggregateCurve> curves = aggregate(records, {}, XField::PerturbM,
                                                 cfg.protocol.loss_scale);
  AggregateCurve base_curve;
  base_curve.group = "unperturbed";
  const double base_ppl = perplexity(baseline, cfg.protocol.loss_scale);
  for (int d : cfg.protocol.offsets)
    base_curve.points.push_back({static_cast<double>(d), base_ppl,
                                 static_cast<int64_t>(baseline.size())});
  curves.push_back(std::move(base_curve));
  emit_curves(cfg, "copy_probe", curves, "offset",
              {"Target perplexity vs pasted-copy offset", "tokens between copy and targets",
               "perplexity", false},
              outputs);
  write_manifest(cfg, "copy-probe", outputs, &ctx);
}

void run_suffix_id(const ExperimentConfig& cfg) {
  RunContext ctx = load_context(cfg, true);
  ModelScorer scorer(*ctx.model);
  std::vector<SuffixExample> task =
      build_suffix_task(ctx.tokenized, ctx.vocab, cfg.protocol.prefix_len,
                        cfg.protocol.suffix_len, cfg.protocol.n_negatives,
                        cfg.protocol.suffix_count, cfg.seed);
  std::vector<std::string> outputs;
  const std::string task_path = out_path(cfg, "suffix_task.jsonl");
  write_text_file(task_path, suffix_task_to_jsonl(task));
  outputs.push_back(task_path);

  // Accuracy vs prefix length at the configured suffix length.
  AggregateCurve acc_curve;
  acc_curve.group = "suffix-id accuracy";
  std::ostringstream detail_csv;
  bool wrote_header = false;
  for (int L : cfg.protocol.lengths) {
    if (L > cfg.protocol.prefix_len) continue;
    SuffixAccuracy acc = suffix_accuracy(scorer, task, ctx.tokenized, L, ctx.threads);
    acc_curve.points.push_back(
        {static_cast<double>(L), acc.accuracy, static_cast<int64_t>(task.size())});
    std::string csv = suffix_results_to_csv(task, acc.details, L, cfg.protocol.suffix_len);
    if (wrote_header) csv = csv.substr(csv.find('\n') + 1);
    detail_csv << csv;
    wrote_header = true;
  }
  const std::string detail_path = out_path(cfg, "suffix_results.csv");
  write_text_file(detail_path, detail_csv.str());
  outputs.push_back(detail_path);
  emit_curves(cfg, "suffix_accuracy_vs_prefix", {&acc_curve, 1}, "prefix_len",
              {"Suffix identification vs prefix length", "prefix length (tokens)", "accuracy",
               false},
              outputs);

  // Accuracy vs suffix length at the full prefix.
  std::vector<std::pair<int, double>> by_len = suffix_length_sweep(
      scorer, ctx.tokenized, ctx.vocab, cfg.protocol.prefix_len, cfg.protocol.suffix_lengths,
      cfg.protocol.n_negatives, cfg.protocol.suffix_count, cfg.seed, cfg.protocol.prefix_len,
      ctx.threads);
  AggregateCurve len_curve;
  len_curve.group = "suffix-id accuracy";
  for (const auto& [s, acc] : by_len)
    len_curve.points.push_back(
        {static_cast<double>(s), acc, static_cast<int64_t>(cfg.protocol.suffix_count)});
  emit_curves(cfg, "suffix_accuracy_vs_suffix_len", {&len_curve, 1}, "suffix_len",
              {"Suffix identification vs suffix length", "suffix length (tokens)", "accuracy",
               false},
              outputs);
  write_manifest(cfg, "suffix-id", outputs, &ctx);
}

void run_chapter_probe(const ExperimentConfig& cfg) {
  RunContext ctx = load_context(cfg, true);
  ChapterTemplate tmpl;
  tmpl.header_prefix = encode(ctx.vocab, cfg.chapter.header_text).ids;
  for (const std::string& num : cfg.chapter.numbers) {
    TokenSequence seq = encode(ctx.vocab, num);
    if (seq.ids.size() != 1)
      throw std::runtime_error("chapter-probe: number '" + num +
                               "' does not encode to a single token");
    tmpl.number_tokens.push_back(seq.ids[0]);
  }
  tmpl.n_sections = cfg.chapter.n_sections;
  tmpl.spacing = cfg.chapter.spacing;
  tmpl.start_number = cfg.chapter.start_number;
  tmpl.seed = cfg.seed;
  // Filler: most frequent word-ish tokens, excluding header/number tokens.
  std::vector<int> order;
  for (int id = 0; id < ctx.vocab.vocab_size; ++id)
    if (id != ctx.vocab.pad_id) order.push_back(id);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (ctx.freq.counts[static_cast<size_t>(a)] != ctx.freq.counts[static_cast<size_t>(b)])
      return ctx.freq.counts[static_cast<size_t>(a)] > ctx.freq.counts[static_cast<size_t>(b)];
    return a < b;
  });
  for (int id : order) {
    if (static_cast<int>(tmpl.filler_pool.size()) >= 64) break;
    if (std::find(tmpl.header_prefix.begin(), tmpl.header_prefix.end(), id) !=
        tmpl.header_prefix.end())
      continue;
    if (std::find(tmpl.number_tokens.begin(), tmpl.number_tokens.end(), id) !=
        tmpl.number_tokens.end())
      continue;
    if (ctx.freq.counts[static_cast<size_t>(id)] == 0) break;
    tmpl.filler_pool.push_back(id);
  }

  ChapterProbeReport report = chapter_increment_probe(*ctx.model, tmpl);
  json j;
  j["n_headers"] = report.n_headers;
  j["mean_nll_clean"] = report.mean_nll_clean;
  j["mean_nll_corrupted"] = report.mean_nll_corrupted;
  j["delta"] = report.delta;
  j["noise_bound"] = report.noise_bound;
  j["per_header_delta"] = report.per_header_delta;
  j["control_delta"] = report.control_delta;
  const std::string report_path = out_path(cfg, "chapter_probe.json");
  write_text_file(report_path, j.dump(2) + "\n");
  write_manifest(cfg, "chapter-probe", {report_path}, &ctx);
}

void run_report(const ExperimentConfig& cfg) {
  require_path(cfg.records_csv, "records_csv");
  std::vector<EvalRecord> records = records_from_csv(read_text_file(cfg.records_csv));
  if (records.empty()) throw std::runtime_error("report: no records in " + cfg.records_csv);
  std::vector<std::string> outputs;
  bool labeled = false;
  bool perturbed = false;
  for (const EvalRecord& r : records) {
    labeled = labeled || r.cats.labels.has_value();
    perturbed = perturbed || r.perturbed;
  }
  if (perturbed) {
    for (const auto& grouping :
         std::vector<std::vector<std::string>>{{"perturb_kind"}, {"perturb_kind", "copy"}}) {
      emit_curves(cfg, "report_perturb_" + grouping_name(grouping),
                  aggregate(records, grouping, XField::PerturbM, cfg.protocol.loss_scale),
                  "perturb_m",
                  {"Perplexity vs perturbed prefix tokens",
                   "number of perturbed tokens from the prefix start", "perplexity", false},
                  outputs);
    }
  } else {
    for (const auto& grouping : standard_groupings(labeled)) {
      emit_curves(cfg, "report_sweep_" + grouping_name(grouping),
                  sweep_curves(records, grouping, cfg.protocol.loss_scale), "prefix_len",
                  {"Perplexity vs prefix length", "prefix length (tokens)", "perplexity", false},
                  outputs);
    }
    int ref_len = 0;
    for (const EvalRecord& r : records) ref_len = std::max(ref_len, r.prefix_len);
    std::vector<EvalRecord> at_ref;
    for (const EvalRecord& r : records)
      if (r.prefix_len == ref_len) at_ref.push_back(r);
    const std::string overlap_path = out_path(cfg, "report_overlap.csv");
    write_text_file(overlap_path, overlap_to_csv(overlap_matrix(at_ref)));
    outputs.push_back(overlap_path);
  }
  write_manifest(cfg, "report", outputs, nullptr);
}

std::vector<EvalRecord> records_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("records_from_csv: empty input");
  if (line != kRecordCsvHeader)
    throw std::runtime_error("records_from_csv: unexpected header: " + line);
  std::vector<EvalRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) f.push_back(field);
    while (f.size() < 17) f.push_back("");
    EvalRecord r;
    r.doc_id = f[0];
    r.anchor = std::stoll(f[1]);
    r.target_index = std::stoi(f[2]);
    r.token_id = std::stoi(f[3]);
    r.prefix_len = std::stoi(f[4]);
    r.nll = std::stod(f[5]);
    r.cats.frequency = f[6] == "frequent" ? FreqClass::Frequent : FreqClass::Infrequent;
    r.cats.subword = f[7] == "first"       ? SubwordClass::First
                     : f[7] == "rest"      ? SubwordClass::Rest
                                           : SubwordClass::Singleton;
    r.cats.copy = f[8] == "local"    ? CopyClass::Local
                  : f[8] == "distant" ? CopyClass::Distant
                                      : CopyClass::Absent;
    r.cats.copy_distance = f[9].empty() ? -1 : std::stoll(f[9]);
    if (!f[10].empty()) {
      BookLabels labels;
      labels.genre = f[10] == "fiction" ? Genre::Fiction : Genre::Nonfiction;
      labels.continuity =
          f[11] == "continuous" ? Continuity::Continuous : Continuity::Discontinuous;
      labels.authorship = f[12] == "single" ? Authorship::Single : Authorship::Various;
      r.cats.labels = labels;
    }
    r.perturb_kind = f[13];
    r.perturbed = !r.perturb_kind.empty();
    r.perturb_m = f[14].empty() ? 0 : std::stoi(f[14]);
    r.run_index = f[15].empty() ? 0 : std::stoi(f[15]);
    r.seed = f[16].empty() ? 0 : std::stoull(f[16]);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace longctx
