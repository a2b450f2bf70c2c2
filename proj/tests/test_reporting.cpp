#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "longctx/experiment.hpp"
#include "longctx/report.hpp"
#include "longctx/util.hpp"
#include "test_util.hpp"

using namespace longctx;
using test::TempDir;
using test::write_file;

namespace {

std::vector<EvalRecord> fixed_records() {
  std::vector<EvalRecord> records;
  EvalRecord a;
  a.doc_id = "alpha";
  a.anchor = 120;
  a.target_index = 0;
  a.token_id = 300;
  a.prefix_len = 64;
  a.nll = 2.302585093;
  a.cats.frequency = FreqClass::Frequent;
  a.cats.subword = SubwordClass::Singleton;
  a.cats.copy = CopyClass::Local;
  a.cats.copy_distance = 17;
  a.cats.labels = BookLabels{Genre::Fiction, Continuity::Continuous, Authorship::Single};
  records.push_back(a);

  EvalRecord b;
  b.doc_id = "beta";
  b.anchor = 3000;
  b.target_index = 4;
  b.token_id = 271;
  b.prefix_len = 2048;
  b.nll = 7.25;
  b.cats.frequency = FreqClass::Infrequent;
  b.cats.subword = SubwordClass::Rest;
  b.cats.copy = CopyClass::Distant;
  b.cats.copy_distance = 2500;
  b.cats.labels = BookLabels{Genre::Nonfiction, Continuity::Discontinuous, Authorship::Various};
  b.perturbed = true;
  b.perturb_kind = "shuffle";
  b.perturb_m = 512;
  b.run_index = 3;
  b.seed = 1234567890123456789ull;
  records.push_back(b);

  EvalRecord c;
  c.doc_id = "gamma";
  c.anchor = 77;
  c.target_index = 9;
  c.token_id = 5;
  c.prefix_len = 8;
  c.nll = 0.001234;
  c.cats.frequency = FreqClass::Infrequent;
  c.cats.subword = SubwordClass::First;
  c.cats.copy = CopyClass::Absent;
  records.push_back(c);
  return records;
}

std::vector<AggregateCurve> fixed_curves() {
  AggregateCurve overall;
  overall.group = "overall";
  overall.points = {{64, 41.25, 500}, {128, 36.75, 500}, {256, 35.0, 500}};
  AggregateCurve distant;
  distant.group = "copy=distant";
  distant.points = {{64, 210.0, 40}, {128, 170.5, 40}, {256, 150.25, 40}};
  return {overall, distant};
}

std::string golden_path(const std::string& name) {
  return std::string(LONGCTX_GOLDEN_DIR) + "/" + name;
}

}  // namespace

TEST_CASE("records CSV column order matches the golden file") {
  const std::string csv = records_to_csv(fixed_records());
  CHECK(csv.substr(0, csv.find('\n')) == kRecordCsvHeader);
  CHECK(csv == read_text_file(golden_path("records.csv")));
}

TEST_CASE("records CSV round trips through the parser") {
  const std::string csv = records_to_csv(fixed_records());
  std::vector<EvalRecord> parsed = records_from_csv(csv);
  REQUIRE(parsed.size() == 3);
  CHECK(records_to_csv(parsed) == csv);
  CHECK(parsed[1].perturb_kind == "shuffle");
  CHECK(parsed[1].seed == 1234567890123456789ull);
  CHECK(parsed[2].cats.copy == CopyClass::Absent);
  CHECK_FALSE(parsed[2].cats.labels.has_value());
}

TEST_CASE("vocab serialization matches the golden file") {
  Corpus corpus;
  corpus.documents.push_back({"book", "the cat sat on the mat. the end.", std::nullopt});
  Vocab vocab = train_bpe(corpus, Vocab::kNumBaseTypes + 6);
  CHECK(save_vocab(vocab) == read_text_file(golden_path("vocab.txt")));
}

TEST_CASE("chart rendering is deterministic and matches the golden file") {
  const AxesConfig axes{"Perplexity vs prefix length", "prefix length (tokens)", "perplexity",
                        false};
  const std::string svg1 = render_chart(fixed_curves(), axes);
  const std::string svg2 = render_chart(fixed_curves(), axes);
  CHECK(svg1 == svg2);
  CHECK(svg1 == read_text_file(golden_path("chart.svg")));
  CHECK(svg1.find("copy=distant") != std::string::npos);  // legend entry per curve
  CHECK(svg1.find("<svg") == 0);
}

TEST_CASE("single point curves render with a marker") {
  AggregateCurve c;
  c.group = "one";
  c.points = {{10.0, 5.0, 3}};
  const std::string svg = render_chart(std::vector<AggregateCurve>{c},
                                       {"t", "x", "y", false});
  CHECK(svg.find("<circle") != std::string::npos);
  CHECK(svg.find("<polyline") == std::string::npos);
  CHECK_THROWS(render_chart(std::vector<AggregateCurve>{}, {"t", "x", "y", false}));
}

TEST_CASE("curves CSV layout") {
  const std::string csv = curves_to_csv(fixed_curves(), "prefix_len");
  CHECK(csv.find("group,prefix_len,ppl,token_count\n") == 0);
  CHECK(csv.find("overall,64,41.25,500\n") != std::string::npos);
  CHECK(csv.find("copy=distant,256,150.25,40\n") != std::string::npos);
}

namespace {

// Writes a small labeled corpus with sentence structure and repeated rare
// words, enough for every pipeline to run.
void write_tiny_corpus(const TempDir& dir) {
  std::filesystem::create_directories(dir.path() / "corpus");
  Rng rng(1234);
  const std::vector<std::string> common = {
      "the",  "a",      "cat",    "dog",   "ran",    "sat",   "saw",    "big",
      "old",  "new",    "was",    "here",  "window", "house", "garden", "river",
      "story", "night", "morning", "under", "walked", "quiet", "yellow", "stone"};
  for (int d = 0; d < 3; ++d) {
    std::string text;
    const std::string rare = "zeb" + std::string(1, static_cast<char>('a' + d)) + "ra";
    for (int s = 0; s < 260; ++s) {
      const int words = 3 + static_cast<int>(rng.next_below(4));
      for (int w = 0; w < words; ++w) {
        text += common[rng.next_below(common.size())];
        text.push_back(' ');
      }
      if (s % 40 == 7) text += rare + " ";
      text.back() = '.';
      text.push_back(' ');
    }
    text.pop_back();
    write_file((dir.path() / "corpus" / ("book" + std::to_string(d) + ".txt")).string(), text);
  }
  write_file((dir.path() / "meta.jsonl").string(),
             R"({"doc_id":"book0","genre":"fiction","continuity":"continuous","authorship":"single"})"
             "\n"
             R"({"doc_id":"book1","genre":"nonfiction","continuity":"discontinuous","authorship":"various"})"
             "\n"
             R"({"doc_id":"book2","genre":"fiction","continuity":"discontinuous","authorship":"single"})"
             "\n");
}

ExperimentConfig tiny_experiment(const TempDir& dir) {
  ExperimentConfig cfg;
  cfg.corpus_dir = (dir.path() / "corpus").string();
  cfg.metadata_path = (dir.path() / "meta.jsonl").string();
  cfg.vocab_path = (dir.path() / "vocab.txt").string();
  cfg.vocab_size = Vocab::kNumBaseTypes + 24;
  cfg.model_path = (dir.path() / "model.ckpt").string();
  cfg.out_dir = (dir.path() / "out").string();
  cfg.seed = 5;
  cfg.threads = 1;
  cfg.model.n_layers = 2;
  cfg.model.n_heads = 2;
  cfg.model.d_model = 16;
  cfg.model.d_ff = 32;
  cfg.model.max_seq_len = 160;
  cfg.model.attention = {AttentionSpec::local(8), AttentionSpec::routing(2, 0.99f)};
  cfg.train.lr = 0.5f;
  cfg.train.steps = 30;
  cfg.train.batch = 2;
  cfg.train.seq_len = 96;
  cfg.protocol.prefix_len = 96;
  cfg.protocol.n_targets = 4;
  cfg.protocol.exclude_last = 10;
  cfg.protocol.n_windows = 6;
  cfg.protocol.copy_cutoff = 32;
  cfg.protocol.lengths = {16, 48, 96};
  cfg.protocol.m_values = {0, 32};
  cfg.protocol.runs = 2;
  cfg.protocol.offsets = {0, 8};
  cfg.protocol.suffix_len = 12;
  cfg.protocol.suffix_lengths = {6, 12};
  cfg.protocol.suffix_count = 8;
  cfg.chapter.n_sections = 4;
  cfg.chapter.spacing = 24;
  cfg.chapter.header_text = "\nCHAPTER ";
  return cfg;
}

}  // namespace

TEST_CASE("experiment pipelines produce reproducible outputs") {
  TempDir dir("pipeline");
  write_tiny_corpus(dir);
  ExperimentConfig cfg = tiny_experiment(dir);

  run_tokenize(cfg);
  CHECK(std::filesystem::exists(cfg.vocab_path));
  run_train(cfg);
  CHECK(std::filesystem::exists(cfg.model_path));
  CHECK(std::filesystem::exists(dir.path() / "out" / "train_loss.csv"));

  run_sweep(cfg);
  const std::string records_path = (dir.path() / "out" / "records.csv").string();
  const std::string first = read_text_file(records_path);
  CHECK(std::filesystem::exists(dir.path() / "out" / "sweep_overall.svg"));
  CHECK(std::filesystem::exists(dir.path() / "out" / "overlap.csv"));
  CHECK(std::filesystem::exists(dir.path() / "out" / "manifest.json"));

  // A rerun from the emitted resolved config reproduces the CSV exactly.
  ExperimentConfig again =
      load_experiment_config((dir.path() / "out" / "config.json").string());
  again.out_dir = (dir.path() / "out2").string();
  run_sweep(again);
  CHECK(read_text_file((dir.path() / "out2" / "records.csv").string()) == first);

  // Perturbation, probes and report pipelines run end to end.
  run_perturb(cfg, PerturbKind::Shuffle);
  CHECK(std::filesystem::exists(dir.path() / "out" / "perturb_records.csv"));
  run_perturb(cfg, PerturbKind::TokenDrop);
  {
    std::vector<EvalRecord> drop_records =
        records_from_csv(read_text_file((dir.path() / "out" / "perturb_records.csv").string()));
    bool saw_target = false, saw_control = false;
    for (const EvalRecord& r : drop_records) {
      saw_target = saw_target || r.perturb_kind == "token_drop_targets";
      saw_control = saw_control || r.perturb_kind == "token_drop_control";
    }
    CHECK(saw_target);
    CHECK(saw_control);
  }
  run_copy_probe(cfg);
  CHECK(std::filesystem::exists(dir.path() / "out" / "copy_probe.svg"));
  run_suffix_id(cfg);
  CHECK(std::filesystem::exists(dir.path() / "out" / "suffix_task.jsonl"));
  CHECK(std::filesystem::exists(dir.path() / "out" / "suffix_accuracy_vs_prefix.svg"));
  run_chapter_probe(cfg);
  CHECK(std::filesystem::exists(dir.path() / "out" / "chapter_probe.json"));

  ExperimentConfig report_cfg = cfg;
  report_cfg.records_csv = records_path;
  report_cfg.out_dir = (dir.path() / "report").string();
  run_report(report_cfg);
  CHECK(std::filesystem::exists(dir.path() / "report" / "report_sweep_overall.svg"));
  CHECK(std::filesystem::exists(dir.path() / "report" / "report_overlap.csv"));
}

TEST_CASE("vocab hash mismatch is rejected") {
  TempDir dir("hashcheck");
  write_tiny_corpus(dir);
  ExperimentConfig cfg = tiny_experiment(dir);
  run_tokenize(cfg);
  run_train(cfg);
  // Retrain the vocab with a different size: hash changes, checkpoint stale.
  cfg.vocab_size += 5;
  run_tokenize(cfg);
  CHECK_THROWS_WITH_AS(run_sweep(cfg), doctest::Contains("mismatch"), std::runtime_error);
}

TEST_CASE("cli subcommands run end to end") {
  TempDir dir("cli");
  write_tiny_corpus(dir);
  ExperimentConfig cfg = tiny_experiment(dir);
  const std::string config_path = (dir.path() / "config.json").string();
  write_file(config_path, cfg.to_json_text());
  const std::string cli = LONGCTX_CLI_PATH;
  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " >" + dir.str("stdout.log") + " 2>" +
                            dir.str("stderr.log");
    return std::system(cmd.c_str());
  };

  CHECK(run("tokenize --config " + config_path) == 0);
  CHECK(run("train --config " + config_path) == 0);
  CHECK(run("sweep --config " + config_path) == 0);
  CHECK(run("perturb --config " + config_path + " --kind shuffle") == 0);
  CHECK(run("report --config " + config_path + " --records " +
            (dir.path() / "out" / "records.csv").string() + " --out " +
            (dir.path() / "cli_report").string()) == 0);
  CHECK(std::filesystem::exists(dir.path() / "cli_report" / "manifest.json"));

  // Missing model file: nonzero exit and a message naming the path.
  ExperimentConfig broken = cfg;
  broken.model_path = (dir.path() / "missing.ckpt").string();
  const std::string broken_path = (dir.path() / "broken.json").string();
  write_file(broken_path, broken.to_json_text());
  CHECK(run("sweep --config " + broken_path) != 0);
  const std::string err = read_text_file(dir.str("stderr.log"));
  CHECK(err.find("missing.ckpt") != std::string::npos);

  // Unknown flag: nonzero exit.
  CHECK(run("sweep --config " + config_path + " --no-such-flag") != 0);
  CHECK(run("--version") == 0);
}
