// longctx: train small sparse-attention LMs and run long-context analyses.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "longctx/experiment.hpp"
#include "longctx/util.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string corpus_dir;
  std::string model_path;
  std::string out_dir;
  std::string records_csv;
  int64_t seed = -1;
  int threads = -1;

  void attach(CLI::App* cmd, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", config_path, "experiment config JSON");
    if (needs_config) opt->required();
    cmd->add_option("--corpus", corpus_dir, "corpus directory of .txt files");
    cmd->add_option("--model", model_path, "model checkpoint path");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--records", records_csv, "records CSV (report subcommand)");
    cmd->add_option("--seed", seed, "seed override");
    cmd->add_option("--threads", threads,
                    "worker threads (0 = all cores; env LONGCTX_THREADS overrides)");
  }

  longctx::ExperimentConfig resolve() const {
    longctx::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = longctx::load_experiment_config(config_path);
    if (!corpus_dir.empty()) cfg.corpus_dir = corpus_dir;
    if (!model_path.empty()) cfg.model_path = model_path;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!records_csv.empty()) cfg.records_csv = records_csv;
    if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
    if (threads >= 0) cfg.threads = threads;
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"longctx: long-context behavior lab for sparse-attention language models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("longctx ") + longctx::kVersion);

  CommonFlags tokenize_flags, train_flags, sweep_flags, perturb_flags, copy_flags, suffix_flags,
      chapter_flags, report_flags;
  std::string perturb_kind = "shuffle";

  auto* tokenize = app.add_subcommand("tokenize", "train a BPE vocab on a corpus");
  tokenize_flags.attach(tokenize);
  auto* train = app.add_subcommand("train", "train a model on a tokenized corpus");
  train_flags.attach(train);
  auto* sweep = app.add_subcommand("sweep", "prefix-length perplexity sweep");
  sweep_flags.attach(sweep);
  auto* perturb = app.add_subcommand("perturb", "context perturbation sweep");
  perturb_flags.attach(perturb);
  perturb->add_option("--kind", perturb_kind, "shuffle | replace | drop")
      ->check(CLI::IsMember({"shuffle", "replace", "drop"}));
  auto* copy = app.add_subcommand("copy-probe", "sequence copy-paste probe");
  copy_flags.attach(copy);
  auto* suffix = app.add_subcommand("suffix-id", "suffix identification task");
  suffix_flags.attach(suffix);
  auto* chapter = app.add_subcommand("chapter-probe", "chapter-number increment probe");
  chapter_flags.attach(chapter);
  auto* report = app.add_subcommand("report", "aggregate a records CSV into curves and charts");
  report_flags.attach(report);

  CLI11_PARSE(app, argc, argv);

  try {
    if (tokenize->parsed()) {
      longctx::run_tokenize(tokenize_flags.resolve());
    } else if (train->parsed()) {
      longctx::run_train(train_flags.resolve());
    } else if (sweep->parsed()) {
      longctx::run_sweep(sweep_flags.resolve());
    } else if (perturb->parsed()) {
      longctx::PerturbKind kind = longctx::PerturbKind::Shuffle;
      if (perturb_kind == "replace") kind = longctx::PerturbKind::RandomReplace;
      if (perturb_kind == "drop") kind = longctx::PerturbKind::TokenDrop;
      longctx::run_perturb(perturb_flags.resolve(), kind);
    } else if (copy->parsed()) {
      longctx::run_copy_probe(copy_flags.resolve());
    } else if (suffix->parsed()) {
      longctx::run_suffix_id(suffix_flags.resolve());
    } else if (chapter->parsed()) {
      longctx::run_chapter_probe(chapter_flags.resolve());
    } else if (report->parsed()) {
      longctx::run_report(report_flags.resolve());
    }
  } catch (const std::exception& e) {
    std::cerr << "longctx: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
