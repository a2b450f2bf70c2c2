#pragma once

#include <optional>
#include <string>
#include <vector>

#include "longctx/corpus.hpp"
#include "longctx/evaluator.hpp"
#include "longctx/model.hpp"
#include "longctx/perturbations.hpp"
#include "longctx/probes.hpp"
#include "longctx/trainer.hpp"

namespace longctx {

struct ProtocolParams {
  int prefix_len = 1024;
  int n_targets = 10;
  int exclude_last = 40;
  int n_windows = 100;
  int copy_cutoff = 2000;
  double loss_scale = 1.0;
  std::vector<int> lengths = {64, 128, 256, 512, 1024};
  std::vector<int> m_values = {0, 64, 256, 512};
  int runs = 5;
  std::vector<int> offsets = {0, 16, 64, 256};
  int suffix_len = 128;
  std::vector<int> suffix_lengths = {8, 16, 32, 64, 128};
  int n_negatives = 5;
  int suffix_count = 200;
};

struct ChapterParams {
  std::string header_text = "\nCHAPTER ";
  std::vector<std::string> numbers = {"1", "2", "3", "4", "5", "6", "7", "8", "9"};
  int n_sections = 8;
  int spacing = 64;
  int start_number = 0;
};

struct ExperimentConfig {
  std::string corpus_dir;
  std::string metadata_path;  // empty: unlabeled corpus
  std::string vocab_path = "vocab.txt";
  int vocab_size = 512;
  std::string model_path = "model.ckpt";
  std::string records_csv;  // input for the report pipeline
  std::string out_dir = "out";
  uint64_t seed = 1;
  int threads = 0;  // 0: hardware concurrency; LONGCTX_THREADS overrides
  ModelConfig model;
  TrainParams train;
  ProtocolParams protocol;
  ChapterParams chapter;

  static ExperimentConfig from_json_text(const std::string& text);
  std::string to_json_text() const;  // fully resolved, no silent defaults
};

ExperimentConfig load_experiment_config(const std::string& path);

// Pipelines behind the CLI subcommands. Each writes its outputs plus
// config.json and manifest.json under cfg.out_dir.
void run_tokenize(const ExperimentConfig& cfg);
void run_train(const ExperimentConfig& cfg);
void run_sweep(const ExperimentConfig& cfg);
void run_perturb(const ExperimentConfig& cfg, PerturbKind kind);
void run_copy_probe(const ExperimentConfig& cfg);
void run_suffix_id(const ExperimentConfig& cfg);
void run_chapter_probe(const ExperimentConfig& cfg);
void run_report(const ExperimentConfig& cfg);

std::vector<EvalRecord> records_from_csv(const std::string& csv);

}  // namespace longctx
