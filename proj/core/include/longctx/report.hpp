#pragma once

#include <span>
#include <string>
#include <vector>

#include "longctx/evaluator.hpp"
#include "longctx/probes.hpp"

namespace longctx {

// Fixed column order; golden-tested. copy_distance, perturb fields and seed
// are empty when not applicable.
inline constexpr const char* kRecordCsvHeader =
    "doc_id,anchor,target_index,token_id,prefix_len,nll,frequency,subword,copy,copy_distance,"
    "genre,continuity,authorship,perturb_kind,perturb_m,run_index,seed";

// Probe rows extend the record schema with probe_kind, offset_or_suffix_len
// and candidate_rank.
inline constexpr const char* kProbeCsvHeader =
    "doc_id,anchor,target_index,token_id,prefix_len,nll,frequency,subword,copy,copy_distance,"
    "genre,continuity,authorship,perturb_kind,perturb_m,run_index,seed,probe_kind,"
    "offset_or_suffix_len,candidate_rank";

std::string records_to_csv(std::span<const EvalRecord> records);
std::string probe_records_to_csv(std::span<const EvalRecord> records,
                                 const std::string& probe_kind);
std::string suffix_results_to_csv(std::span<const SuffixExample> examples,
                                  std::span<const SuffixExampleResult> results, int prefix_len,
                                  int suffix_len);

std::string curves_to_csv(std::span<const AggregateCurve> curves, const std::string& x_name);

struct AxesConfig {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
};

// Deterministic static SVG line chart, one series per curve with a legend.
std::string render_chart(std::span<const AggregateCurve> curves, const AxesConfig& axes);

std::string overlap_to_csv(const OverlapMatrix& m);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace longctx
