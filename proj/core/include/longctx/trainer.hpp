#pragma once

#include <cstdint>
#include <vector>

#include "longctx/model.hpp"
#include "longctx/tokenizer.hpp"

namespace longctx {

enum class Optimizer : uint8_t { Sgd, Adam };

struct TrainParams {
  float lr = 0.5f;
  int steps = 100;
  int batch = 4;
  int seq_len = 128;
  uint64_t seed = 1;
  float clip_norm = 1.0f;
  Optimizer optimizer = Optimizer::Sgd;
  float adam_beta1 = 0.9f;
  float adam_beta2 = 0.999f;
  float adam_eps = 1e-8f;
  int log_every = 0;  // 0: silent
};

struct TrainResult {
  std::vector<double> loss_history;  // one mean NLL per step
};

// Deterministic single-threaded SGD with teacher forcing. Batch sequences
// are drawn from documents proportionally to length; routing-layer centroids
// get one EMA k-means update per step from the batch's Q/K vectors.
Model train(const ModelConfig& cfg, const std::vector<TokenSequence>& corpus_tokens,
            const TrainParams& params, TrainResult* result = nullptr);

}  // namespace longctx
