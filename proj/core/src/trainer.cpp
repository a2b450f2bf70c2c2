#include "longctx/trainer.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "longctx/util.hpp"

namespace longctx {

Model train(const ModelConfig& cfg, const std::vector<TokenSequence>& corpus_tokens,
            const TrainParams& params, TrainResult* result) {
  cfg.validate();
  if (params.seq_len < 2 || params.seq_len > cfg.max_seq_len)
    throw std::invalid_argument("train: seq_len must be in [2, max_seq_len]");
  if (params.batch < 1 || params.steps < 0) throw std::invalid_argument("train: bad batch/steps");

  std::vector<size_t> usable;
  int64_t total_tokens = 0;
  for (size_t d = 0; d < corpus_tokens.size(); ++d) {
    if (static_cast<int64_t>(corpus_tokens[d].size()) >= params.seq_len) {
      usable.push_back(d);
      total_tokens += static_cast<int64_t>(corpus_tokens[d].size());
    }
  }
  if (usable.empty())
    throw std::runtime_error("train: no document has at least seq_len tokens");

  Model model = init_model<float>(cfg, params.seed);
  Model grads = grads_like(model);
  Model adam_m = grads_like(model);
  Model adam_v = grads_like(model);
  Rng rng(mix64(params.seed ^ 0x7261696e6572ull));

  if (result != nullptr) result->loss_history.clear();

  for (int step = 0; step < params.steps; ++step) {
    for_each_param(grads,
                   [](std::span<float> s, const std::string&) { std::fill(s.begin(), s.end(), 0.0f); });
    std::vector<RoutingQK<float>> batch_qk(static_cast<size_t>(params.batch));
    double step_loss = 0.0;
    for (int b = 0; b < params.batch; ++b) {
      // Document chosen proportionally to token count, then a uniform start.
      int64_t pick = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(total_tokens)));
      size_t doc = usable.back();
      for (size_t u : usable) {
        const int64_t len = static_cast<int64_t>(corpus_tokens[u].size());
        if (pick < len) {
          doc = u;
          break;
        }
        pick -= len;
      }
      const auto& ids = corpus_tokens[doc].ids;
      const int64_t max_start = static_cast<int64_t>(ids.size()) - params.seq_len;
      const int64_t start =
          static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(max_start + 1)));
      std::span<const int> seq(ids.data() + start, static_cast<size_t>(params.seq_len));
      step_loss += forward_backward<float>(model, seq, grads, &batch_qk[static_cast<size_t>(b)]);
    }
    step_loss /= static_cast<double>(params.batch);
    if (!std::isfinite(step_loss))
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
    if (result != nullptr) result->loss_history.push_back(step_loss);
    if (params.log_every > 0 && step % params.log_every == 0)
      std::cerr << "step " << step << " loss " << step_loss << "\n";

    // Gradients hold the sum over the batch; scale to the mean, clip, apply.
    const float batch_scale = 1.0f / static_cast<float>(params.batch);
    double sq_norm = 0.0;
    for_each_param(grads, [&](std::span<float> s, const std::string&) {
      for (float& g : s) {
        g *= batch_scale;
        sq_norm += static_cast<double>(g) * static_cast<double>(g);
      }
    });
    float clip_scale = 1.0f;
    if (params.clip_norm > 0.0f) {
      const double norm = std::sqrt(sq_norm);
      if (norm > static_cast<double>(params.clip_norm))
        clip_scale = static_cast<float>(static_cast<double>(params.clip_norm) / norm);
    }
    {
      std::vector<std::span<float>> param_spans, grad_spans, m_spans, v_spans;
      for_each_param(model,
                     [&](std::span<float> s, const std::string&) { param_spans.push_back(s); });
      for_each_param(grads,
                     [&](std::span<float> s, const std::string&) { grad_spans.push_back(s); });
      for_each_param(adam_m, [&](std::span<float> s, const std::string&) { m_spans.push_back(s); });
      for_each_param(adam_v, [&](std::span<float> s, const std::string&) { v_spans.push_back(s); });
      if (params.optimizer == Optimizer::Sgd) {
        const float scale = params.lr * clip_scale;
        for (size_t i = 0; i < param_spans.size(); ++i)
          for (size_t j = 0; j < param_spans[i].size(); ++j)
            param_spans[i][j] -= scale * grad_spans[i][j];
      } else {
        const float b1 = params.adam_beta1, b2 = params.adam_beta2;
        const double t = static_cast<double>(step) + 1.0;
        const float corr1 = 1.0f - static_cast<float>(std::pow(b1, t));
        const float corr2 = 1.0f - static_cast<float>(std::pow(b2, t));
        for (size_t i = 0; i < param_spans.size(); ++i)
          for (size_t j = 0; j < param_spans[i].size(); ++j) {
            const float g = clip_scale * grad_spans[i][j];
            float& mm = m_spans[i][j];
            float& vv = v_spans[i][j];
            mm = b1 * mm + (1.0f - b1) * g;
            vv = b2 * vv + (1.0f - b2) * g * g;
            const float mhat = mm / corr1;
            const float vhat = vv / corr2;
            param_spans[i][j] -= params.lr * mhat / (std::sqrt(vhat) + params.adam_eps);
          }
      }
    }

    for (int l = 0; l < cfg.n_layers; ++l) {
      const AttentionSpec& spec = cfg.attention[static_cast<size_t>(l)];
      if (spec.kind != AttnKind::Routing) continue;
      std::vector<const Mat<float>*> mats;
      for (const RoutingQK<float>& qk : batch_qk)
        if (!qk.per_layer[static_cast<size_t>(l)].a.empty())
          mats.push_back(&qk.per_layer[static_cast<size_t>(l)]);
      update_centroids(model.layers[static_cast<size_t>(l)].centroids, mats,
                       spec.centroid_decay);
    }
  }
  return model;
}

}  // namespace longctx
