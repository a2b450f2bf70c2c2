#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "longctx/attention.hpp"
#include "longctx/mat.hpp"

namespace longctx {

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 2;
  int d_model = 32;
  int d_ff = 64;
  int max_seq_len = 256;
  int vocab_size = 0;
  std::vector<AttentionSpec> attention;  // one spec per layer
  bool tie_embeddings = false;           // output head = token embedding transpose
  float ln_eps = 1e-5f;
  std::string vocab_hash;  // optional pairing with a serialized vocab

  int d_head() const { return d_model / n_heads; }
  void validate() const;
};

template <class T>
struct LayerParamsT {
  std::vector<T> ln1_g, ln1_b, ln2_g, ln2_b;
  Mat<T> wq, wk, wv, wo;  // [d_model x d_model]
  Mat<T> w1;              // [d_model x d_ff]
  std::vector<T> b1;
  Mat<T> w2;  // [d_ff x d_model]
  std::vector<T> b2;
  Mat<T> centroids;  // [n_clusters x d_head], routing layers only
};

// Pre-LN causal transformer LM. Position embeddings are anchored to the end
// of the position table: a sequence of length n occupies position ids
// [max_seq_len - n, max_seq_len). Truncating a prefix therefore never shifts
// the surviving tokens' positions, which keeps prefix-length comparisons and
// receptive-field checks exact.
template <class T>
struct ModelT {
  ModelConfig cfg;
  Mat<T> tok_emb;  // [vocab_size x d_model]
  Mat<T> pos_emb;  // [max_seq_len x d_model]
  std::vector<LayerParamsT<T>> layers;
  std::vector<T> lnf_g, lnf_b;
  Mat<T> head;  // [d_model x vocab_size]
};

using Model = ModelT<float>;

template <class T>
ModelT<T> init_model(const ModelConfig& cfg, uint64_t seed);

// All weights zero (uniform output head), layer norms at gamma=1.
template <class T>
ModelT<T> zero_model(const ModelConfig& cfg);

// Gradient container with the model's parameter shapes, all zero.
template <class T>
ModelT<T> grads_like(const ModelT<T>& m);

// Visits every gradient-trained parameter as a flat span, in a fixed order.
// Routing centroids are excluded: they are k-means state, not gradient
// parameters.
template <class T, class F>
void for_each_param(ModelT<T>& m, F&& fn) {
  auto vec = [&fn](std::vector<T>& v, const std::string& name) {
    fn(std::span<T>(v.data(), v.size()), name);
  };
  auto mat = [&fn](Mat<T>& w, const std::string& name) {
    fn(std::span<T>(w.a.data(), w.a.size()), name);
  };
  mat(m.tok_emb, "tok_emb");
  mat(m.pos_emb, "pos_emb");
  for (size_t l = 0; l < m.layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerParamsT<T>& lp = m.layers[l];
    vec(lp.ln1_g, p + "ln1_g");
    vec(lp.ln1_b, p + "ln1_b");
    mat(lp.wq, p + "wq");
    mat(lp.wk, p + "wk");
    mat(lp.wv, p + "wv");
    mat(lp.wo, p + "wo");
    vec(lp.ln2_g, p + "ln2_g");
    vec(lp.ln2_b, p + "ln2_b");
    mat(lp.w1, p + "w1");
    vec(lp.b1, p + "b1");
    mat(lp.w2, p + "w2");
    vec(lp.b2, p + "b2");
  }
  vec(m.lnf_g, "lnf_g");
  vec(m.lnf_b, "lnf_b");
  if (!m.cfg.tie_embeddings) mat(m.head, "head");
}

template <class T>
int64_t param_count(const ModelT<T>& m) {
  int64_t n = 0;
  for_each_param(const_cast<ModelT<T>&>(m),
                 [&n](std::span<T> s, const std::string&) { n += static_cast<int64_t>(s.size()); });
  return n;
}

// Per-position negative log likelihood: entry i is -log p(tokens[i+1] |
// tokens[0..i]), so the result has tokens.size() - 1 entries. Log-sum-exp
// runs in double for numerically stable perplexities.
template <class T>
std::vector<double> forward_nll(const ModelT<T>& m, std::span<const int> tokens);

// Collected per-head query/key rows of each routing layer, for the k-means
// centroid update. Entry l is empty for non-routing layers.
template <class T>
struct RoutingQK {
  std::vector<Mat<T>> per_layer;
};

// Teacher-forced cross-entropy over the sequence; accumulates parameter
// gradients of the mean NLL into `grads` and returns that mean.
template <class T>
double forward_backward(const ModelT<T>& m, std::span<const int> tokens, ModelT<T>& grads,
                        RoutingQK<T>* routing_qk = nullptr);

void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& text);

// Hash of a checkpoint file's bytes, recorded in run manifests.
std::string file_hash(const std::string& path);

}  // namespace longctx
