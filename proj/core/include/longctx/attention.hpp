#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "longctx/mat.hpp"

namespace longctx {

enum class AttnKind : uint8_t { Full, Local, Routing };

struct AttentionSpec {
  AttnKind kind = AttnKind::Full;
  int window = 0;       // Local: queries see [i - window, i]
  int n_clusters = 0;   // Routing
  float centroid_decay = 0.999f;

  static AttentionSpec full() { return {AttnKind::Full, 0, 0, 0.999f}; }
  static AttentionSpec local(int w) { return {AttnKind::Local, w, 0, 0.999f}; }
  static AttentionSpec routing(int c, float decay = 0.999f) {
    return {AttnKind::Routing, 0, c, decay};
  }

  void validate() const {
    if (kind == AttnKind::Local && window < 1)
      throw std::invalid_argument("AttentionSpec: local window must be >= 1");
    if (kind == AttnKind::Routing) {
      if (n_clusters < 1) throw std::invalid_argument("AttentionSpec: n_clusters must be >= 1");
      if (!(centroid_decay > 0.0f && centroid_decay < 1.0f))
        throw std::invalid_argument("AttentionSpec: centroid_decay must lie in (0, 1)");
    }
  }
};

std::string to_string(AttnKind k);

// Attention weights and admissible sets from one forward pass, in CSR layout:
// query i attends to keys[offs[i]..offs[i+1]) with weights probs[...].
// Admissible keys per variant (position i is always included):
//   Full:    j in [0, i]
//   Local:   j in [max(0, i - window), i]
//   Routing: { j < i : cluster(K_j) == cluster(Q_i) } U { i }
template <class T>
struct AttentionState {
  std::vector<int> offs;
  std::vector<int> keys;
  std::vector<T> probs;
  std::vector<int> assign_q;  // routing: cluster id per query row
  std::vector<int> assign_k;  // routing: cluster id per key row
  size_t scored_pairs = 0;    // number of query-key score evaluations
};

// Single-head kernels over row-major [N x d_head] matrices. Scores are
// scaled dot products; the softmax is taken over the admissible set only.
template <class T>
Mat<T> full_attention(const Mat<T>& Q, const Mat<T>& K, const Mat<T>& V,
                      AttentionState<T>* state = nullptr);

template <class T>
Mat<T> local_attention(const Mat<T>& Q, const Mat<T>& K, const Mat<T>& V, int window,
                       AttentionState<T>* state = nullptr);

template <class T>
Mat<T> routing_attention(const Mat<T>& Q, const Mat<T>& K, const Mat<T>& V,
                         const Mat<T>& centroids, AttentionState<T>* state = nullptr);

template <class T>
void attention_forward(const AttentionSpec& spec, const Mat<T>& Q, const Mat<T>& K,
                       const Mat<T>& V, const Mat<T>* centroids, Mat<T>& out,
                       AttentionState<T>& state);

// Gradients through the masked softmax; accumulates into dQ/dK/dV. The
// routing cluster assignment is treated as locally constant.
template <class T>
void attention_backward(const Mat<T>& Q, const Mat<T>& K, const Mat<T>& V,
                        const AttentionState<T>& state, const Mat<T>& d_out, Mat<T>& dQ,
                        Mat<T>& dK, Mat<T>& dV);

// Nearest centroid per row (Euclidean, ties to the lowest cluster id).
template <class T>
std::vector<int> assign_clusters(const Mat<T>& vectors, const Mat<T>& centroids);

// EMA mini-batch k-means step: each centroid with assigned vectors moves to
// decay * c + (1 - decay) * mean(assigned); unassigned centroids stay put.
// Batches are scanned in order, rows ascending, so the update is
// deterministic.
template <class T>
void update_centroids(Mat<T>& centroids, const std::vector<const Mat<T>*>& batches, T decay);

}  // namespace longctx
