#include "longctx/attention.hpp"

#include <algorithm>
#include <cmath>

namespace longctx {

std::string to_string(AttnKind k) {
  switch (k) {
    case AttnKind::Full: return "full";
    case AttnKind::Local: return "local";
    case AttnKind::Routing: return "routing";
  }
  return "?";
}

namespace {

template <class T>
void check_dims(const Mat<T>& Q, const Mat<T>& K, const Mat<T>& V) {
  if (Q.cols != K.cols || K.rows != V.rows || Q.rows != K.rows)
    throw std::invalid_argument("attention: Q/K/V dimension mismatch");
  if (Q.cols < 1 || Q.rows < 1) throw std::invalid_argument("attention: empty input");
  if (V.cols < 1) throw std::invalid_argument("attention: empty V");
}

// Softmax over the admissible rows already listed in state.keys/offs.
template <class T>
void masked_softmax_context(const Mat<T>& Q, const Mat<T>& K, const Mat<T>& V, Mat<T>& out,
                            AttentionState<T>& state) {
  const int n = Q.rows;
  const int d = Q.cols;
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  state.probs.assign(state.keys.size(), T(0));
  state.scored_pairs = state.keys.size();
  out = Mat<T>(n, V.cols);
  std::vector<T> scores;
  for (int i = 0; i < n; ++i) {
    const int begin = state.offs[static_cast<size_t>(i)];
    const int end = state.offs[static_cast<size_t>(i) + 1];
    const int cnt = end - begin;
    scores.assign(static_cast<size_t>(cnt), T(0));
    const T* qi = Q.row(i);
    T max_score = -std::numeric_limits<T>::infinity();
    for (int s = 0; s < cnt; ++s) {
      const T* kj = K.row(state.keys[static_cast<size_t>(begin + s)]);
      T acc = T(0);
      for (int p = 0; p < d; ++p) acc += qi[p] * kj[p];
      scores[static_cast<size_t>(s)] = acc * scale;
      max_score = std::max(max_score, scores[static_cast<size_t>(s)]);
    }
    T denom = T(0);
    for (int s = 0; s < cnt; ++s) {
      T e = std::exp(scores[static_cast<size_t>(s)] - max_score);
      scores[static_cast<size_t>(s)] = e;
      denom += e;
    }
    T* oi = out.row(i);
    for (int s = 0; s < cnt; ++s) {
      const T p = scores[static_cast<size_t>(s)] / denom;
      state.probs[static_cast<size_t>(begin + s)] = p;
      const T* vj = V.row(state.keys[static_cast<size_t>(begin + s)]);
      for (int c = 0; c < V.cols; ++c) oi[c] += p * vj[c];
    }
  }
}

template <class T>
void build_full_sets(int n, AttentionState<T>& state) {
  state.offs.assign(static_cast<size_t>(n) + 1, 0);
  state.keys.clear();
  state.keys.reserve(static_cast<size_t>(n) * (static_cast<size_t>(n) + 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) state.keys.push_back(j);
    state.offs[static_cast<size_t>(i) + 1] = static_cast<int>(state.keys.size());
  }
}

template <class T>
void build_local_sets(int n, int window, AttentionState<T>& state) {
  state.offs.assign(static_cast<size_t>(n) + 1, 0);
  state.keys.clear();
  for (int i = 0; i < n; ++i) {
    for (int j = std::max(0, i - window); j <= i; ++j) state.keys.push_back(j);
    state.offs[static_cast<size_t>(i) + 1] = static_cast<int>(state.keys.size());
  }
}

template <class T>
void build_routing_sets(const Mat<T>& Q, const Mat<T>& K, const Mat<T>& centroids,
                        AttentionState<T>& state) {
  const int n = Q.rows;
  state.assign_q = assign_clusters(Q, centroids);
  state.assign_k = assign_clusters(K, centroids);
  // Bucket keys by cluster, ascending position within each bucket.
  std::vector<std::vector<int>> buckets(static_cast<size_t>(centroids.rows));
  for (int j = 0; j < n; ++j)
    buckets[static_cast<size_t>(state.assign_k[static_cast<size_t>(j)])].push_back(j);
  std::vector<size_t> cursor(static_cast<size_t>(centroids.rows), 0);
  state.offs.assign(static_cast<size_t>(n) + 1, 0);
  state.keys.clear();
  for (int i = 0; i < n; ++i) {
    const auto& bucket = buckets[static_cast<size_t>(state.assign_q[static_cast<size_t>(i)])];
    for (int j : bucket) {
      if (j >= i) break;
      state.keys.push_back(j);
    }
    state.keys.push_back(i);  // self is always admissible
    state.offs[static_cast<size_t>(i) + 1] = static_cast<int>(state.keys.size());
  }
  (void)cursor;
}

}  // namespace

template <class T>
std::vector<int> assign_clusters(const Mat<T>& vectors, const Mat<T>& centroids) {
  if (centroids.rows < 1) throw std::invalid_argument("assign_clusters: zero centroids");
  if (centroids.cols != vectors.cols)
    throw std::invalid_argument("assign_clusters: dimension mismatch");
  std::vector<int> assign(static_cast<size_t>(vectors.rows), 0);
  for (int i = 0; i < vectors.rows; ++i) {
    const T* v = vectors.row(i);
    double best = std::numeric_limits<double>::infinity();
    int best_c = 0;
    for (int c = 0; c < centroids.rows; ++c) {
      const T* mu = centroids.row(c);
      double dist = 0.0;
      for (int p = 0; p < vectors.cols; ++p) {
        const double diff = static_cast<double>(v[p]) - static_cast<double>(mu[p]);
        dist += diff * diff;
      }
      if (dist < best) {  // strict: ties keep the lowest cluster id
        best = dist;
        best_c = c;
      }
    }
    assign[static_cast<size_t>(i)] = best_c;
  }
  return assign;
}

template <class T>
void attention_forward(const AttentionSpec& spec, const Mat<T>& Q, const Mat<T>& K,
                       const Mat<T>& V, const Mat<T>* centroids, Mat<T>& out,
                       AttentionState<T>& state) {
  check_dims(Q, K, V);
  spec.validate();
  switch (spec.kind) {
    case AttnKind::Full:
      build_full_sets<T>(Q.rows, state);
      break;
    case AttnKind::Local:
      build_local_sets<T>(Q.rows, spec.window, state);
      break;
    case AttnKind::Routing:
      if (centroids == nullptr) throw std::invalid_argument("routing_attention: zero centroids");
      build_routing_sets(Q, K, *centroids, state);
      break;
  }
  masked_softmax_context(Q, K, V, out, state);
}

template <class T>
void attention_backward(const Mat<T>& Q, const Mat<T>& K, const Mat<T>& V,
                        const AttentionState<T>& state, const Mat<T>& d_out, Mat<T>& dQ,
                        Mat<T>& dK, Mat<T>& dV) {
  const int n = Q.rows;
  const int d = Q.cols;
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  std::vector<T> dprobs;
  for (int i = 0; i < n; ++i) {
    const int begin = state.offs[static_cast<size_t>(i)];
    const int end = state.offs[static_cast<size_t>(i) + 1];
    const int cnt = end - begin;
    const T* dout_i = d_out.row(i);
    dprobs.assign(static_cast<size_t>(cnt), T(0));
    T inner = T(0);  // sum_j p_j * dp_j
    for (int s = 0; s < cnt; ++s) {
      const int j = state.keys[static_cast<size_t>(begin + s)];
      const T p = state.probs[static_cast<size_t>(begin + s)];
      const T* vj = V.row(j);
      T dp = T(0);
      for (int c = 0; c < V.cols; ++c) dp += dout_i[c] * vj[c];
      dprobs[static_cast<size_t>(s)] = dp;
      inner += p * dp;
      T* dvj = dV.row(j);
      for (int c = 0; c < V.cols; ++c) dvj[c] += p * dout_i[c];
    }
    const T* qi = Q.row(i);
    T* dqi = dQ.row(i);
    for (int s = 0; s < cnt; ++s) {
      const int j = state.keys[static_cast<size_t>(begin + s)];
      const T p = state.probs[static_cast<size_t>(begin + s)];
      const T ds = p * (dprobs[static_cast<size_t>(s)] - inner) * scale;
      const T* kj = K.row(j);
      T* dkj = dK.row(j);
      for (int c = 0; c < d; ++c) {
        dqi[c] += ds * kj[c];
        dkj[c] += ds * qi[c];
      }
    }
  }
}

template <class T>
Mat<T> full_attention(const Mat<T>& Q, const Mat<T>& K, const Mat<T>& V,
                      AttentionState<T>* state) {
  AttentionState<T> local_state;
  AttentionState<T>& st = state != nullptr ? *state : local_state;
  Mat<T> out;
  attention_forward<T>(AttentionSpec::full(), Q, K, V, nullptr, out, st);
  return out;
}

template <class T>
Mat<T> local_attention(const Mat<T>& Q, const Mat<T>& K, const Mat<T>& V, int window,
                       AttentionState<T>* state) {
  AttentionState<T> local_state;
  AttentionState<T>& st = state != nullptr ? *state : local_state;
  Mat<T> out;
  attention_forward<T>(AttentionSpec::local(window), Q, K, V, nullptr, out, st);
  return out;
}

template <class T>
Mat<T> routing_attention(const Mat<T>& Q, const Mat<T>& K, const Mat<T>& V,
                         const Mat<T>& centroids, AttentionState<T>* state) {
  AttentionState<T> local_state;
  AttentionState<T>& st = state != nullptr ? *state : local_state;
  Mat<T> out;
  attention_forward(AttentionSpec::routing(centroids.rows), Q, K, V, &centroids, out, st);
  return out;
}

template <class T>
void update_centroids(Mat<T>& centroids, const std::vector<const Mat<T>*>& batches, T decay) {
  if (!(decay > T(0) && decay < T(1)))
    throw std::invalid_argument("update_centroids: decay must lie in (0, 1)");
  const int c = centroids.rows;
  const int d = centroids.cols;
  std::vector<double> sums(static_cast<size_t>(c) * static_cast<size_t>(d), 0.0);
  std::vector<int64_t> counts(static_cast<size_t>(c), 0);
  for (const Mat<T>* batch : batches) {
    if (batch->cols != d) throw std::invalid_argument("update_centroids: dimension mismatch");
    std::vector<int> assign = assign_clusters(*batch, centroids);
    for (int i = 0; i < batch->rows; ++i) {
      const int a = assign[static_cast<size_t>(i)];
      counts[static_cast<size_t>(a)] += 1;
      const T* row = batch->row(i);
      double* sum = sums.data() + static_cast<size_t>(a) * static_cast<size_t>(d);
      for (int p = 0; p < d; ++p) sum[p] += static_cast<double>(row[p]);
    }
  }
  for (int k = 0; k < c; ++k) {
    if (counts[static_cast<size_t>(k)] == 0) continue;
    T* mu = centroids.row(k);
    const double* sum = sums.data() + static_cast<size_t>(k) * static_cast<size_t>(d);
    const double inv = 1.0 / static_cast<double>(counts[static_cast<size_t>(k)]);
    for (int p = 0; p < d; ++p) {
      const double mean = sum[p] * inv;
      mu[p] = decay * mu[p] + (T(1) - decay) * static_cast<T>(mean);
    }
  }
}

#define LONGCTX_INSTANTIATE_ATTENTION(T)                                                     \
  template std::vector<int> assign_clusters<T>(const Mat<T>&, const Mat<T>&);                \
  template void attention_forward<T>(const AttentionSpec&, const Mat<T>&, const Mat<T>&,     \
                                     const Mat<T>&, const Mat<T>*, Mat<T>&,                  \
                                     AttentionState<T>&);                                    \
  template void attention_backward<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&,          \
                                      const AttentionState<T>&, const Mat<T>&, Mat<T>&,     \
                                      Mat<T>&, Mat<T>&);                                     \
  template Mat<T> full_attention<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&,            \
                                    AttentionState<T>*);                                     \
  template Mat<T> local_attention<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, int,      \
                                     AttentionState<T>*);                                    \
  template Mat<T> routing_attention<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&,         \
                                       const Mat<T>&, AttentionState<T>*);                   \
  template void update_centroids<T>(Mat<T>&, const std::vector<const Mat<T>*>&, T);

LONGCTX_INSTANTIATE_ATTENTION(float)
LONGCTX_INSTANTIATE_ATTENTION(double)

#undef LONGCTX_INSTANTIATE_ATTENTION

}  // namespace longctx
