// Microbenchmarks for the attention kernels and the model forward pass.

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "longctx/attention.hpp"
#include "longctx/model.hpp"
#include "longctx/util.hpp"

namespace {

using namespace longctx;

Mat<float> random_mat(int rows, int cols, uint64_t seed) {
  Rng rng(seed);
  Mat<float> m(rows, cols);
  for (auto& v : m.a) v = static_cast<float>(rng.next_normal());
  return m;
}

void BM_FullAttention(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int d = 32;
  Mat<float> Q = random_mat(n, d, 1), K = random_mat(n, d, 2), V = random_mat(n, d, 3);
  AttentionState<float> st;
  for (auto _ : state) {
    Mat<float> out = full_attention(Q, K, V, &st);
    benchmark::DoNotOptimize(out.a.data());
  }
  state.counters["scored_pairs"] = static_cast<double>(st.scored_pairs);
}
BENCHMARK(BM_FullAttention)->Arg(128)->Arg(256)->Arg(512);

void BM_LocalAttention(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int d = 32;
  Mat<float> Q = random_mat(n, d, 1), K = random_mat(n, d, 2), V = random_mat(n, d, 3);
  AttentionState<float> st;
  for (auto _ : state) {
    Mat<float> out = local_attention(Q, K, V, 64, &st);
    benchmark::DoNotOptimize(out.a.data());
  }
  state.counters["scored_pairs"] = static_cast<double>(st.scored_pairs);
}
BENCHMARK(BM_LocalAttention)->Arg(128)->Arg(256)->Arg(512)->Arg(1024);

// Balanced clusters with c = ceil(sqrt(N)); scored pairs should track
// N^1.5 rather than N^2.
void BM_RoutingAttention(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int d = 32;
  const int c = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  Mat<float> centroids = random_mat(c, d, 7);
  Mat<float> Q(n, d), K(n, d), V = random_mat(n, d, 3);
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < d; ++p) {
      Q.at(i, p) = centroids.at(i % c, p);
      K.at(i, p) = centroids.at(i % c, p);
    }
  AttentionState<float> st;
  for (auto _ : state) {
    Mat<float> out = routing_attention(Q, K, V, centroids, &st);
    benchmark::DoNotOptimize(out.a.data());
  }
  state.counters["scored_pairs"] = static_cast<double>(st.scored_pairs);
}
BENCHMARK(BM_RoutingAttention)->Arg(128)->Arg(256)->Arg(512)->Arg(1024);

void BM_ForwardNll(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  ModelConfig cfg;
  cfg.n_layers = 4;
  cfg.n_heads = 2;
  cfg.d_model = 32;
  cfg.d_ff = 64;
  cfg.max_seq_len = 2048;
  cfg.vocab_size = 128;
  cfg.attention = {AttentionSpec::local(64), AttentionSpec::local(64), AttentionSpec::local(64),
                   AttentionSpec::routing(4)};
  Model m = init_model<float>(cfg, 5);
  Rng rng(9);
  std::vector<int> tokens(static_cast<size_t>(n));
  for (int& t : tokens) t = static_cast<int>(rng.next_below(128));
  for (auto _ : state) {
    std::vector<double> nll = forward_nll(m, tokens);
    benchmark::DoNotOptimize(nll.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_ForwardNll)->Arg(256)->Arg(1024)->Arg(2048);

}  // namespace

BENCHMARK_MAIN();
