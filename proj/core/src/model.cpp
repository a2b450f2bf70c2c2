#include "longctx/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "longctx/util.hpp"

namespace longctx {

using nlohmann::json;

void ModelConfig::validate() const {
  if (n_layers < 1) throw std::invalid_argument("ModelConfig: n_layers must be >= 1");
  if (n_heads < 1 || d_model % n_heads != 0)
    throw std::invalid_argument("ModelConfig: d_model must be divisible by n_heads");
  if (d_ff < 1) throw std::invalid_argument("ModelConfig: d_ff must be >= 1");
  if (max_seq_len < 2) throw std::invalid_argument("ModelConfig: max_seq_len must be >= 2");
  if (vocab_size < 2) throw std::invalid_argument("ModelConfig: vocab_size must be >= 2");
  if (static_cast<int>(attention.size()) != n_layers)
    throw std::invalid_argument("ModelConfig: attention spec count must equal n_layers");
  for (const AttentionSpec& spec : attention) spec.validate();
}

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

template <class T>
T gelu(T x) {
  const T u = static_cast<T>(kGeluC) * (x + static_cast<T>(kGeluA) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

template <class T>
T gelu_grad(T x) {
  const T u = static_cast<T>(kGeluC) * (x + static_cast<T>(kGeluA) * x * x * x);
  const T t = std::tanh(u);
  const T du = static_cast<T>(kGeluC) * (T(1) + T(3) * static_cast<T>(kGeluA) * x * x);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

template <class T>
struct LnCache {
  std::vector<T> rstd;  // per row
  Mat<T> xhat;          // normalized input
};

template <class T>
void layernorm_forward(const Mat<T>& x, const std::vector<T>& g, const std::vector<T>& b, T eps,
                       Mat<T>& out, LnCache<T>& cache) {
  const int n = x.rows, d = x.cols;
  out = Mat<T>(n, d);
  cache.rstd.assign(static_cast<size_t>(n), T(0));
  cache.xhat = Mat<T>(n, d);
  for (int i = 0; i < n; ++i) {
    const T* xi = x.row(i);
    T mu = T(0);
    for (int j = 0; j < d; ++j) mu += xi[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (int j = 0; j < d; ++j) {
      const T c = xi[j] - mu;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T rstd = T(1) / std::sqrt(var + eps);
    cache.rstd[static_cast<size_t>(i)] = rstd;
    T* xh = cache.xhat.row(i);
    T* oi = out.row(i);
    for (int j = 0; j < d; ++j) {
      xh[j] = (xi[j] - mu) * rstd;
      oi[j] = xh[j] * g[static_cast<size_t>(j)] + b[static_cast<size_t>(j)];
    }
  }
}

template <class T>
void layernorm_backward(const Mat<T>& d_out, const LnCache<T>& cache, const std::vector<T>& g,
                        Mat<T>& d_x, std::vector<T>& d_g, std::vector<T>& d_b) {
  const int n = d_out.rows, d = d_out.cols;
  for (int i = 0; i < n; ++i) {
    const T* doi = d_out.row(i);
    const T* xh = cache.xhat.row(i);
    const T rstd = cache.rstd[static_cast<size_t>(i)];
    T sum_dy = T(0), sum_dy_xhat = T(0);
    for (int j = 0; j < d; ++j) {
      const T dy = doi[j] * g[static_cast<size_t>(j)];
      sum_dy += dy;
      sum_dy_xhat += dy * xh[j];
      d_g[static_cast<size_t>(j)] += doi[j] * xh[j];
      d_b[static_cast<size_t>(j)] += doi[j];
    }
    const T inv_d = T(1) / static_cast<T>(d);
    T* dxi = d_x.row(i);
    for (int j = 0; j < d; ++j) {
      const T dy = doi[j] * g[static_cast<size_t>(j)];
      dxi[j] += rstd * (dy - sum_dy * inv_d - xh[j] * sum_dy_xhat * inv_d);
    }
  }
}

template <class T>
Mat<T> slice_head(const Mat<T>& x, int head, int d_head) {
  Mat<T> out(x.rows, d_head);
  for (int i = 0; i < x.rows; ++i) {
    const T* src = x.row(i) + head * d_head;
    std::copy(src, src + d_head, out.row(i));
  }
  return out;
}

template <class T>
void unslice_head_acc(const Mat<T>& part, int head, int d_head, Mat<T>& x) {
  for (int i = 0; i < part.rows; ++i) {
    const T* src = part.row(i);
    T* dst = x.row(i) + head * d_head;
    for (int j = 0; j < d_head; ++j) dst[j] += src[j];
  }
}

template <class T>
struct LayerCache {
  Mat<T> x_in;
  Mat<T> ln1_out;
  LnCache<T> ln1;
  Mat<T> q, k, v;  // heads packed, [n x d_model]
  std::vector<AttentionState<T>> head_state;
  Mat<T> att_out;  // per-head contexts packed, pre-W_o
  Mat<T> x_mid;
  Mat<T> ln2_out;
  LnCache<T> ln2;
  Mat<T> ffn_pre;  // [n x d_ff]
  Mat<T> ffn_act;
};

template <class T>
struct ForwardCache {
  std::vector<LayerCache<T>> layers;
  Mat<T> x_final_in;
  Mat<T> lnf_out;
  LnCache<T> lnf;
  Mat<T> logits;
  std::vector<double> lse;  // per row, double log-sum-exp
};

template <class T>
void forward_pass(const ModelT<T>& m, std::span<const int> tokens, ForwardCache<T>& fc) {
  const ModelConfig& cfg = m.cfg;
  const int n = static_cast<int>(tokens.size());
  if (n < 1) throw std::invalid_argument("forward: empty input");
  if (n > cfg.max_seq_len)
    throw std::invalid_argument("forward: sequence length " + std::to_string(n) +
                                " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  const int d = cfg.d_model;
  const int dh = cfg.d_head();
  const int pos0 = cfg.max_seq_len - n;  // end-anchored positions

  Mat<T> x(n, d);
  for (int i = 0; i < n; ++i) {
    const int id = tokens[static_cast<size_t>(i)];
    if (id < 0 || id >= cfg.vocab_size)
      throw std::out_of_range("forward: unknown token id " + std::to_string(id));
    const T* te = m.tok_emb.row(id);
    const T* pe = m.pos_emb.row(pos0 + i);
    T* xi = x.row(i);
    for (int j = 0; j < d; ++j) xi[j] = te[j] + pe[j];
  }

  fc.layers.assign(static_cast<size_t>(cfg.n_layers), LayerCache<T>{});
  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerCache<T>& lc = fc.layers[static_cast<size_t>(l)];
    const LayerParamsT<T>& lp = m.layers[static_cast<size_t>(l)];
    const AttentionSpec& spec = cfg.attention[static_cast<size_t>(l)];
    lc.x_in = x;
    layernorm_forward(x, lp.ln1_g, lp.ln1_b, static_cast<T>(cfg.ln_eps), lc.ln1_out, lc.ln1);
    lc.q = matmul(lc.ln1_out, lp.wq);
    lc.k = matmul(lc.ln1_out, lp.wk);
    lc.v = matmul(lc.ln1_out, lp.wv);
    lc.att_out = Mat<T>(n, d);
    lc.head_state.assign(static_cast<size_t>(cfg.n_heads), AttentionState<T>{});
    for (int h = 0; h < cfg.n_heads; ++h) {
      Mat<T> qh = slice_head(lc.q, h, dh);
      Mat<T> kh = slice_head(lc.k, h, dh);
      Mat<T> vh = slice_head(lc.v, h, dh);
      Mat<T> ctx;
      attention_forward(spec, qh, kh, vh,
                        spec.kind == AttnKind::Routing ? &lp.centroids : nullptr, ctx,
                        lc.head_state[static_cast<size_t>(h)]);
      unslice_head_acc(ctx, h, dh, lc.att_out);
    }
    Mat<T> proj = matmul(lc.att_out, lp.wo);
    lc.x_mid = Mat<T>(n, d);
    for (size_t idx = 0; idx < x.a.size(); ++idx) lc.x_mid.a[idx] = x.a[idx] + proj.a[idx];

    layernorm_forward(lc.x_mid, lp.ln2_g, lp.ln2_b, static_cast<T>(cfg.ln_eps), lc.ln2_out,
                      lc.ln2);
    lc.ffn_pre = matmul(lc.ln2_out, lp.w1);
    for (int i = 0; i < n; ++i) {
      T* row = lc.ffn_pre.row(i);
      for (int j = 0; j < cfg.d_ff; ++j) row[j] += lp.b1[static_cast<size_t>(j)];
    }
    lc.ffn_act = Mat<T>(n, cfg.d_ff);
    for (size_t idx = 0; idx < lc.ffn_pre.a.size(); ++idx)
      lc.ffn_act.a[idx] = gelu(lc.ffn_pre.a[idx]);
    Mat<T> ffn_out = matmul(lc.ffn_act, lp.w2);
    x = Mat<T>(n, d);
    for (int i = 0; i < n; ++i) {
      const T* mid = lc.x_mid.row(i);
      const T* f = ffn_out.row(i);
      T* xi = x.row(i);
      for (int j = 0; j < d; ++j) xi[j] = mid[j] + f[j] + lp.b2[static_cast<size_t>(j)];
    }
  }

  fc.x_final_in = x;
  layernorm_forward(x, m.lnf_g, m.lnf_b, static_cast<T>(cfg.ln_eps), fc.lnf_out, fc.lnf);
  if (cfg.tie_embeddings) {
    fc.logits = Mat<T>(n, cfg.vocab_size);
    matmul_nt_acc(fc.lnf_out, m.tok_emb, fc.logits);
  } else {
    fc.logits = matmul(fc.lnf_out, m.head);
  }

  fc.lse.assign(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const T* row = fc.logits.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < cfg.vocab_size; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0.0;
    for (int j = 0; j < cfg.vocab_size; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
    fc.lse[static_cast<size_t>(i)] = mx + std::log(sum);
  }
}

template <class T>
std::vector<double> nll_from_cache(const ForwardCache<T>& fc, std::span<const int> tokens) {
  const int n = static_cast<int>(tokens.size());
  std::vector<double> nll(static_cast<size_t>(n > 0 ? n - 1 : 0), 0.0);
  for (int i = 0; i + 1 < n; ++i) {
    const int target = tokens[static_cast<size_t>(i) + 1];
    nll[static_cast<size_t>(i)] =
        fc.lse[static_cast<size_t>(i)] -
        static_cast<double>(fc.logits.at(i, target));
  }
  return nll;
}

}  // namespace

template <class T>
ModelT<T> init_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  ModelT<T> m;
  m.cfg = cfg;
  Rng rng(seed);
  auto fill_normal = [&rng](auto& container, double std) {
    for (auto& v : container) v = static_cast<T>(rng.next_normal() * std);
  };
  m.tok_emb = Mat<T>(cfg.vocab_size, cfg.d_model);
  m.pos_emb = Mat<T>(cfg.max_seq_len, cfg.d_model);
  fill_normal(m.tok_emb.a, 0.02);
  fill_normal(m.pos_emb.a, 0.02);
  m.layers.resize(static_cast<size_t>(cfg.n_layers));
  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerParamsT<T>& lp = m.layers[static_cast<size_t>(l)];
    lp.ln1_g.assign(static_cast<size_t>(cfg.d_model), T(1));
    lp.ln1_b.assign(static_cast<size_t>(cfg.d_model), T(0));
    lp.ln2_g.assign(static_cast<size_t>(cfg.d_model), T(1));
    lp.ln2_b.assign(static_cast<size_t>(cfg.d_model), T(0));
    lp.wq = Mat<T>(cfg.d_model, cfg.d_model);
    lp.wk = Mat<T>(cfg.d_model, cfg.d_model);
    lp.wv = Mat<T>(cfg.d_model, cfg.d_model);
    lp.wo = Mat<T>(cfg.d_model, cfg.d_model);
    fill_normal(lp.wq.a, 0.02);
    fill_normal(lp.wk.a, 0.02);
    fill_normal(lp.wv.a, 0.02);
    fill_normal(lp.wo.a, 0.02);
    lp.w1 = Mat<T>(cfg.d_model, cfg.d_ff);
    lp.w2 = Mat<T>(cfg.d_ff, cfg.d_model);
    fill_normal(lp.w1.a, 0.02);
    fill_normal(lp.w2.a, 0.02);
    lp.b1.assign(static_cast<size_t>(cfg.d_ff), T(0));
    lp.b2.assign(static_cast<size_t>(cfg.d_model), T(0));
    const AttentionSpec& spec = cfg.attention[static_cast<size_t>(l)];
    if (spec.kind == AttnKind::Routing) {
      lp.centroids = Mat<T>(spec.n_clusters, cfg.d_head());
      // Separate stream so weight init is identical across attention
      // layouts; scale roughly matches early-training q/k magnitudes.
      Rng centroid_rng(mix64(seed ^ (0x63656e74ull + static_cast<uint64_t>(l))));
      for (auto& v : lp.centroids.a) v = static_cast<T>(centroid_rng.next_normal() * 0.1);
    }
  }
  m.lnf_g.assign(static_cast<size_t>(cfg.d_model), T(1));
  m.lnf_b.assign(static_cast<size_t>(cfg.d_model), T(0));
  if (!cfg.tie_embeddings) {
    m.head = Mat<T>(cfg.d_model, cfg.vocab_size);
    fill_normal(m.head.a, 0.02);
  }
  return m;
}

template <class T>
ModelT<T> zero_model(const ModelConfig& cfg) {
  ModelT<T> m = init_model<T>(cfg, 0);
  for_each_param(m, [](std::span<T> s, const std::string& name) {
    if (name.find("ln1_g") != std::string::npos || name.find("ln2_g") != std::string::npos ||
        name == "lnf_g")
      return;  // keep layer norm gains at 1
    std::fill(s.begin(), s.end(), T(0));
  });
  return m;
}

template <class T>
ModelT<T> grads_like(const ModelT<T>& m) {
  ModelT<T> g = zero_model<T>(m.cfg);
  for_each_param(g, [](std::span<T> s, const std::string&) { std::fill(s.begin(), s.end(), T(0)); });
  for (auto& lp : g.layers) lp.centroids.zero();
  return g;
}

template <class T>
std::vector<double> forward_nll(const ModelT<T>& m, std::span<const int> tokens) {
  ForwardCache<T> fc;
  forward_pass(m, tokens, fc);
  return nll_from_cache(fc, tokens);
}

template <class T>
double forward_backward(const ModelT<T>& m, std::span<const int> tokens, ModelT<T>& grads,
                        RoutingQK<T>* routing_qk) {
  const ModelConfig& cfg = m.cfg;
  ForwardCache<T> fc;
  forward_pass(m, tokens, fc);
  const int n = static_cast<int>(tokens.size());
  if (n < 2) throw std::invalid_argument("forward_backward: need at least 2 tokens");
  const int n_pred = n - 1;
  const int d = cfg.d_model;
  const int dh = cfg.d_head();

  std::vector<double> nll = nll_from_cache(fc, tokens);
  double loss = 0.0;
  for (double v : nll) loss += v;
  loss /= static_cast<double>(n_pred);

  // d loss / d logits; probabilities from the same double LSE as the loss.
  Mat<T> d_logits(n, cfg.vocab_size);
  const double inv_pred = 1.0 / static_cast<double>(n_pred);
  for (int i = 0; i < n_pred; ++i) {
    const T* row = fc.logits.row(i);
    T* drow = d_logits.row(i);
    const double lse = fc.lse[static_cast<size_t>(i)];
    for (int j = 0; j < cfg.vocab_size; ++j)
      drow[j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - lse) * inv_pred);
    drow[tokens[static_cast<size_t>(i) + 1]] -= static_cast<T>(inv_pred);
  }

  Mat<T> d_lnf_out = Mat<T>(n, d);
  if (cfg.tie_embeddings) {
    matmul_tn_acc(d_logits, fc.lnf_out, grads.tok_emb);
    matmul_acc(d_logits, m.tok_emb, d_lnf_out);
  } else {
    matmul_tn_acc(fc.lnf_out, d_logits, grads.head);
    matmul_nt_acc(d_logits, m.head, d_lnf_out);
  }

  Mat<T> d_x(n, d);
  layernorm_backward(d_lnf_out, fc.lnf, m.lnf_g, d_x, grads.lnf_g, grads.lnf_b);

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    LayerCache<T>& lc = fc.layers[static_cast<size_t>(l)];
    const LayerParamsT<T>& lp = m.layers[static_cast<size_t>(l)];
    LayerParamsT<T>& gp = grads.layers[static_cast<size_t>(l)];

    // FFN block: x = x_mid + W2 gelu(W1 ln2(x_mid) + b1) + b2
    for (int i = 0; i < n; ++i) {
      const T* dxi = d_x.row(i);
      for (int j = 0; j < d; ++j) gp.b2[static_cast<size_t>(j)] += dxi[j];
    }
    Mat<T> d_act(n, cfg.d_ff);
    matmul_nt_acc(d_x, lp.w2, d_act);
    matmul_tn_acc(lc.ffn_act, d_x, gp.w2);
    Mat<T> d_pre(n, cfg.d_ff);
    for (size_t idx = 0; idx < d_pre.a.size(); ++idx)
      d_pre.a[idx] = d_act.a[idx] * gelu_grad(lc.ffn_pre.a[idx]);
    for (int i = 0; i < n; ++i) {
      const T* row = d_pre.row(i);
      for (int j = 0; j < cfg.d_ff; ++j) gp.b1[static_cast<size_t>(j)] += row[j];
    }
    matmul_tn_acc(lc.ln2_out, d_pre, gp.w1);
    Mat<T> d_ln2_out(n, d);
    matmul_nt_acc(d_pre, lp.w1, d_ln2_out);
    Mat<T> d_x_mid = d_x;  // residual branch
    layernorm_backward(d_ln2_out, lc.ln2, lp.ln2_g, d_x_mid, gp.ln2_g, gp.ln2_b);

    // Attention block: x_mid = x_in + W_o ctx(ln1(x_in))
    matmul_tn_acc(lc.att_out, d_x_mid, gp.wo);
    Mat<T> d_att_out(n, d);
    matmul_nt_acc(d_x_mid, lp.wo, d_att_out);
    Mat<T> d_q(n, d), d_k(n, d), d_v(n, d);
    for (int h = 0; h < cfg.n_heads; ++h) {
      Mat<T> qh = slice_head(lc.q, h, dh);
      Mat<T> kh = slice_head(lc.k, h, dh);
      Mat<T> vh = slice_head(lc.v, h, dh);
      Mat<T> d_ctx = slice_head(d_att_out, h, dh);
      Mat<T> dqh(n, dh), dkh(n, dh), dvh(n, dh);
      attention_backward(qh, kh, vh, lc.head_state[static_cast<size_t>(h)], d_ctx, dqh, dkh,
                         dvh);
      unslice_head_acc(dqh, h, dh, d_q);
      unslice_head_acc(dkh, h, dh, d_k);
      unslice_head_acc(dvh, h, dh, d_v);
    }
    matmul_tn_acc(lc.ln1_out, d_q, gp.wq);
    matmul_tn_acc(lc.ln1_out, d_k, gp.wk);
    matmul_tn_acc(lc.ln1_out, d_v, gp.wv);
    Mat<T> d_ln1_out(n, d);
    matmul_nt_acc(d_q, lp.wq, d_ln1_out);
    matmul_nt_acc(d_k, lp.wk, d_ln1_out);
    matmul_nt_acc(d_v, lp.wv, d_ln1_out);
    Mat<T> d_x_in = d_x_mid;  // residual branch
    layernorm_backward(d_ln1_out, lc.ln1, lp.ln1_g, d_x_in, gp.ln1_g, gp.ln1_b);
    d_x = std::move(d_x_in);
  }

  const int pos0 = cfg.max_seq_len - n;
  for (int i = 0; i < n; ++i) {
    const T* dxi = d_x.row(i);
    T* te = grads.tok_emb.row(tokens[static_cast<size_t>(i)]);
    T* pe = grads.pos_emb.row(pos0 + i);
    for (int j = 0; j < d; ++j) {
      te[j] += dxi[j];
      pe[j] += dxi[j];
    }
  }

  if (routing_qk != nullptr) {
    routing_qk->per_layer.assign(static_cast<size_t>(cfg.n_layers), Mat<T>{});
    for (int l = 0; l < cfg.n_layers; ++l) {
      if (cfg.attention[static_cast<size_t>(l)].kind != AttnKind::Routing) continue;
      const LayerCache<T>& lc = fc.layers[static_cast<size_t>(l)];
      Mat<T> rows(2 * n * cfg.n_heads, dh);
      int r = 0;
      for (int h = 0; h < cfg.n_heads; ++h)
        for (int i = 0; i < n; ++i, ++r)
          std::copy(lc.q.row(i) + h * dh, lc.q.row(i) + (h + 1) * dh, rows.row(r));
      for (int h = 0; h < cfg.n_heads; ++h)
        for (int i = 0; i < n; ++i, ++r)
          std::copy(lc.k.row(i) + h * dh, lc.k.row(i) + (h + 1) * dh, rows.row(r));
      routing_qk->per_layer[static_cast<size_t>(l)] = std::move(rows);
    }
  }
  return loss;
}

namespace {

json spec_to_json(const AttentionSpec& s) {
  switch (s.kind) {
    case AttnKind::Full: return json{{"kind", "full"}};
    case AttnKind::Local: return json{{"kind", "local"}, {"window", s.window}};
    case AttnKind::Routing:
      return json{{"kind", "routing"}, {"clusters", s.n_clusters}, {"decay", s.centroid_decay}};
  }
  return json{};
}

AttentionSpec spec_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "full") return AttentionSpec::full();
  if (kind == "local") return AttentionSpec::local(j.at("window").get<int>());
  if (kind == "routing")
    return AttentionSpec::routing(j.at("clusters").get<int>(),
                                  j.value("decay", 0.999f));
  throw std::runtime_error("unknown attention kind '" + kind + "'");
}

}  // namespace

std::string config_to_json(const ModelConfig& cfg) {
  json j;
  j["n_layers"] = cfg.n_layers;
  j["n_heads"] = cfg.n_heads;
  j["d_model"] = cfg.d_model;
  j["d_ff"] = cfg.d_ff;
  j["max_seq_len"] = cfg.max_seq_len;
  j["vocab_size"] = cfg.vocab_size;
  j["tie_embeddings"] = cfg.tie_embeddings;
  j["ln_eps"] = cfg.ln_eps;
  j["vocab_hash"] = cfg.vocab_hash;
  j["attention"] = json::array();
  for (const AttentionSpec& s : cfg.attention) j["attention"].push_back(spec_to_json(s));
  return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
  json j = json::parse(text);
  ModelConfig cfg;
  cfg.n_layers = j.at("n_layers").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.d_model = j.at("d_model").get<int>();
  cfg.d_ff = j.at("d_ff").get<int>();
  cfg.max_seq_len = j.at("max_seq_len").get<int>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.tie_embeddings = j.value("tie_embeddings", false);
  cfg.ln_eps = j.value("ln_eps", 1e-5f);
  cfg.vocab_hash = j.value("vocab_hash", "");
  for (const json& s : j.at("attention")) cfg.attention.push_back(spec_from_json(s));
  // Not validated here: configs may carry a placeholder vocab_size until a
  // vocabulary is attached. Model construction validates.
  return cfg;
}

namespace {

constexpr char kMagic[8] = {'L', 'C', 'T', 'X', 'M', 'O', 'D', 'L'};
constexpr uint32_t kFormatVersion = 1;

void write_tensor(std::ofstream& out, const float* data, size_t count) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(count * sizeof(float)));
}

void read_tensor(std::ifstream& in, float* data, size_t count) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw std::runtime_error("load_checkpoint: truncated tensor data");
}

}  // namespace

// Layout: magic, u32 version, u32 json length, config JSON, then raw
// little-endian float32 tensors in for_each_param order with routing
// centroids appended after each layer's parameters.
void save_checkpoint(const Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  const uint32_t version = kFormatVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::string cfg_json = config_to_json(m.cfg);
  const uint32_t len = static_cast<uint32_t>(cfg_json.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));

  Model& mut = const_cast<Model&>(m);
  for_each_param(mut, [&out](std::span<float> s, const std::string&) {
    write_tensor(out, s.data(), s.size());
  });
  for (const auto& lp : m.layers)
    if (lp.centroids.size() > 0) write_tensor(out, lp.centroids.a.data(), lp.centroids.size());
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kFormatVersion)
    throw std::runtime_error("load_checkpoint: unsupported format version " +
                             std::to_string(version));
  uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string cfg_json(len, '\0');
  in.read(cfg_json.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("load_checkpoint: truncated header");
  ModelConfig cfg = config_from_json(cfg_json);

  Model m = zero_model<float>(cfg);
  for_each_param(m, [&in](std::span<float> s, const std::string&) {
    read_tensor(in, s.data(), s.size());
  });
  for (auto& lp : m.layers)
    if (lp.centroids.size() > 0) read_tensor(in, lp.centroids.a.data(), lp.centroids.size());
  return m;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file_hash: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return to_hex(fnv1a64(ss.str()));
}

#define LONGCTX_INSTANTIATE_MODEL(T)                                                       \
  template ModelT<T> init_model<T>(const ModelConfig&, uint64_t);                          \
  template ModelT<T> zero_model<T>(const ModelConfig&);                                    \
  template ModelT<T> grads_like<T>(const ModelT<T>&);                                      \
  template std::vector<double> forward_nll<T>(const ModelT<T>&, std::span<const int>);     \
  template double forward_backward<T>(const ModelT<T>&, std::span<const int>, ModelT<T>&,  \
                                      RoutingQK<T>*);

LONGCTX_INSTANTIATE_MODEL(float)
LONGCTX_INSTANTIATE_MODEL(double)

#undef LONGCTX_INSTANTIATE_MODEL

}  // namespace longctx
