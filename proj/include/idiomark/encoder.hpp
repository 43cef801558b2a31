#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "idiomark/errors.hpp"
#include "idiomark/linalg.hpp"
#include "idiomark/rng.hpp"
#include "idiomark/tokenization.hpp"

namespace idiomark {

enum class Pooling { Cls, Mean, Max, FirstLastAvg, MweToken };

inline std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::Cls: return "cls";
    case Pooling::Mean: return "mean";
    case Pooling::Max: return "max";
    case Pooling::FirstLastAvg: return "first_last_avg";
    default: return "mwe_token";
  }
}

inline Pooling pooling_from_string(const std::string& s) {
  if (s == "cls") return Pooling::Cls;
  if (s == "mean") return Pooling::Mean;
  if (s == "max") return Pooling::Max;
  if (s == "first_last_avg") return Pooling::FirstLastAvg;
  if (s == "mwe_token") return Pooling::MweToken;
  throw ValidationError("unknown pooling: " + s);
}

struct EncoderConfig {
  int vocab_size = 0;
  int dim = 64;
  int layers = 2;
  int heads = 4;
  int ffn_dim = 128;
  double dropout_rate = 0.1;
  int max_position = 128;
  Pooling pooling = Pooling::Cls;
  int num_classes = 2;

  void validate() const {
    if (vocab_size < 1) throw ValidationError("config: vocab_size < 1");
    if (dim < 1 || layers < 1 || heads < 1 || ffn_dim < 1)
      throw ValidationError("config: nonpositive size field");
    if (dim % heads != 0)
      throw ValidationError("config: dim must be divisible by heads");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw ValidationError("config: dropout_rate must be in [0,1)");
    if (max_position < 1) throw ValidationError("config: max_position < 1");
    if (num_classes != 2) throw ValidationError("config: num_classes != 2");
  }

  bool operator==(const EncoderConfig&) const = default;
};

template <typename T>
struct ModelTensors {
  struct Layer {
    VecX<T> ln1_g, ln1_b;
    MatX<T> wq, wk, wv, wo;
    VecX<T> bq, bk, bv, bo;
    VecX<T> ln2_g, ln2_b;
    MatX<T> w1;
    VecX<T> b1;
    MatX<T> w2;
    VecX<T> b2;
  };

  MatX<T> tok_emb, pos_emb;
  std::vector<Layer> layers;
  VecX<T> lnf_g, lnf_b;
  MatX<T> w_cls;
  VecX<T> b_cls;

  ModelTensors() = default;

  explicit ModelTensors(const EncoderConfig& c) {
    tok_emb = MatX<T>::Zero(c.vocab_size, c.dim);
    pos_emb = MatX<T>::Zero(c.max_position, c.dim);
    layers.resize(c.layers);
    for (Layer& l : layers) {
      l.ln1_g = VecX<T>::Ones(c.dim);
      l.ln1_b = VecX<T>::Zero(c.dim);
      l.wq = MatX<T>::Zero(c.dim, c.dim);
      l.wk = MatX<T>::Zero(c.dim, c.dim);
      l.wv = MatX<T>::Zero(c.dim, c.dim);
      l.wo = MatX<T>::Zero(c.dim, c.dim);
      l.bq = VecX<T>::Zero(c.dim);
      l.bk = VecX<T>::Zero(c.dim);
      l.bv = VecX<T>::Zero(c.dim);
      l.bo = VecX<T>::Zero(c.dim);
      l.ln2_g = VecX<T>::Ones(c.dim);
      l.ln2_b = VecX<T>::Zero(c.dim);
      l.w1 = MatX<T>::Zero(c.dim, c.ffn_dim);
      l.b1 = VecX<T>::Zero(c.ffn_dim);
      l.w2 = MatX<T>::Zero(c.ffn_dim, c.dim);
      l.b2 = VecX<T>::Zero(c.dim);
    }
    lnf_g = VecX<T>::Ones(c.dim);
    lnf_b = VecX<T>::Zero(c.dim);
    w_cls = MatX<T>::Zero(c.dim, c.num_classes);
    b_cls = VecX<T>::Zero(c.num_classes);
  }

  void set_zero() {
    auto z = [](auto& t) { t.setZero(); };
    for_each_tensor(z);
  }

  // Truncated-normal (std 0.02, +-2 sigma) weights and embeddings; zero
  // biases; unit norm gains. Draw order is fixed by code order, row-major
  // within each tensor.
  void init_weights(Rng& rng) {
    auto fill = [&](MatX<T>& m) {
      T* d = m.data();
      for (Eigen::Index i = 0; i < m.size(); ++i)
        d[i] = static_cast<T>(rng.truncated_normal(0.02));
    };
    fill(tok_emb);
    fill(pos_emb);
    for (Layer& l : layers) {
      fill(l.wq);
      fill(l.wk);
      fill(l.wv);
      fill(l.wo);
      fill(l.w1);
      fill(l.w2);
    }
    fill(w_cls);
  }

  // Visits every tensor as (name, matrix-or-vector, weight_decay_eligible),
  // in a stable order shared by the optimizer and the checkpoint format.
  template <typename F>
  void visit(F&& f) {
    f("tok_emb", tok_emb, true);
    f("pos_emb", pos_emb, true);
    for (size_t i = 0; i < layers.size(); ++i) {
      const std::string p = "layer" + std::to_string(i) + ".";
      Layer& l = layers[i];
      f(p + "ln1_g", l.ln1_g, false);
      f(p + "ln1_b", l.ln1_b, false);
      f(p + "wq", l.wq, true);
      f(p + "bq", l.bq, false);
      f(p + "wk", l.wk, true);
      f(p + "bk", l.bk, false);
      f(p + "wv", l.wv, true);
      f(p + "bv", l.bv, false);
      f(p + "wo", l.wo, true);
      f(p + "bo", l.bo, false);
      f(p + "ln2_g", l.ln2_g, false);
      f(p + "ln2_b", l.ln2_b, false);
      f(p + "w1", l.w1, true);
      f(p + "b1", l.b1, false);
      f(p + "w2", l.w2, true);
      f(p + "b2", l.b2, false);
    }
    f("lnf_g", lnf_g, false);
    f("lnf_b", lnf_b, false);
    f("w_cls", w_cls, true);
    f("b_cls", b_cls, false);
  }

  template <typename F>
  void visit(F&& f) const {
    const_cast<ModelTensors*>(this)->visit(
        [&](const std::string& n, const auto& t, bool d) { f(n, t, d); });
  }

  template <typename F>
  void for_each_tensor(F&& f) {
    visit([&](const std::string&, auto& t, bool) { f(t); });
  }
};

/// Flat view of every parameter tensor: contiguous data pointer plus shape.
/// The optimizer updates through it; the checkpoint serializes through it.
template <typename T>
struct TensorRef {
  std::string name;
  T* data;
  Eigen::Index rows, cols;
  bool decay;
  Eigen::Index size() const { return rows * cols; }
};

template <typename T>
inline std::vector<TensorRef<T>> tensor_refs(ModelTensors<T>& m) {
  std::vector<TensorRef<T>> out;
  m.visit([&](const std::string& name, auto& t, bool decay) {
    out.push_back({name, t.data(), t.rows(), t.cols(), decay});
  });
  return out;
}

template <typename T>
inline std::vector<TensorRef<const T>> tensor_refs(const ModelTensors<T>& m) {
  std::vector<TensorRef<const T>> out;
  m.visit([&](const std::string& name, const auto& t, bool decay) {
    out.push_back({name, t.data(), t.rows(), t.cols(), decay});
  });
  return out;
}

struct PaddedBatch {
  MatXi ids;   // B x S
  MatXi mask;  // B x S, 1 = real token
  std::vector<std::optional<std::pair<int, int>>> mwe_ranges;

  int batch() const { return static_cast<int>(ids.rows()); }
  int seq() const { return static_cast<int>(ids.cols()); }
};

inline PaddedBatch pad_batch(const std::vector<TokenizedInput>& inputs,
                             int pad_id) {
  if (inputs.empty()) throw ContractError("pad_batch: empty batch");
  int S = 0;
  for (const auto& in : inputs)
    S = std::max(S, static_cast<int>(in.ids.size()));
  const int B = static_cast<int>(inputs.size());
  PaddedBatch pb;
  pb.ids = MatXi::Constant(B, S, pad_id);
  pb.mask = MatXi::Zero(B, S);
  pb.mwe_ranges.reserve(B);
  for (int b = 0; b < B; ++b) {
    const auto& in = inputs[b];
    for (size_t s = 0; s < in.ids.size(); ++s) {
      pb.ids(b, static_cast<int>(s)) = in.ids[s];
      pb.mask(b, static_cast<int>(s)) = in.attention_mask[s];
    }
    pb.mwe_ranges.push_back(in.mwe_token_range);
  }
  return pb;
}

template <typename T>
struct BatchForward {
  // layers+1 entries of (B*S) x dim: [0] is the embedding output, the last
  // is the final-normalized top layer. Row b*S+s is token s of example b.
  std::vector<MatX<T>> hidden_states;
  MatX<T> sentence_vectors;  // B x dim, pre-classifier-dropout
  MatX<T> logits;            // B x num_classes
  MatX<T> probabilities;     // B x num_classes
};

/// Reference single-example pooling: hidden_states as per-layer S x dim
/// matrices ([0] embeddings, back() final layer), mask over the S
/// positions.
template <typename T>
inline VecX<T> pool(const std::vector<MatX<T>>& hidden_states,
                    const std::vector<uint8_t>& mask, Pooling pooling,
                    const std::optional<std::pair<int, int>>& mwe_range) {
  if (hidden_states.empty()) throw ContractError("pool: no hidden states");
  const MatX<T>& last = hidden_states.back();
  const MatX<T>& first = hidden_states.front();
  const int S = static_cast<int>(last.rows());
  int len = 0;
  for (int s = 0; s < S && s < static_cast<int>(mask.size()); ++s)
    if (mask[s]) ++len;
  if (len == 0) throw ContractError("pool: all-zero mask");

  switch (pooling) {
    case Pooling::Cls:
      return last.row(0).transpose();
    case Pooling::Mean: {
      VecX<T> acc = VecX<T>::Zero(last.cols());
      for (int s = 0; s < S; ++s)
        if (mask[s]) acc += last.row(s).transpose();
      return acc / T(len);
    }
    case Pooling::Max: {
      VecX<T> acc;
      bool seen = false;
      for (int s = 0; s < S; ++s) {
        if (!mask[s]) continue;
        if (!seen) {
          acc = last.row(s).transpose();
          seen = true;
        } else {
          acc = acc.cwiseMax(last.row(s).transpose());
        }
      }
      return acc;
    }
    case Pooling::FirstLastAvg: {
      VecX<T> acc = VecX<T>::Zero(last.cols());
      for (int s = 0; s < S; ++s)
        if (mask[s])
          acc += ((first.row(s) + last.row(s)) / T(2)).transpose();
      return acc / T(len);
    }
    case Pooling::MweToken: {
      if (!mwe_range) return last.row(0).transpose();  // fall back to CLS
      VecX<T> acc = VecX<T>::Zero(last.cols());
      int cnt = 0;
      for (int s = mwe_range->first; s <= mwe_range->second && s < S; ++s) {
        if (s < 0 || !mask[s]) continue;
        acc += last.row(s).transpose();
        ++cnt;
      }
      if (cnt == 0) return last.row(0).transpose();
      return acc / T(cnt);
    }
  }
  throw ContractError("pool: unreachable");
}

namespace detail {

template <typename T>
struct BlockCache {
  MatX<T> x_in;
  MatX<T> ln1_xhat, ln1_out;
  VecX<T> ln1_rstd;
  MatX<T> q, k, v;
  MatX<T> probs;  // (B*H*S) x S
  MatX<T> ctx;
  MatX<T> attn_drop;  // mask scaled by 1/(1-p); empty when dropout off
  MatX<T> x_mid;
  MatX<T> ln2_xhat, ln2_out;
  VecX<T> ln2_rstd;
  MatX<T> ffn_pre, ffn_act;
  MatX<T> ffn_drop;
};

}  // namespace detail

template <typename T>
struct ForwardCache {
  PaddedBatch batch;
  std::vector<int> lens;  // real-token count per example
  MatX<T> emb_sum;        // pre-dropout embedding output (token + position)
  MatX<T> emb_drop;
  MatX<T> emb_out;  // hidden[0]
  std::vector<detail::BlockCache<T>> blocks;
  MatX<T> lnf_xhat;
  VecX<T> lnf_rstd;
  MatX<T> final_out;  // hidden[L]
  // Pooling bookkeeping.
  MatXi max_arg;                          // B x dim row indices (Max only)
  std::vector<std::pair<int, int>> mwe_used;  // resolved range or {-1,-1}
  MatX<T> pooled;                         // B x dim pre-dropout
  MatX<T> cls_drop;
  MatX<T> cls_in;  // B x dim post-dropout classifier input
  MatX<T> probs;   // B x C
};

template <typename T>
class TransformerModel {
 public:
  TransformerModel(EncoderConfig cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    params_ = ModelTensors<T>(cfg_);
    Rng rng(init_seed);
    params_.init_weights(rng);
  }

  TransformerModel(EncoderConfig cfg, ModelTensors<T> params)
      : cfg_(cfg), params_(std::move(params)) {
    cfg_.validate();
  }

  const EncoderConfig& config() const { return cfg_; }
  ModelTensors<T>& params() { return params_; }
  const ModelTensors<T>& params() const { return params_; }

  /// Full forward pass. With dropout_on, rng must be non-null and masks are
  /// drawn in a fixed order (embeddings, then per block attention/ffn, then
  /// classifier input). emb_offset, when given, is added to the embedding
  /// output before dropout (the adversarial-perturbation injection point).
  BatchForward<T> forward(const PaddedBatch& pb, bool dropout_on, Rng* rng,
                          ForwardCache<T>* cache = nullptr,
                          const MatX<T>* emb_offset = nullptr) const {
    const int B = pb.batch(), S = pb.seq(), D = cfg_.dim;
    const int H = cfg_.heads, dh = D / H;
    if (S > cfg_.max_position)
      throw ValidationError("forward: sequence length " + std::to_string(S) +
                            " exceeds max_position " +
                            std::to_string(cfg_.max_position));
    if (static_cast<int>(pb.mwe_ranges.size()) != B)
      throw ContractError("forward: mwe_ranges size mismatch");
    std::vector<int> lens(B, 0);
    for (int b = 0; b < B; ++b) {
      for (int s = 0; s < S; ++s) {
        if (pb.mask(b, s)) ++lens[b];
        const int id = pb.ids(b, s);
        if (id < 0 || id >= cfg_.vocab_size)
          throw ValidationError("forward: token id out of range: " +
                                std::to_string(id));
      }
      if (lens[b] == 0) throw ContractError("forward: all-zero mask row");
    }
    const bool drop = dropout_on && cfg_.dropout_rate > 0.0;
    if (drop && rng == nullptr)
      throw ContractError("forward: dropout requires an rng");

    BatchForward<T> out;
    out.hidden_states.reserve(cfg_.layers + 1);

    MatX<T> x(B * S, D);
    for (int b = 0; b < B; ++b)
      for (int s = 0; s < S; ++s)
        x.row(b * S + s) =
            params_.tok_emb.row(pb.ids(b, s)) + params_.pos_emb.row(s);
    if (emb_offset) {
      if (emb_offset->rows() != x.rows() || emb_offset->cols() != x.cols())
        throw ContractError("forward: emb_offset shape mismatch");
      x += *emb_offset;
    }
    if (cache) {
      cache->batch = pb;
      cache->lens = lens;
      cache->emb_sum = x;
      cache->blocks.assign(cfg_.layers, {});
    }
    MatX<T> emb_drop;
    if (drop) draw_dropout_mask(x.rows(), x.cols(), *rng, &emb_drop);
    if (drop) x.array() *= emb_drop.array();
    if (cache) {
      cache->emb_drop = std::move(emb_drop);
      cache->emb_out = x;
    }
    out.hidden_states.push_back(x);

    const T scale = T(1) / std::sqrt(T(dh));
    const T neg_inf = -std::numeric_limits<T>::infinity();

    for (int l = 0; l < cfg_.layers; ++l) {
      const auto& L = params_.layers[l];
      detail::BlockCache<T>* bc = cache ? &cache->blocks[l] : nullptr;
      if (bc) bc->x_in = x;

      MatX<T> xhat1;
      VecX<T> rstd1;
      MatX<T> a = layer_norm(x, L.ln1_g, L.ln1_b, &xhat1, &rstd1);
      if (bc) {
        bc->ln1_xhat = std::move(xhat1);
        bc->ln1_rstd = std::move(rstd1);
        bc->ln1_out = a;
      }

      MatX<T> q = a * L.wq;
      q.rowwise() += L.bq.transpose();
      MatX<T> k = a * L.wk;
      k.rowwise() += L.bk.transpose();
      MatX<T> v = a * L.wv;
      v.rowwise() += L.bv.transpose();

      MatX<T> probs(B * H * S, S);
      MatX<T> ctx(B * S, D);
      for (int b = 0; b < B; ++b) {
        for (int h = 0; h < H; ++h) {
          auto Q = q.block(b * S, h * dh, S, dh);
          auto K = k.block(b * S, h * dh, S, dh);
          auto V = v.block(b * S, h * dh, S, dh);
          MatX<T> scores = (Q * K.transpose()) * scale;
          for (int j = 0; j < S; ++j)
            if (!pb.mask(b, j)) scores.col(j).setConstant(neg_inf);
          softmax_rows(scores);
          probs.block((b * H + h) * S, 0, S, S) = scores;
          ctx.block(b * S, h * dh, S, dh) = scores * V;
        }
      }
      if (bc) {
        bc->q = std::move(q);
        bc->k = std::move(k);
        bc->v = std::move(v);
        bc->probs = std::move(probs);
        bc->ctx = ctx;
      }

      MatX<T> attn = ctx * L.wo;
      attn.rowwise() += L.bo.transpose();
      if (drop) {
        MatX<T> m;
        draw_dropout_mask(attn.rows(), attn.cols(), *rng, &m);
        attn.array() *= m.array();
        if (bc) bc->attn_drop = std::move(m);
      }
      x += attn;
      if (bc) bc->x_mid = x;

      MatX<T> xhat2;
      VecX<T> rstd2;
      MatX<T> bh = layer_norm(x, L.ln2_g, L.ln2_b, &xhat2, &rstd2);
      if (bc) {
        bc->ln2_xhat = std::move(xhat2);
        bc->ln2_rstd = std::move(rstd2);
        bc->ln2_out = bh;
      }

      MatX<T> pre = bh * L.w1;
      pre.rowwise() += L.b1.transpose();
      MatX<T> act(pre.rows(), pre.cols());
      {
        const T* ps = pre.data();
        T* as = act.data();
        for (Eigen::Index i = 0; i < pre.size(); ++i)
          as[i] = gelu_scalar(ps[i]);
      }
      if (bc) {
        bc->ffn_pre = pre;
        bc->ffn_act = act;
      }
      MatX<T> f = act * L.w2;
      f.rowwise() += L.b2.transpose();
      if (drop) {
        MatX<T> m;
        draw_dropout_mask(f.rows(), f.cols(), *rng, &m);
        f.array() *= m.array();
        if (bc) bc->ffn_drop = std::move(m);
      }
      x += f;
      if (l + 1 < cfg_.layers) out.hidden_states.push_back(x);
    }

    MatX<T> xhatf;
    VecX<T> rstdf;
    MatX<T> y = layer_norm(x, params_.lnf_g, params_.lnf_b, &xhatf, &rstdf);
    if (cache) {
      cache->lnf_xhat = std::move(xhatf);
      cache->lnf_rstd = std::move(rstdf);
      cache->final_out = y;
    }
    out.hidden_states.push_back(y);

    // Pooling over the packed hidden states.
    MatX<T> pooled(B, D);
    MatXi max_arg;
    std::vector<std::pair<int, int>> used(B, {-1, -1});
    if (cfg_.pooling == Pooling::Max) max_arg = MatXi::Zero(B, D);
    const MatX<T>& h0 = out.hidden_states.front();
    for (int b = 0; b < B; ++b) {
      const int base = b * S;
      switch (cfg_.pooling) {
        case Pooling::Cls:
          pooled.row(b) = y.row(base);
          break;
        case Pooling::Mean: {
          pooled.row(b).setZero();
          for (int s = 0; s < S; ++s)
            if (pb.mask(b, s)) pooled.row(b) += y.row(base + s);
          pooled.row(b) /= T(lens[b]);
          break;
        }
        case Pooling::Max: {
          bool seen = false;
          for (int s = 0; s < S; ++s) {
            if (!pb.mask(b, s)) continue;
            if (!seen) {
              pooled.row(b) = y.row(base + s);
              for (int c = 0; c < D; ++c) max_arg(b, c) = s;
              seen = true;
            } else {
              for (int c = 0; c < D; ++c) {
                if (y(base + s, c) > pooled(b, c)) {
                  pooled(b, c) = y(base + s, c);
                  max_arg(b, c) = s;
                }
              }
            }
          }
          break;
        }
        case Pooling::FirstLastAvg: {
          pooled.row(b).setZero();
          for (int s = 0; s < S; ++s)
            if (pb.mask(b, s))
              pooled.row(b) += (h0.row(base + s) + y.row(base + s)) / T(2);
          pooled.row(b) /= T(lens[b]);
          break;
        }
        case Pooling::MweToken: {
          int lo = -1, hi = -1;
          if (pb.mwe_ranges[b]) {
            lo = std::max(0, pb.mwe_ranges[b]->first);
            hi = std::min(S - 1, pb.mwe_ranges[b]->second);
            int cnt = 0;
            for (int s = lo; s <= hi; ++s)
              if (pb.mask(b, s)) ++cnt;
            if (cnt == 0) lo = -1;
          }
          if (lo < 0) {
            pooled.row(b) = y.row(base);  // CLS fallback
            used[b] = {-1, -1};
          } else {
            pooled.row(b).setZero();
            int cnt = 0;
            for (int s = lo; s <= hi; ++s) {
              if (!pb.mask(b, s)) continue;
              pooled.row(b) += y.row(base + s);
              ++cnt;
            }
            pooled.row(b) /= T(cnt);
            used[b] = {lo, hi};
          }
          break;
        }
      }
    }
    out.sentence_vectors = pooled;

    MatX<T> cls_in = pooled;
    MatX<T> cls_drop;
    if (drop) {
      draw_dropout_mask(cls_in.rows(), cls_in.cols(), *rng, &cls_drop);
      cls_in.array() *= cls_drop.array();
    }
    out.logits = cls_in * params_.w_cls;
    out.logits.rowwise() += params_.b_cls.transpose();
    out.probabilities = out.logits;
    softmax_rows(out.probabilities);

    if (cache) {
      cache->max_arg = std::move(max_arg);
      cache->mwe_used = std::move(used);
      cache->pooled = std::move(pooled);
      cache->cls_drop = std::move(cls_drop);
      cache->cls_in = std::move(cls_in);
      cache->probs = out.probabilities;
    }
    return out;
  }

  /// Backward pass for a cached forward. dlogits must already include any
  /// batch-mean scaling. dsentence_extra, when given, is an additional
  /// gradient w.r.t. the pre-dropout pooled sentence vectors (the
  /// contrastive-loss injection point). Gradients accumulate into *grads;
  /// d_embedding, when requested, receives the gradient w.r.t. the
  /// pre-dropout embedding output (the FGM read point).
  void backward(const ForwardCache<T>& cache, const MatX<T>& dlogits,
                const MatX<T>* dsentence_extra, ModelTensors<T>* grads,
                MatX<T>* d_embedding = nullptr) const {
    const PaddedBatch& pb = cache.batch;
    const int B = pb.batch(), S = pb.seq(), D = cfg_.dim;
    const int H = cfg_.heads, dh = D / H;
    const bool drop = cache.cls_drop.size() > 0;

    grads->b_cls += dlogits.colwise().sum().transpose();
    grads->w_cls += cache.cls_in.transpose() * dlogits;
    MatX<T> dpooled = dlogits * params_.w_cls.transpose();
    if (drop) dpooled.array() *= cache.cls_drop.array();
    if (dsentence_extra) dpooled += *dsentence_extra;

    // Un-pool into the final hidden states (and embeddings for
    // first_last_avg).
    MatX<T> dy = MatX<T>::Zero(B * S, D);
    MatX<T> dh0 = MatX<T>::Zero(B * S, D);
    bool h0_used = false;
    for (int b = 0; b < B; ++b) {
      const int base = b * S;
      switch (cfg_.pooling) {
        case Pooling::Cls:
          dy.row(base) += dpooled.row(b);
          break;
        case Pooling::Mean: {
          const T inv = T(1) / T(cache.lens[b]);
          for (int s = 0; s < S; ++s)
            if (pb.mask(b, s)) dy.row(base + s) += dpooled.row(b) * inv;
          break;
        }
        case Pooling::Max: {
          for (int c = 0; c < D; ++c)
            dy(base + cache.max_arg(b, c), c) += dpooled(b, c);
          break;
        }
        case Pooling::FirstLastAvg: {
          h0_used = true;
          const T inv = T(1) / T(2 * cache.lens[b]);
          for (int s = 0; s < S; ++s) {
            if (!pb.mask(b, s)) continue;
            dy.row(base + s) += dpooled.row(b) * inv;
            dh0.row(base + s) += dpooled.row(b) * inv;
          }
          break;
        }
        case Pooling::MweToken: {
          const auto [lo, hi] = cache.mwe_used[b];
          if (lo < 0) {
            dy.row(base) += dpooled.row(b);
          } else {
            int cnt = 0;
            for (int s = lo; s <= hi; ++s)
              if (pb.mask(b, s)) ++cnt;
            const T inv = T(1) / T(cnt);
            for (int s = lo; s <= hi; ++s)
              if (pb.mask(b, s)) dy.row(base + s) += dpooled.row(b) * inv;
          }
          break;
        }
      }
    }

    MatX<T> dx = layer_norm_backward(dy, cache.lnf_xhat, cache.lnf_rstd,
                                     params_.lnf_g, &grads->lnf_g,
                                     &grads->lnf_b);

    const T scale = T(1) / std::sqrt(T(dh));
    for (int l = cfg_.layers - 1; l >= 0; --l) {
      const auto& L = params_.layers[l];
      const auto& bc = cache.blocks[l];
      auto& G = grads->layers[l];

      // FFN sublayer.
      MatX<T> df = dx;
      if (bc.ffn_drop.size() > 0) df.array() *= bc.ffn_drop.array();
      G.b2 += df.colwise().sum().transpose();
      G.w2 += bc.ffn_act.transpose() * df;
      MatX<T> dact = df * L.w2.transpose();
      MatX<T> dpre(dact.rows(), dact.cols());
      {
        const T* pa = dact.data();
        const T* pp = bc.ffn_pre.data();
        T* pd = dpre.data();
        for (Eigen::Index i = 0; i < dact.size(); ++i)
          pd[i] = pa[i] * gelu_grad_scalar(pp[i]);
      }
      G.b1 += dpre.colwise().sum().transpose();
      G.w1 += bc.ln2_out.transpose() * dpre;
      MatX<T> dbh = dpre * L.w1.transpose();
      MatX<T> dx_mid = layer_norm_backward(dbh, bc.ln2_xhat, bc.ln2_rstd,
                                           L.ln2_g, &G.ln2_g, &G.ln2_b);
      dx_mid += dx;  // residual

      // Attention sublayer.
      MatX<T> dattn = dx_mid;
      if (bc.attn_drop.size() > 0) dattn.array() *= bc.attn_drop.array();
      G.bo += dattn.colwise().sum().transpose();
      G.wo += bc.ctx.transpose() * dattn;
      MatX<T> dctx = dattn * L.wo.transpose();

      MatX<T> dq = MatX<T>::Zero(B * S, D);
      MatX<T> dk = MatX<T>::Zero(B * S, D);
      MatX<T> dv = MatX<T>::Zero(B * S, D);
      for (int b = 0; b < B; ++b) {
        for (int h = 0; h < H; ++h) {
          auto P = bc.probs.block((b * H + h) * S, 0, S, S);
          auto Q = bc.q.block(b * S, h * dh, S, dh);
          auto K = bc.k.block(b * S, h * dh, S, dh);
          auto V = bc.v.block(b * S, h * dh, S, dh);
          auto dC = dctx.block(b * S, h * dh, S, dh);

          MatX<T> dP = dC * V.transpose();
          dv.block(b * S, h * dh, S, dh) += P.transpose() * dC;
          // Softmax rows: dS = P .* (dP - rowwise(sum(dP .* P))).
          MatX<T> dS = dP;
          for (int r = 0; r < S; ++r) {
            const T inner = (dP.row(r).array() * P.row(r).array()).sum();
            dS.row(r) =
                (P.row(r).array() * (dP.row(r).array() - inner)).matrix();
          }
          dS *= scale;
          dq.block(b * S, h * dh, S, dh) += dS * K;
          dk.block(b * S, h * dh, S, dh) += dS.transpose() * Q;
        }
      }

      G.bq += dq.colwise().sum().transpose();
      G.wq += bc.ln1_out.transpose() * dq;
      G.bk += dk.colwise().sum().transpose();
      G.wk += bc.ln1_out.transpose() * dk;
      G.bv += dv.colwise().sum().transpose();
      G.wv += bc.ln1_out.transpose() * dv;
      MatX<T> da =
          dq * L.wq.transpose() + dk * L.wk.transpose() + dv * L.wv.transpose();
      MatX<T> dx_in = layer_norm_backward(da, bc.ln1_xhat, bc.ln1_rstd,
                                          L.ln1_g, &G.ln1_g, &G.ln1_b);
      dx_in += dx_mid;  // residual
      dx = std::move(dx_in);
    }

    if (h0_used) dx += dh0;
    MatX<T> demb = dx;
    if (cache.emb_drop.size() > 0) demb.array() *= cache.emb_drop.array();
    if (d_embedding) *d_embedding = demb;

    for (int b = 0; b < B; ++b)
      for (int s = 0; s < S; ++s) {
        grads->tok_emb.row(pb.ids(b, s)) += demb.row(b * S + s);
        grads->pos_emb.row(s) += demb.row(b * S + s);
      }
  }

 private:
  static constexpr T kLnEps = T(1e-5);

  void draw_dropout_mask(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                         MatX<T>* mask) const {
    const T keep = T(1) - T(cfg_.dropout_rate);
    const T inv = T(1) / keep;
    mask->resize(rows, cols);
    T* d = mask->data();
    for (Eigen::Index i = 0; i < mask->size(); ++i)
      d[i] = rng.uniform() < static_cast<double>(keep) ? inv : T(0);
  }

  // Row-wise layer norm; xhat and rstd are cached for the backward pass.
  static MatX<T> layer_norm(const MatX<T>& x, const VecX<T>& gamma,
                            const VecX<T>& beta, MatX<T>* xhat_out,
                            VecX<T>* rstd_out) {
    const Eigen::Index R = x.rows(), C = x.cols();
    MatX<T> xhat(R, C);
    VecX<T> rstd(R);
    MatX<T> out(R, C);
    for (Eigen::Index r = 0; r < R; ++r) {
      const T mean = x.row(r).mean();
      const T var = (x.row(r).array() - mean).square().sum() / T(C);
      const T rs = T(1) / std::sqrt(var + kLnEps);
      rstd(r) = rs;
      xhat.row(r) = ((x.row(r).array() - mean) * rs).matrix();
      out.row(r) = (xhat.row(r).array() * gamma.transpose().array() +
                    beta.transpose().array())
                       .matrix();
    }
    *xhat_out = std::move(xhat);
    *rstd_out = std::move(rstd);
    return out;
  }

  static MatX<T> layer_norm_backward(const MatX<T>& dout, const MatX<T>& xhat,
                                     const VecX<T>& rstd, const VecX<T>& gamma,
                                     VecX<T>* dgamma, VecX<T>* dbeta) {
    const Eigen::Index R = dout.rows(), C = dout.cols();
    MatX<T> dx(R, C);
    for (Eigen::Index r = 0; r < R; ++r) {
      VecX<T> dxhat =
          (dout.row(r).transpose().array() * gamma.array()).matrix();
      const T m1 = dxhat.mean();
      const T m2 =
          (dxhat.array() * xhat.row(r).transpose().array()).mean();
      dx.row(r) = (rstd(r) *
                   (dxhat.array() - m1 - xhat.row(r).transpose().array() * m2))
                      .matrix()
                      .transpose();
    }
    *dgamma +=
        (dout.array() * xhat.array()).colwise().sum().matrix().transpose();
    *dbeta += dout.colwise().sum().transpose();
    return dx;
  }

  EncoderConfig cfg_;
  ModelTensors<T> params_;
};

}  // namespace idiomark
