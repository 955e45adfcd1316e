#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fineray/params.hpp"
#include "fineray/render.hpp"
#include "fineray/tape.hpp"

namespace fineray {

enum class ProposerArch {
  kTransformer,
  kPool,
  kMlpMix,
  kBlind,
  kPoolNoPosition,
  kPoolConcat,
  kPoolLearntPosition,
};

inline const char* to_string(ProposerArch a) {
  switch (a) {
    case ProposerArch::kTransformer: return "transformer";
    case ProposerArch::kPool: return "pool";
    case ProposerArch::kMlpMix: return "mlpmix";
    case ProposerArch::kBlind: return "blind";
    case ProposerArch::kPoolNoPosition: return "pool_no_position";
    case ProposerArch::kPoolConcat: return "pool_concat";
    case ProposerArch::kPoolLearntPosition: return "pool_learnt_position";
  }
  return "?";
}

inline bool parse_proposer_arch(const std::string& s, ProposerArch* out) {
  for (ProposerArch a :
       {ProposerArch::kTransformer, ProposerArch::kPool, ProposerArch::kMlpMix,
        ProposerArch::kBlind, ProposerArch::kPoolNoPosition, ProposerArch::kPoolConcat,
        ProposerArch::kPoolLearntPosition}) {
    if (s == to_string(a)) {
      *out = a;
      return true;
    }
  }
  return false;
}

inline ProposerArch parse_proposer_arch(const std::string& s) {
  ProposerArch a;
  if (!parse_proposer_arch(s, &a))
    throw Error("unknown proposer architecture '" + s +
                "' (expected transformer|pool|mlpmix|blind|pool_no_position|pool_concat|"
                "pool_learnt_position)");
  return a;
}

struct ProposerConfig {
  ProposerArch arch = ProposerArch::kMlpMix;
  int n_coarse = 64;
  int n_fine = 128;
  int feature_dim = 256;
  bool with_importance = false;
  // Unstated block internals, kept here so ablation is cheap.
  int mix_token_hidden = 64;
  int mix_channel_hidden = 256;
  int tf_dim = 16;
  int tf_ff_hidden = 64;  // 4 * tf_dim
  int concat_pos_dim = 32;
  // Highest frequency octave of the fixed-width sinusoidal depth embedding.
  double embed_max_octave = 8.0;
};

/// Fixed-width sinusoidal embedding of a scalar depth t in [0,1]: dim/2
/// sin/cos pairs with frequencies pi * 2^(k * max_octave / (dim/2 - 1)).
inline std::vector<double> depth_embedding(double t, int dim, double max_octave) {
  if (dim < 2 || dim % 2 != 0) throw Error("depth_embedding: dim must be even and >= 2");
  int k = dim / 2;
  std::vector<double> out(dim);
  for (int i = 0; i < k; ++i) {
    double f = M_PI * std::pow(2.0, k > 1 ? max_octave * i / (k - 1) : 0.0);
    out[i] = std::sin(f * t);
    out[k + i] = std::cos(f * t);
  }
  return out;
}

/// Learned (or degenerate) sample proposal outputs for one ray. t_fine keeps
/// the raw head slot order; sort before merging for rendering.
template <class Real>
struct Proposal {
  typename Tape<Real>::Id t_fine = -1;      // (n_fine), each in (0,1)
  typename Tape<Real>::Id importance = -1;  // (n_coarse + n_fine) logits, slot order
};

/// Maps coarse-network features + sample depths to fine sample locations and
/// optional per-sample importance logits. The importance path always consumes
/// gradient-stopped features; the proposal path is stopped only when the
/// caller asks (mimicry pre-training).
template <class Real>
class Proposer {
 public:
  using Id = typename Tape<Real>::Id;

  Proposer(ProposerConfig cfg, std::string prefix = "proposer.")
      : cfg_(cfg), prefix_(std::move(prefix)) {
    if (cfg_.n_coarse < 1 || cfg_.n_fine < 1)
      throw Error("ProposerConfig: n_coarse and n_fine must be >= 1");
  }

  const ProposerConfig& config() const { return cfg_; }

  void init(ParameterStore<Real>& store, uint64_t seed) const {
    switch (cfg_.arch) {
      case ProposerArch::kBlind:
        store.add_uniform(prefix_ + "blind.t", {cfg_.n_fine}, 2.0, seed);
        if (cfg_.with_importance)
          store.add_uniform(prefix_ + "blind.imp", {cfg_.n_coarse + cfg_.n_fine}, 0.1, seed);
        return;
      case ProposerArch::kPool:
      case ProposerArch::kPoolNoPosition:
      case ProposerArch::kPoolLearntPosition:
        add_layer(store, seed, prefix_ + "pool.fc", cfg_.feature_dim, cfg_.feature_dim, true);
        break;
      case ProposerArch::kPoolConcat:
        add_layer(store, seed, prefix_ + "pool.fc", cfg_.feature_dim + cfg_.concat_pos_dim,
                  cfg_.feature_dim, true);
        break;
      case ProposerArch::kMlpMix: {
        int f = cfg_.feature_dim;
        add_norm(store, prefix_ + "mix.ln1", f);
        add_layer(store, seed, prefix_ + "mix.tok1", cfg_.n_coarse, cfg_.mix_token_hidden, true);
        add_layer(store, seed, prefix_ + "mix.tok2", cfg_.mix_token_hidden, cfg_.n_coarse, false);
        add_norm(store, prefix_ + "mix.ln2", f);
        add_layer(store, seed, prefix_ + "mix.ch1", f, cfg_.mix_channel_hidden, true);
        add_layer(store, seed, prefix_ + "mix.ch2", cfg_.mix_channel_hidden, f, false);
        break;
      }
      case ProposerArch::kTransformer: {
        int d = cfg_.tf_dim;
        add_layer(store, seed, prefix_ + "tf.proj", cfg_.feature_dim, d, false);
        add_norm(store, prefix_ + "tf.enc.ln1", d);
        for (const char* n : {"q", "k", "v", "o"})
          add_layer(store, seed, prefix_ + "tf.enc." + std::string(n), d, d, false);
        add_norm(store, prefix_ + "tf.enc.ln2", d);
        add_layer(store, seed, prefix_ + "tf.enc.ff1", d, cfg_.tf_ff_hidden, true);
        add_layer(store, seed, prefix_ + "tf.enc.ff2", cfg_.tf_ff_hidden, d, false);
        store.add_uniform(prefix_ + "tf.queries", {cfg_.n_fine, d}, std::sqrt(1.0 / d), seed);
        add_norm(store, prefix_ + "tf.dec.lnq", d);
        add_norm(store, prefix_ + "tf.dec.lnkv", d);
        for (const char* n : {"q", "k", "v", "o"})
          add_layer(store, seed, prefix_ + "tf.dec." + std::string(n), d, d, false);
        add_norm(store, prefix_ + "tf.dec.ln2", d);
        add_layer(store, seed, prefix_ + "tf.dec.ff1", d, cfg_.tf_ff_hidden, true);
        add_layer(store, seed, prefix_ + "tf.dec.ff2", cfg_.tf_ff_hidden, d, false);
        add_layer(store, seed, prefix_ + "tf.head", d, 1, false);
        if (cfg_.with_importance) {
          add_layer(store, seed, prefix_ + "tf.imp_enc", d, 1, false);
          add_layer(store, seed, prefix_ + "tf.imp_dec", d, 1, false);
        }
        return;
      }
    }
    // Shared decode heads of the pooled architectures.
    add_layer(store, seed, prefix_ + "head.t", cfg_.feature_dim, cfg_.n_fine, false);
    if (cfg_.with_importance)
      add_layer(store, seed, prefix_ + "head.imp", cfg_.feature_dim,
                cfg_.n_coarse + cfg_.n_fine, false);
    if (cfg_.arch == ProposerArch::kPoolLearntPosition)
      store.add_uniform(prefix_ + "pool.pos_embed", {cfg_.n_coarse, cfg_.feature_dim},
                        std::sqrt(1.0 / cfg_.feature_dim), seed);
  }

  /// features: (n_coarse, feature_dim) node, ignored by the blind proposer;
  /// positions: the coarse sample depths (constants).
  Proposal<Real> propose(TapeParams<Real>& tp, Id features, const std::vector<double>& positions,
                         bool stop_features_for_proposal) const {
    Tape<Real>& tape = tp.tape();
    if (cfg_.arch == ProposerArch::kBlind) {
      Proposal<Real> out;
      out.t_fine = tape.sigmoid(tp(prefix_ + "blind.t"));
      if (cfg_.with_importance) out.importance = tp(prefix_ + "blind.imp");
      return out;
    }
    if (static_cast<int>(positions.size()) != cfg_.n_coarse)
      throw Error("Proposer: expected " + std::to_string(cfg_.n_coarse) + " positions");
    const Tensor<Real>& f = tape.value(features);
    if (f.rank() != 2 || f.shape[0] != cfg_.n_coarse || f.shape[1] != cfg_.feature_dim)
      throw Error("Proposer: features must be (" + std::to_string(cfg_.n_coarse) + "," +
                  std::to_string(cfg_.feature_dim) + "), got " + detail::shape_str(f.shape));

    Id prop_in = stop_features_for_proposal ? tape.stop_gradient(features) : features;

    if (cfg_.arch == ProposerArch::kTransformer) return propose_transformer(tp, prop_in, features, positions);

    Id pooled = encode_pooled(tp, prop_in, positions);
    Proposal<Real> out;
    out.t_fine = tape.sigmoid(
        tape.reshape(tape.linear(pooled, tp(prefix_ + "head.t.w"), tp(prefix_ + "head.t.b")),
                     {cfg_.n_fine}));
    if (cfg_.with_importance) {
      Id pooled_imp = encode_pooled(tp, tape.stop_gradient(features), positions);
      out.importance = tape.reshape(
          tape.linear(pooled_imp, tp(prefix_ + "head.imp.w"), tp(prefix_ + "head.imp.b")),
          {cfg_.n_coarse + cfg_.n_fine});
    }
    return out;
  }

  int64_t param_count(const ParameterStore<Real>& store) const {
    return store.count_with_prefix(prefix_);
  }

 private:
  ProposerConfig cfg_;
  std::string prefix_;

  static void add_layer(ParameterStore<Real>& store, uint64_t seed, const std::string& name,
                        int in, int out, bool relu) {
    double limit = relu ? std::sqrt(6.0 / in) : 0.3 * std::sqrt(1.0 / in);
    store.add_uniform(name + ".w", {in, out}, limit, seed);
    store.add_zeros(name + ".b", {out});
  }
  static void add_norm(ParameterStore<Real>& store, const std::string& name, int dim) {
    store.add(name + ".g", Tensor<Real>::full({dim}, Real(1)));
    store.add_zeros(name + ".b", {dim});
  }

  Id position_matrix(Tape<Real>& tape, const std::vector<double>& positions, int dim) const {
    Tensor<Real> m = Tensor<Real>::zeros({static_cast<int>(positions.size()), dim});
    for (size_t r = 0; r < positions.size(); ++r) {
      std::vector<double> e = depth_embedding(positions[r], dim, cfg_.embed_max_octave);
      for (int c = 0; c < dim; ++c) m.at(static_cast<int>(r), c) = static_cast<Real>(e[c]);
    }
    return tape.constant(std::move(m));
  }

  Id linear_named(TapeParams<Real>& tp, Id x, const std::string& name) const {
    return tp.tape().linear(x, tp(name + ".w"), tp(name + ".b"));
  }
  Id norm_named(TapeParams<Real>& tp, Id x, const std::string& name) const {
    return tp.tape().layer_norm(x, tp(name + ".g"), tp(name + ".b"));
  }

  /// Per-point encoder + average pooling shared by the pool family and the
  /// mixer; returns the (1, feature_dim) ray representation.
  Id encode_pooled(TapeParams<Real>& tp, Id features, const std::vector<double>& positions) const {
    Tape<Real>& tape = tp.tape();
    Id x = features;
    switch (cfg_.arch) {
      case ProposerArch::kPool:
      case ProposerArch::kMlpMix:
        x = tape.add(x, position_matrix(tape, positions, cfg_.feature_dim));
        break;
      case ProposerArch::kPoolNoPosition:
        break;
      case ProposerArch::kPoolConcat:
        x = tape.concat_cols({x, position_matrix(tape, positions, cfg_.concat_pos_dim)});
        break;
      case ProposerArch::kPoolLearntPosition:
        x = tape.add(x, tp(prefix_ + "pool.pos_embed"));
        break;
      default:
        throw Error("encode_pooled: bad arch");
    }

    if (cfg_.arch == ProposerArch::kMlpMix) {
      // Token mixing across the n_coarse axis, then channel mixing; both
      // pre-normalized with residual connections.
      Id xn = norm_named(tp, x, prefix_ + "mix.ln1");
      Id xt = tape.transpose(xn);  // (feature_dim, n_coarse)
      Id th = tape.relu(linear_named(tp, xt, prefix_ + "mix.tok1"));
      Id ty = linear_named(tp, th, prefix_ + "mix.tok2");
      x = tape.add(x, tape.transpose(ty));
      Id x2 = norm_named(tp, x, prefix_ + "mix.ln2");
      Id ch = tape.relu(linear_named(tp, x2, prefix_ + "mix.ch1"));
      x = tape.add(x, linear_named(tp, ch, prefix_ + "mix.ch2"));
    } else {
      x = tape.relu(linear_named(tp, x, prefix_ + "pool.fc"));
    }
    return tape.reshape(tape.mean_rows(x), {1, cfg_.feature_dim});
  }

  Id attention(TapeParams<Real>& tp, Id q_in, Id kv_in, const std::string& prefix) const {
    Tape<Real>& tape = tp.tape();
    Id q = linear_named(tp, q_in, prefix + ".q");
    Id k = linear_named(tp, kv_in, prefix + ".k");
    Id v = linear_named(tp, kv_in, prefix + ".v");
    Real scale = Real(1) / static_cast<Real>(std::sqrt(double(cfg_.tf_dim)));
    Id attn = tape.softmax(tape.scale(tape.matmul(q, tape.transpose(k)), scale));
    return linear_named(tp, tape.matmul(attn, v), prefix + ".o");
  }

  Proposal<Real> propose_transformer(TapeParams<Real>& tp, Id prop_features, Id raw_features,
                                     const std::vector<double>& positions) const {
    Tape<Real>& tape = tp.tape();
    auto run_encoder = [&](Id feats) {
      Id x = linear_named(tp, feats, prefix_ + "tf.proj");
      x = tape.add(x, position_matrix(tape, positions, cfg_.tf_dim));
      Id n1 = norm_named(tp, x, prefix_ + "tf.enc.ln1");
      x = tape.add(x, attention(tp, n1, n1, prefix_ + "tf.enc"));
      Id n2 = norm_named(tp, x, prefix_ + "tf.enc.ln2");
      Id ff = linear_named(tp, tape.relu(linear_named(tp, n2, prefix_ + "tf.enc.ff1")),
                           prefix_ + "tf.enc.ff2");
      return tape.add(x, ff);
    };
    auto run_decoder = [&](Id enc) {
      Id q = tp(prefix_ + "tf.queries");
      Id nq = norm_named(tp, q, prefix_ + "tf.dec.lnq");
      Id nkv = norm_named(tp, enc, prefix_ + "tf.dec.lnkv");
      Id x = tape.add(q, attention(tp, nq, nkv, prefix_ + "tf.dec"));
      Id n2 = norm_named(tp, x, prefix_ + "tf.dec.ln2");
      Id ff = linear_named(tp, tape.relu(linear_named(tp, n2, prefix_ + "tf.dec.ff1")),
                           prefix_ + "tf.dec.ff2");
      return tape.add(x, ff);
    };

    Proposal<Real> out;
    Id enc = run_encoder(prop_features);
    Id dec = run_decoder(enc);
    out.t_fine = tape.sigmoid(
        tape.reshape(linear_named(tp, dec, prefix_ + "tf.head"), {cfg_.n_fine}));
    if (cfg_.with_importance) {
      Id enc_i = run_encoder(tape.stop_gradient(raw_features));
      Id dec_i = run_decoder(enc_i);
      Id li_c = tape.reshape(linear_named(tp, enc_i, prefix_ + "tf.imp_enc"), {cfg_.n_coarse});
      Id li_f = tape.reshape(linear_named(tp, dec_i, prefix_ + "tf.imp_dec"), {cfg_.n_fine});
      out.importance = tape.concat({li_c, li_f});
    }
    return out;
  }
};

/// Prunes merged samples by predicted importance: keep sigmoid(logit) >=
/// threshold; if nothing survives, keep the single best-scoring sample.
struct FilterResult {
  std::vector<int> kept;  // indices into the merged order
  double kept_fraction = 1.0;
};

inline FilterResult importance_filter(const SamplePositions& merged,
                                      const std::vector<double>& logits, double threshold) {
  if (logits.size() != merged.t.size())
    throw Error("importance_filter: logits/samples length mismatch");
  if (merged.t.empty()) throw Error("importance_filter: empty sample set");
  FilterResult out;
  for (size_t i = 0; i < logits.size(); ++i) {
    double p = 1.0 / (1.0 + std::exp(-logits[i]));
    if (p >= threshold) out.kept.push_back(static_cast<int>(i));
  }
  if (out.kept.empty()) {
    int best = 0;
    for (size_t i = 1; i < logits.size(); ++i)
      if (logits[i] > logits[best]) best = static_cast<int>(i);
    out.kept.push_back(best);
  }
  out.kept_fraction = static_cast<double>(out.kept.size()) / static_cast<double>(merged.t.size());
  return out;
}

}  // namespace fineray
