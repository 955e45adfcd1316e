#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fineray/params.hpp"
#include "fineray/rng.hpp"
#include "fineray/tape.hpp"

namespace fineray {

struct EncodingConfig {
  int num_frequencies = 10;
  bool include_input = true;
};

inline int encoded_dim(int input_dim, const EncodingConfig& cfg) {
  if (cfg.num_frequencies < 1) throw Error("EncodingConfig: num_frequencies must be >= 1");
  return input_dim * ((cfg.include_input ? 1 : 0) + 2 * cfg.num_frequencies);
}

/// NeRF frequency encoding: [x?, sin(2^k pi x), cos(2^k pi x)] for
/// k = 0..L-1, applied elementwise and concatenated along the feature axis.
template <class Real>
typename Tape<Real>::Id positional_encode(Tape<Real>& tape, typename Tape<Real>::Id x,
                                          const EncodingConfig& cfg) {
  if (cfg.num_frequencies < 1) throw Error("positional_encode: num_frequencies must be >= 1");
  bool was_vec = tape.value(x).rank() == 1;
  if (was_vec) x = tape.reshape(x, {1, tape.value(x).shape[0]});
  std::vector<typename Tape<Real>::Id> parts;
  if (cfg.include_input) parts.push_back(x);
  for (int k = 0; k < cfg.num_frequencies; ++k) {
    auto scaled = tape.scale(x, static_cast<Real>(std::pow(2.0, k) * M_PI));
    parts.push_back(tape.sin(scaled));
    parts.push_back(tape.cos(scaled));
  }
  auto out = tape.concat_cols(parts);
  if (was_vec) out = tape.reshape(out, {tape.value(out).shape[1]});
  return out;
}

/// Plain (untaped) reference of the same encoding, used by callers that only
/// need values.
inline std::vector<double> positional_encode_values(const std::vector<double>& x,
                                                    const EncodingConfig& cfg) {
  std::vector<double> out;
  out.reserve(encoded_dim(static_cast<int>(x.size()), cfg));
  if (cfg.include_input) out.insert(out.end(), x.begin(), x.end());
  for (int k = 0; k < cfg.num_frequencies; ++k) {
    double f = std::pow(2.0, k) * M_PI;
    for (double v : x) out.push_back(std::sin(f * v));
    for (double v : x) out.push_back(std::cos(f * v));
  }
  return out;
}

struct FieldConfig {
  EncodingConfig position_encoding{10, true};
  EncodingConfig direction_encoding{4, true};
  int trunk_width = 256;
  int trunk_depth = 8;
  int skip_layer = 4;  // encoded position is concatenated into this layer's input
  int color_hidden = 128;
};

/// Radiance-field MLP: position -> (density, 256-D feature), feature +
/// direction -> color. Density and the feature are direction-invariant by
/// construction; direction enters only the color head.
template <class Real>
class FieldNetwork {
 public:
  using Id = typename Tape<Real>::Id;

  FieldNetwork(FieldConfig cfg, std::string prefix) : cfg_(cfg), prefix_(std::move(prefix)) {}

  const FieldConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }
  int feature_dim() const { return cfg_.trunk_width; }

  void init(ParameterStore<Real>& store, uint64_t seed) const {
    int pdim = encoded_dim(3, cfg_.position_encoding);
    int ddim = encoded_dim(3, cfg_.direction_encoding);
    int w = cfg_.trunk_width;
    int in = pdim;
    for (int l = 0; l < cfg_.trunk_depth; ++l) {
      if (l == cfg_.skip_layer) in += pdim;
      add_layer(store, seed, layer_name("trunk", l), in, w, /*relu=*/true);
      in = w;
    }
    add_layer(store, seed, prefix_ + "density", w, 1, /*relu=*/false);
    // Start slightly opaque: with a zero bias the rectified density head can
    // initialize all-negative and never receive gradient (dead ReLU).
    store.get(prefix_ + "density.b").data[0] = Real(0.5);
    add_layer(store, seed, prefix_ + "bottleneck", w, w, /*relu=*/false);
    add_layer(store, seed, prefix_ + "color_hidden", w + ddim, cfg_.color_hidden, /*relu=*/true);
    add_layer(store, seed, prefix_ + "color_out", cfg_.color_hidden, 3, /*relu=*/false);
  }

  struct Output {
    Id sigma;    // (m), >= 0
    Id color;    // (m,3), in [0,1]
    Id feature;  // (m,trunk_width): activations feeding the density head
  };

  /// Batched query; positions and directions are (m,3). Directions must be
  /// unit length. density_noise_std > 0 adds Normal noise to the pre-ReLU
  /// density activations (training only).
  Output query(TapeParams<Real>& tp, Id positions, Id directions, Real density_noise_std = 0,
               Rng* rng = nullptr) const {
    Tape<Real>& tape = tp.tape();
    const Tensor<Real>& dirs = tape.value(directions);
    if (tape.value(positions).rank() != 2 || tape.value(positions).shape[1] != 3 ||
        dirs.rank() != 2 || dirs.shape[1] != 3)
      throw Error("FieldNetwork::query: positions/directions must be (m,3)");
    if (tape.value(positions).shape[0] != dirs.shape[0])
      throw Error("FieldNetwork::query: positions/directions row mismatch");
    for (int r = 0; r < dirs.shape[0]; ++r) {
      double n2 = 0;
      for (int c = 0; c < 3; ++c) n2 += double(dirs.at(r, c)) * double(dirs.at(r, c));
      if (std::abs(std::sqrt(n2) - 1.0) > 1e-6)
        throw Error("FieldNetwork::query: direction row " + std::to_string(r) +
                    " is not unit length");
    }

    Id enc_pos = positional_encode(tape, positions, cfg_.position_encoding);
    Id h = enc_pos;
    for (int l = 0; l < cfg_.trunk_depth; ++l) {
      if (l == cfg_.skip_layer) h = tape.concat_cols({h, enc_pos});
      h = tape.relu(tape.linear(h, tp(layer_name("trunk", l) + ".w"),
                                tp(layer_name("trunk", l) + ".b")));
    }
    Id feature = h;

    Id sigma_pre = tape.linear(feature, tp(prefix_ + "density.w"), tp(prefix_ + "density.b"));
    if (density_noise_std > Real(0)) {
      if (!rng) throw Error("FieldNetwork::query: density noise requested without rng");
      Tensor<Real> noise = Tensor<Real>::zeros(tape.value(sigma_pre).shape);
      for (Real& v : noise.data) v = static_cast<Real>(rng->normal()) * density_noise_std;
      sigma_pre = tape.add(sigma_pre, tape.constant(std::move(noise)));
    }
    Id sigma = tape.reshape(tape.relu(sigma_pre), {tape.value(sigma_pre).shape[0]});

    Id bottleneck =
        tape.linear(feature, tp(prefix_ + "bottleneck.w"), tp(prefix_ + "bottleneck.b"));
    Id enc_dir = positional_encode(tape, directions, cfg_.direction_encoding);
    Id ch = tape.relu(tape.linear(tape.concat_cols({bottleneck, enc_dir}),
                                  tp(prefix_ + "color_hidden.w"), tp(prefix_ + "color_hidden.b")));
    Id color =
        tape.sigmoid(tape.linear(ch, tp(prefix_ + "color_out.w"), tp(prefix_ + "color_out.b")));

    return {sigma, color, feature};
  }

  int64_t param_count(const ParameterStore<Real>& store) const {
    return store.count_with_prefix(prefix_);
  }

 private:
  FieldConfig cfg_;
  std::string prefix_;

  std::string layer_name(const char* group, int l) const {
    return prefix_ + group + "." + std::to_string(l);
  }

  static void add_layer(ParameterStore<Real>& store, uint64_t seed, const std::string& name,
                        int in, int out, bool relu) {
    // He-style fan-in uniform for ReLU layers, a smaller uniform for heads.
    double limit = relu ? std::sqrt(6.0 / in) : 0.3 * std::sqrt(1.0 / in);
    store.add_uniform(name + ".w", {in, out}, limit, seed);
    store.add_zeros(name + ".b", {out});
  }
};

}  // namespace fineray
