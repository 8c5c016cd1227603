#pragma once

// CNN, BNet2 and BNet (switch-layer) architectures over the 4-real complex
// embedding. All three share Layer 0 (kernel 2w, stride 2w on the input) and
// produce Y as [batch, 4K] embedded outputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bnet2/cheb.hpp"
#include "bnet2/complex_embed.hpp"
#include "bnet2/conv.hpp"
#include "bnet2/tape.hpp"

namespace bnet2 {

enum class Variant { cnn, bnet2, bnet };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::cnn: return "cnn";
    case Variant::bnet2: return "bnet2";
    case Variant::bnet: return "bnet";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "cnn" || s == "CNN") return Variant::cnn;
  if (s == "bnet2" || s == "BNET2" || s == "BNet2") return Variant::bnet2;
  if (s == "bnet" || s == "BNET" || s == "BNet") return Variant::bnet;
  throw ValidationError("unknown network variant '" + s + "'");
}

struct NetworkSpec {
  Variant variant = Variant::bnet2;
  std::size_t N = 0;  ///< input length
  std::size_t K = 0;  ///< output length (complex outputs)
  int L = 1;          ///< depth
  int r = 1;          ///< channel parameter / Chebyshev order
  std::size_t w = 0;  ///< Layer-0 half kernel, N = w * 2^L
  int switch_layer = 0;  ///< L_t, BNet only
  bool final_activation = false;  ///< bias + ReLU on Layer L
  bool complex_input = false;     ///< input carried as 4-real embedded channels

  std::size_t parts(int level) const { return std::size_t{1} << level; }

  /// Layer-L part read by output c. Outputs sit at cell centres of a uniform
  /// partition, so each maps to the dyadic part containing (c + 1/2) K^-1.
  std::size_t output_part(std::size_t c) const {
    const double pos = (static_cast<double>(c) + 0.5) * static_cast<double>(parts(L)) / static_cast<double>(K);
    return static_cast<std::size_t>(std::floor(pos));
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw ValidationError("network spec: " + m); };
    if (L < 1) fail("L must be >= 1");
    if (L > 24) fail("L too large");
    if (r < 1) fail("r must be >= 1");
    if (K < 1) fail("K must be >= 1");
    if (N == 0 || N % parts(L) != 0) fail("N must be a positive multiple of 2^L");
    if (w != N / parts(L)) fail("w must equal N / 2^L");
    if (K >= parts(L) && K % parts(L) != 0) fail("K >= 2^L requires K divisible by 2^L");
    if (variant == Variant::bnet && (switch_layer < 1 || switch_layer >= L))
      fail("switch layer L_t must satisfy 1 <= L_t < L");
  }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

inline NetworkSpec make_spec(Variant v, std::size_t N, std::size_t K, int L, int r) {
  NetworkSpec s;
  s.variant = v;
  s.N = N;
  s.K = K;
  s.L = L;
  s.r = r;
  s.w = (L >= 0 && L < 63) ? N / (std::size_t{1} << L) : 0;
  s.switch_layer = v == Variant::bnet ? std::max(1, L / 2) : 0;
  return s;
}

enum class LayerKind { conv, switch_dense, conv_transpose };

struct LayerPlan {
  LayerKind kind = LayerKind::conv;
  ConvGeometry geometry;       // conv / conv_transpose
  bool activation = true;
  bool has_bias = true;
  bool reshape_to_single_position = false;  // BNet readout flattens positions first
  std::size_t positions = 0;   // switch: S
  std::size_t groups = 0;      // switch: G
  std::size_t block_width = 0; // switch: m
  double weight_multiplier = 16;  // complex-unit conversion: real entries per complex weight

  Shape weight_shape() const {
    if (kind == LayerKind::switch_dense) return {positions, groups, block_width, block_width};
    return geometry.weight_shape();
  }
  std::size_t bias_size() const {
    if (!has_bias) return 0;
    if (kind == LayerKind::switch_dense) return positions * groups * block_width;
    return geometry.out_channels;
  }
};

namespace detail {

inline ConvGeometry readout_geometry(const NetworkSpec& s, bool dense) {
  const std::size_t in = 4 * s.parts(s.L) * s.r;
  if (dense) return ConvGeometry::dense(1, in, 4 * s.K);
  ConvGeometry g{1, in, 4 * s.K, 4 * static_cast<std::size_t>(s.r), {}};
  for (std::size_t c = 0; c < s.K; ++c) {
    const std::size_t p = s.output_part(c);
    if (!g.blocks.empty() && g.blocks.back().in_begin == p * g.block_in)
      g.blocks.back().out_count += 4;
    else
      g.blocks.push_back({p * g.block_in, 4 * c, 4});
  }
  return g;
}

}  // namespace detail

/// Layer-by-layer shapes and channel patterns for a spec.
inline std::vector<LayerPlan> plan_layers(const NetworkSpec& s) {
  s.validate();
  const std::size_t r = static_cast<std::size_t>(s.r);
  std::vector<LayerPlan> plan;
  LayerPlan l0;
  const std::size_t in0 = s.complex_input ? 4 : 1;
  l0.geometry = ConvGeometry::dense(2 * s.w, in0, 8 * r);
  l0.weight_multiplier = s.complex_input ? 16 : 4;
  plan.push_back(l0);

  const int conv_layers = s.variant == Variant::bnet ? s.switch_layer : s.L;
  for (int l = 1; l < conv_layers; ++l) {
    LayerPlan lp;
    const std::size_t cin = 4 * s.parts(l) * r, cout = 2 * cin;
    lp.geometry = s.variant == Variant::cnn ? ConvGeometry::dense(2, cin, cout)
                                            : ConvGeometry::grouped(2, cin, cout, s.parts(l));
    plan.push_back(lp);
  }

  if (s.variant == Variant::bnet) {
    LayerPlan sw;
    sw.kind = LayerKind::switch_dense;
    sw.positions = s.parts(s.L - s.switch_layer);
    sw.groups = s.parts(s.switch_layer);
    sw.block_width = 4 * r;
    plan.push_back(sw);
    for (int l = s.switch_layer; l < s.L; ++l) {
      LayerPlan lp;
      lp.kind = LayerKind::conv_transpose;
      const std::size_t groups = s.parts(s.L - l - 1);
      const std::size_t cin = 4 * s.parts(s.L - l) * r, cout = cin / 2;
      lp.geometry = ConvGeometry::grouped(2, cin, cout, groups);
      plan.push_back(lp);
    }
  }

  LayerPlan last;
  last.geometry = detail::readout_geometry(s, s.variant == Variant::cnn);
  last.activation = s.final_activation;
  last.has_bias = s.final_activation;
  last.reshape_to_single_position = s.variant == Variant::bnet;
  plan.push_back(last);
  return plan;
}

struct LayerParams {
  Tensor weight;
  Tensor bias;  // empty when the layer has no bias

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct ParamSet {
  NetworkSpec spec;
  std::vector<LayerParams> layers;

  std::vector<Tensor*> tensors() {
    std::vector<Tensor*> out;
    for (auto& l : layers) {
      out.push_back(&l.weight);
      if (!l.bias.empty()) out.push_back(&l.bias);
    }
    return out;
  }
  std::vector<const Tensor*> tensors() const {
    std::vector<const Tensor*> out;
    for (const auto& l : layers) {
      out.push_back(&l.weight);
      if (!l.bias.empty()) out.push_back(&l.bias);
    }
    return out;
  }
  std::size_t real_count() const {
    std::size_t n = 0;
    for (const auto* t : tensors()) n += t->size();
    return n;
  }

  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

enum class InitKind { zeros, random, ft };

/// Allocates zero parameters shaped by the spec.
inline ParamSet allocate_params(const NetworkSpec& spec) {
  ParamSet ps;
  ps.spec = spec;
  for (const auto& lp : plan_layers(spec)) {
    LayerParams l;
    l.weight = Tensor(lp.weight_shape());
    if (lp.has_bias) l.bias = Tensor({lp.bias_size()});
    ps.layers.push_back(std::move(l));
  }
  return ps;
}

/// Uniform Glorot-style weights (fan counts per channel block), zero biases.
inline void randomize_params(ParamSet& ps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto plan = plan_layers(ps.spec);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& lp = plan[i];
    double fan_in, fan_out;
    if (lp.kind == LayerKind::switch_dense) {
      fan_in = fan_out = static_cast<double>(lp.block_width);
    } else {
      const auto& g = lp.geometry;
      const double per_block_out = static_cast<double>(g.blocks.front().out_count);
      if (lp.kind == LayerKind::conv) {
        fan_in = static_cast<double>(g.kernel * g.block_in);
        fan_out = per_block_out;
      } else {
        fan_in = static_cast<double>(g.block_in);
        fan_out = per_block_out * static_cast<double>(g.kernel);
      }
    }
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : ps.layers[i].weight.data()) v = dist(rng);
    ps.layers[i].bias.fill(0.0);
  }
}

/// Parameter tensors bound onto a tape.
struct BoundParams {
  std::vector<Var> weights;
  std::vector<Var> biases;  // unbound Var where absent

  std::vector<Var> all() const {
    std::vector<Var> out;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      out.push_back(weights[i]);
      if (biases[i].valid()) out.push_back(biases[i]);
    }
    return out;
  }
};

inline BoundParams bind(Tape& tape, const ParamSet& ps, bool requires_grad = true) {
  BoundParams b;
  for (const auto& l : ps.layers) {
    b.weights.push_back(tape.leaf(l.weight, requires_grad));
    b.biases.push_back(l.bias.empty() ? Var{} : tape.leaf(l.bias, requires_grad));
  }
  return b;
}

/// Network forward on the tape. x is [batch, N] for real input or
/// [batch, N, 4] for embedded complex input; the result is [batch, 4K].
inline Var forward(const NetworkSpec& spec, const BoundParams& p, Var x) {
  const auto plan = plan_layers(spec);
  const Tensor& xv = x.value();
  const std::size_t batch = xv.dim(0);
  const std::size_t in_ch = spec.complex_input ? 4 : 1;
  if (xv.dim(1) != spec.N)
    throw DimensionError("forward: axis 1 (input length) is " + std::to_string(xv.dim(1)) +
                         ", expected " + std::to_string(spec.N));
  if (xv.size() != batch * spec.N * in_ch) throw DimensionError("forward: input channel axis mismatch");
  Var z = reshape(x, {batch, spec.N, in_ch});
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& lp = plan[i];
    switch (lp.kind) {
      case LayerKind::conv:
        if (lp.reshape_to_single_position) z = reshape(z, {batch, 1, z.value().size() / batch});
        z = conv1d(z, p.weights[i], p.biases[i], lp.geometry);
        break;
      case LayerKind::conv_transpose:
        z = conv_transpose1d(z, p.weights[i], p.biases[i], lp.geometry);
        break;
      case LayerKind::switch_dense:
        z = local_dense(z, p.weights[i], p.biases[i]);
        break;
    }
    if (lp.activation) z = relu(z);
    if (lp.kind == LayerKind::switch_dense) z = swap_blocks(z, lp.groups, lp.block_width);
  }
  return reshape(z, {batch, 4 * spec.K});
}

/// Value-only forward. x is [N] / [batch, N] (real) or [batch, N, 4].
inline Tensor forward(const ParamSet& ps, const Tensor& x) {
  Tape tape;
  const auto p = bind(tape, ps, false);
  Tensor in = x.rank() == 1 ? x.reshaped({1, x.size()}) : x;
  return forward(ps.spec, p, tape.constant(std::move(in))).value();
}

inline Tensor forward_cnn(const ParamSet& ps, const Tensor& x) {
  if (ps.spec.variant != Variant::cnn) throw ValidationError("forward_cnn: parameter set is not a CNN");
  return forward(ps, x);
}
inline Tensor forward_bnet2(const ParamSet& ps, const Tensor& x) {
  if (ps.spec.variant != Variant::bnet2) throw ValidationError("forward_bnet2: parameter set is not a BNet2");
  return forward(ps, x);
}
inline Tensor forward_bnet(const ParamSet& ps, const Tensor& x) {
  if (ps.spec.variant != Variant::bnet) throw ValidationError("forward_bnet: parameter set is not a BNet");
  return forward(ps, x);
}

/// Zero-fills the BNet2 channel pattern into a dense CNN.
inline ParamSet bnet2_to_cnn(const ParamSet& bn) {
  if (bn.spec.variant != Variant::bnet2) throw ValidationError("bnet2_to_cnn: input is not a BNet2");
  NetworkSpec cs = bn.spec;
  cs.variant = Variant::cnn;
  const auto plan = plan_layers(bn.spec);
  ParamSet out;
  out.spec = cs;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    LayerParams l;
    l.weight = densify_weights(plan[i].geometry, bn.layers[i].weight);
    l.bias = bn.layers[i].bias;
    out.layers.push_back(std::move(l));
  }
  return out;
}

/// Reads the BNet2 pattern back out of a dense CNN.
inline ParamSet cnn_to_bnet2(const ParamSet& cnn) {
  if (cnn.spec.variant != Variant::cnn) throw ValidationError("cnn_to_bnet2: input is not a CNN");
  NetworkSpec bs = cnn.spec;
  bs.variant = Variant::bnet2;
  const auto plan = plan_layers(bs);
  ParamSet out;
  out.spec = bs;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    LayerParams l;
    l.weight = extract_block_weights(plan[i].geometry, cnn.layers[i].weight);
    l.bias = cnn.layers[i].bias;
    out.layers.push_back(std::move(l));
  }
  return out;
}

struct ParamCount {
  std::size_t bias_count = 0;       ///< complex units
  std::size_t weight_count = 0;     ///< complex units
  std::size_t total_real_count = 0; ///< real trainables after embedding
};

/// Closed-form counts for CNN and BNet2; BNet is counted layer by layer.
inline ParamCount param_count(const NetworkSpec& s) {
  s.validate();
  ParamCount pc;
  const std::size_t r = static_cast<std::size_t>(s.r), L = static_cast<std::size_t>(s.L);
  const std::size_t pow2L = std::size_t{1} << L;
  const std::size_t layer0 = 4 * r * s.w;
  const std::size_t l0_mult = s.complex_input ? 16 : 4;
  const std::size_t final_bias = s.final_activation ? s.K : 0;
  if (s.variant == Variant::bnet) {
    for (const auto& lp : plan_layers(s)) {
      const std::size_t n = shape_size(lp.weight_shape());
      pc.weight_count += n / static_cast<std::size_t>(lp.weight_multiplier);
      pc.bias_count += lp.bias_size() / 4;
      pc.total_real_count += n + lp.bias_size();
    }
    return pc;
  }
  pc.bias_count = (2 * pow2L - 2) * r + final_bias;
  std::size_t middle, last;
  if (s.variant == Variant::cnn) {
    middle = (4 * pow2L * pow2L - 16) / 3 * r * r;
    last = r * s.N * s.K / s.w;
  } else {
    middle = (4 * pow2L - 8) * r * r;
    last = r * s.N * s.K / (pow2L * s.w);
  }
  pc.weight_count = layer0 + middle + last;
  pc.total_real_count = l0_mult * layer0 + 16 * (middle + last) + 4 * pc.bias_count;
  return pc;
}

/// K x N matrix whose column j is decode(forward(e_j)). Inputs are processed
/// in chunks to bound memory.
inline ComplexMatrix induced_matrix(const ParamSet& ps, std::size_t chunk = 256) {
  if (ps.spec.complex_input) throw ValidationError("induced_matrix: real-input networks only");
  const std::size_t N = ps.spec.N, K = ps.spec.K;
  ComplexMatrix m(K, N);
  for (std::size_t j0 = 0; j0 < N; j0 += chunk) {
    const std::size_t nb = std::min(chunk, N - j0);
    Tensor x({nb, N});
    for (std::size_t b = 0; b < nb; ++b) x[b * N + j0 + b] = 1.0;
    const Tensor y = forward(ps, x);
    for (std::size_t b = 0; b < nb; ++b) {
      const auto col = decode_all(std::span<const double>(y.data().data() + b * 4 * K, 4 * K));
      for (std::size_t c = 0; c < K; ++c) m(c, j0 + b) = col[c];
    }
  }
  return m;
}

}  // namespace bnet2
