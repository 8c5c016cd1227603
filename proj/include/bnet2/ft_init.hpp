#pragma once

// Fourier-transform initialization. The untrained network approximates
//   Y_c = phi_c * sum_n x_n exp(sign 2 pi i xi_c t_n),  t_n = n / N,
// with xi_c = offset + c * spacing. The forward DFT is sign = -1, offset 0,
// spacing 1, phi = 1.
//
// Sample points sit at cell centres: time panel j of level m covers
// [j / 2^m, (j + 1) / 2^m) shifted left by 1/(2N), and frequency part i of
// level l covers the cells around its frequencies.

#include <cmath>
#include <cstdint>
#include <vector>

#include "bnet2/cheb.hpp"
#include "bnet2/complex_embed.hpp"
#include "bnet2/network.hpp"

namespace bnet2 {

enum class FrequencyPlacement {
  midpoint,  ///< interpolation centre is the middle of each frequency part
  snapped,   ///< parts holding a single output frequency are centred on it
};

struct FourierTarget {
  double sign = -1.0;
  double freq_offset = 0.0;
  double freq_spacing = 1.0;
  std::vector<Complex> output_factor;  // empty means all ones
  FrequencyPlacement placement = FrequencyPlacement::midpoint;

  double frequency(std::size_t c) const { return freq_offset + static_cast<double>(c) * freq_spacing; }
  Complex factor(std::size_t c) const { return output_factor.empty() ? Complex{1.0} : output_factor.at(c); }
  Complex kernel(double xi, double t) const { return fourier_phase(xi * t, sign); }
};

/// Decoder target y_m = scale * sum_n c_n exp(2 pi i (k0 + n) m / period) for
/// n in [n_in] and m in [n_out].
inline FourierTarget synthesis_target(std::size_t n_in, std::size_t n_out, double period, double k0,
                                      double scale) {
  FourierTarget t;
  t.sign = 1.0;
  t.freq_spacing = static_cast<double>(n_in) / period;
  t.output_factor.resize(n_out);
  for (std::size_t m = 0; m < n_out; ++m)
    t.output_factor[m] = scale * fourier_phase(k0 * static_cast<double>(m) / period, 1.0);
  return t;
}

/// The exact K x N matrix a target describes.
inline ComplexMatrix target_matrix(const NetworkSpec& s, const FourierTarget& tg) {
  ComplexMatrix m(s.K, s.N);
  for (std::size_t c = 0; c < s.K; ++c)
    for (std::size_t n = 0; n < s.N; ++n)
      m(c, n) = tg.factor(c) * tg.kernel(tg.frequency(c), static_cast<double>(n) / static_cast<double>(s.N));
  return m;
}

namespace detail {

struct Geometry {
  const NetworkSpec& spec;
  const FourierTarget& target;

  double half_cell() const { return 0.5 / static_cast<double>(spec.N); }

  Interval time_panel(int level, std::size_t j) const {
    const double width = std::ldexp(1.0, -level);
    return {(static_cast<double>(j) + 0.5) * width - half_cell(), width};
  }

  double part_width(int level) const {
    return static_cast<double>(spec.K) * target.freq_spacing / std::ldexp(1.0, level);
  }

  double part_lo(int level, std::size_t i) const {
    return target.freq_offset - 0.5 * target.freq_spacing + static_cast<double>(i) * part_width(level);
  }

  Interval freq_part(int level, std::size_t i) const {
    return {part_lo(level, i) + 0.5 * part_width(level), part_width(level)};
  }

  /// Interpolation centre of frequency part i at a level.
  double freq_center(int level, std::size_t i) const {
    const Interval a = freq_part(level, i);
    if (target.placement == FrequencyPlacement::snapped && part_width(level) <= target.freq_spacing) {
      const double c = std::floor((a.center - target.freq_offset) / target.freq_spacing + 0.5);
      if (c >= 0 && c < static_cast<double>(spec.K)) return target.frequency(static_cast<std::size_t>(c));
    }
    return a.center;
  }
};

inline double readout_factor(const NetworkSpec& s) { return s.final_activation ? 1.0 : 0.5; }

}  // namespace detail

/// Layer-0 weights, [2w, in, 8r]: the input interpolated to Chebyshev nodes of
/// each time panel, per half of the frequency domain.
inline Tensor ft_init_layer0(const NetworkSpec& s, const FourierTarget& tg = {}) {
  s.validate();
  const detail::Geometry geo{s, tg};
  const std::size_t r = static_cast<std::size_t>(s.r), taps = 2 * s.w, cout = 8 * r;
  const std::size_t in = s.complex_input ? 4 : 1;
  Tensor w({taps, in, cout});
  const ChebSystem nodes(s.r, geo.time_panel(s.L - 1, 0));
  for (std::size_t n = 0; n < taps; ++n) {
    const double t = static_cast<double>(n) / static_cast<double>(s.N);
    double* tap = w.data().data() + n * in * cout;
    for (std::size_t i = 0; i < 2; ++i) {
      const double xi0 = geo.freq_center(1, i);
      for (int k = 0; k < s.r; ++k) {
        const Complex a = tg.kernel(xi0, t - nodes.point(k)) * nodes.lagrange(k, t);
        const std::size_t c = i * r + static_cast<std::size_t>(k);
        if (s.complex_input)
          store_block(tap, cout, 0, c, a);
        else
          store_real_input_column(tap, cout, 0, c, a);
      }
    }
  }
  return w;
}

/// Grouped middle-layer weights, [2, 4r, 4 * 2^(l+1) r].
inline Tensor ft_init_middle(const NetworkSpec& s, int l, const FourierTarget& tg = {}) {
  s.validate();
  if (l < 1 || l >= s.L) throw ValidationError("ft_init_middle: layer index out of range");
  const detail::Geometry geo{s, tg};
  const std::size_t r = static_cast<std::size_t>(s.r);
  const std::size_t cout = 4 * s.parts(l + 1) * r, bin = 4 * r;
  Tensor w({2, bin, cout});
  const ChebSystem parent(s.r, geo.time_panel(s.L - l - 1, 0));
  for (std::size_t p = 0; p < 2; ++p) {
    const ChebSystem child(s.r, geo.time_panel(s.L - l, p));
    double* tap = w.data().data() + p * bin * cout;
    for (std::size_t i = 0; i < s.parts(l + 1); ++i) {
      const double xi0 = geo.freq_center(l + 1, i);
      for (int k = 0; k < s.r; ++k)
        for (int kp = 0; kp < s.r; ++kp) {
          const double tc = child.point(kp);
          const Complex a = tg.kernel(xi0, tc - parent.point(k)) * parent.lagrange(k, tc);
          store_block(tap, cout, static_cast<std::size_t>(kp), i * r + static_cast<std::size_t>(k), a);
        }
    }
  }
  return w;
}

/// BNet2 readout, [1, 4r, 4K]: the transform on each frequency part from the
/// Chebyshev nodes of the whole time domain.
inline Tensor ft_init_last(const NetworkSpec& s, const FourierTarget& tg = {}) {
  s.validate();
  const detail::Geometry geo{s, tg};
  const std::size_t cout = 4 * s.K;
  Tensor w({1, 4 * static_cast<std::size_t>(s.r), cout});
  const ChebSystem nodes(s.r, geo.time_panel(0, 0));
  const double f = detail::readout_factor(s);
  for (std::size_t c = 0; c < s.K; ++c)
    for (int kp = 0; kp < s.r; ++kp) {
      const Complex a = tg.factor(c) * tg.kernel(tg.frequency(c), nodes.point(kp)) * f;
      store_block(w.data().data(), cout, static_cast<std::size_t>(kp), c, a);
    }
  return w;
}

namespace detail {

// Switch blocks: for each time panel s (level L - L_t) and frequency part g
// (level L_t), evaluate the transform at Chebyshev frequencies of the part.
inline Tensor bnet_switch(const NetworkSpec& s, const FourierTarget& tg) {
  const Geometry geo{s, tg};
  const int lt = s.switch_layer;
  const std::size_t S = s.parts(s.L - lt), G = s.parts(lt), m = 4 * static_cast<std::size_t>(s.r);
  Tensor d({S, G, m, m});
  for (std::size_t sp = 0; sp < S; ++sp) {
    const ChebSystem times(s.r, geo.time_panel(s.L - lt, sp));
    for (std::size_t g = 0; g < G; ++g) {
      const ChebSystem freqs(s.r, geo.freq_part(lt, g));
      double* blk = d.data().data() + (sp * G + g) * m * m;
      for (int k = 0; k < s.r; ++k)
        for (int kt = 0; kt < s.r; ++kt)
          store_block(blk, m, static_cast<std::size_t>(k), static_cast<std::size_t>(kt),
                      tg.kernel(freqs.point(kt), times.point(k)));
    }
  }
  return d;
}

// Transposed-conv refinement from frequency level l to l + 1 while merging
// time panels of level L - l into level L - l - 1. Weights depend only on
// relative frequency positions, so every position shares them.
inline Tensor bnet_refine(const NetworkSpec& s, int l, const FourierTarget& tg) {
  const Geometry geo{s, tg};
  const std::size_t r = static_cast<std::size_t>(s.r);
  const std::size_t groups = s.parts(s.L - l - 1), cout = 4 * groups * r, bin = 8 * r;
  Tensor w({2, bin, cout});
  const ChebSystem parent(s.r, geo.freq_part(l, 0));
  for (std::size_t i = 0; i < 2; ++i) {
    const ChebSystem child(s.r, geo.freq_part(l + 1, i));
    double* tap = w.data().data() + i * bin * cout;
    for (std::size_t p = 0; p < groups; ++p)
      for (std::size_t b = 0; b < 2; ++b) {
        const double t0 = geo.time_panel(s.L - l, 2 * p + b).center;
        for (int k = 0; k < s.r; ++k)
          for (int kc = 0; kc < s.r; ++kc) {
            const double xc = child.point(kc);
            const Complex a = tg.kernel(xc - parent.point(k), t0) * parent.lagrange(k, xc);
            store_block(tap, cout, b * r + static_cast<std::size_t>(k), p * r + static_cast<std::size_t>(kc), a);
          }
      }
  }
  return w;
}

inline Tensor bnet_last(const NetworkSpec& s, const FourierTarget& tg) {
  const Geometry geo{s, tg};
  const std::size_t cout = 4 * s.K;
  Tensor w({1, 4 * static_cast<std::size_t>(s.r), cout});
  const double t0 = geo.time_panel(0, 0).center, f = readout_factor(s);
  for (std::size_t c = 0; c < s.K; ++c) {
    const double xi = tg.frequency(c);
    const ChebSystem freqs(s.r, geo.freq_part(s.L, s.output_part(c)));
    for (int k = 0; k < s.r; ++k) {
      const Complex a = tg.factor(c) * tg.kernel(xi - freqs.point(k), t0) * freqs.lagrange(k, xi) * f;
      store_block(w.data().data(), cout, static_cast<std::size_t>(k), c, a);
    }
  }
  return w;
}

}  // namespace detail

/// Full FT initialization for any variant. CNN weights are the zero-filled
/// BNet2 weights.
inline ParamSet ft_init(const NetworkSpec& spec, const FourierTarget& tg = {}) {
  spec.validate();
  if (spec.variant == Variant::cnn) {
    NetworkSpec b = spec;
    b.variant = Variant::bnet2;
    return bnet2_to_cnn(ft_init(b, tg));
  }
  ParamSet ps = allocate_params(spec);
  std::size_t idx = 0;
  ps.layers[idx++].weight = ft_init_layer0(spec, tg);
  if (spec.variant == Variant::bnet2) {
    for (int l = 1; l < spec.L; ++l) ps.layers[idx++].weight = ft_init_middle(spec, l, tg);
    ps.layers[idx].weight = ft_init_last(spec, tg);
    return ps;
  }
  for (int l = 1; l < spec.switch_layer; ++l) ps.layers[idx++].weight = ft_init_middle(spec, l, tg);
  ps.layers[idx++].weight = detail::bnet_switch(spec, tg);
  for (int l = spec.switch_layer; l < spec.L; ++l) ps.layers[idx++].weight = detail::bnet_refine(spec, l, tg);
  ps.layers[idx].weight = detail::bnet_last(spec, tg);
  return ps;
}

inline ParamSet ft_init_cnn(const NetworkSpec& spec, const FourierTarget& tg = {}) {
  NetworkSpec s = spec;
  s.variant = Variant::cnn;
  return ft_init(s, tg);
}

/// Forward-DFT initialization for an encoder fed by an odd extension; the
/// sine coefficients are read from the imaginary parts.
inline ParamSet sine_init(const NetworkSpec& spec) { return ft_init(spec, FourierTarget{}); }

/// Decoder initialization realizing scale * sum_n c_n exp(2 pi i (k0 + n) m / period).
inline ParamSet inverse_ft_init(const NetworkSpec& spec, double period, double k0, double scale) {
  return ft_init(spec, synthesis_target(spec.N, spec.K, period, k0, scale));
}

inline ParamSet build(const NetworkSpec& spec, InitKind init, std::uint64_t seed = 0) {
  switch (init) {
    case InitKind::zeros: return allocate_params(spec);
    case InitKind::random: {
      ParamSet ps = allocate_params(spec);
      randomize_params(ps, seed);
      return ps;
    }
    case InitKind::ft: return ft_init(spec);
  }
  throw ValidationError("build: unknown init kind");
}

}  // namespace bnet2
