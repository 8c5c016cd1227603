#pragma once

// Seeded data generators, the periodic elliptic operator, its spectral
// reference solver, and signal corruptions.
//
// Conventions: forward DFT is unnormalized sum_n f_n exp(-2 pi i k n / N),
// the inverse carries 1/N. Grids are x_n = n / N on [0, 1).

#include <fftw3.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bnet2/cheb.hpp"
#include "bnet2/serialize.hpp"
#include "bnet2/tape.hpp"

namespace bnet2 {

/// splitmix64 finalizer.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent seed for stream `stream` of a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

// ---------------------------------------------------------------------------
// Masked random signals

struct SignalDistribution {
  std::size_t N = 128;  ///< signal length
  std::size_t K = 64;   ///< number of random frequencies, K <= N/2
  double g_center = 0.0;
  double g_width = 2.0;  ///< infinity disables the mask
  double amplitude = 1.0;

  void validate() const {
    if (N < 2 || K < 1 || 2 * K > N) throw ValidationError("signal distribution: need 1 <= K <= N/2");
    if (!(g_width > 0.0)) throw ValidationError("signal distribution: mask width must be positive");
    if (!(amplitude > 0.0)) throw ValidationError("signal distribution: amplitude must be positive");
  }
  double mask(std::size_t k) const {
    if (std::isinf(g_width)) return 1.0;
    const double d = static_cast<double>(k) - g_center;
    return std::exp(-d * d / (2.0 * g_width * g_width));
  }
};

struct MaskedSignal {
  std::vector<Complex> coeffs;  ///< frequencies 0..K-1, coeffs[0] real
  std::vector<double> signal;   ///< N real samples
};

/// Real signal from one-sided frequency content on [0, K).
inline std::vector<double> synthesize_real(const std::vector<Complex>& coeffs, std::size_t N) {
  std::vector<double> x(N);
  const double inv = 1.0 / static_cast<double>(N);
  std::vector<Complex> roots(N);
  for (std::size_t j = 0; j < N; ++j) roots[j] = fourier_phase(static_cast<double>(j) * inv, 1.0);
  for (std::size_t n = 0; n < N; ++n) {
    double s = coeffs[0].real();
    for (std::size_t k = 1; k < coeffs.size(); ++k) s += 2.0 * (coeffs[k] * roots[(k * n) % N]).real();
    x[n] = s * inv;
  }
  return x;
}

inline MaskedSignal gen_masked_signal(const SignalDistribution& d, std::mt19937_64& rng) {
  d.validate();
  std::uniform_real_distribution<double> u(-d.amplitude, d.amplitude);
  MaskedSignal s;
  s.coeffs.resize(d.K);
  s.coeffs[0] = u(rng) * d.mask(0);
  for (std::size_t k = 1; k < d.K; ++k) {
    const double re = u(rng), im = u(rng);
    s.coeffs[k] = Complex(re, im) * d.mask(k);
  }
  s.signal = synthesize_real(s.coeffs, d.N);
  return s;
}

/// Amplitude making the Monte-Carlo mean two-norm equal `target`; signals
/// are linear in the amplitude, so one pass at a = 1 suffices.
inline double calibrate_amplitude(SignalDistribution d, double target = 1.0, std::size_t samples = 10000,
                                  std::uint64_t seed = 0x5eed) {
  if (samples < 1000) throw ValidationError("calibrate_amplitude: need at least 1000 samples");
  d.amplitude = 1.0;
  std::mt19937_64 rng(seed);
  double total = 0.0;
  for (std::size_t i = 0; i < samples; ++i) total += std::sqrt(squared_norm(gen_masked_signal(d, rng).signal));
  const double mean = total / static_cast<double>(samples);
  if (!(mean > 0.0)) throw NumericError("calibrate_amplitude: degenerate distribution");
  return target / mean;
}

// ---------------------------------------------------------------------------
// Elliptic operator

/// Piecewise coefficient 10 / 1 alternating every quarter period, at x in [0, 1).
inline double high_contrast_value(double x) {
  const auto q = static_cast<long long>(std::floor((8.0 * x - 1.0) / 2.0));
  return ((q % 2) + 2) % 2 == 0 ? 10.0 : 1.0;
}

inline std::vector<double> high_contrast_a(std::size_t N) {
  if (N == 0 || N % 8 != 0) throw ValidationError("high_contrast_a: N must be a positive multiple of 8");
  std::vector<double> a(N);
  for (std::size_t i = 0; i < N; ++i) {
    // floor((8i - N) / (2N)) evaluated in integers.
    const long long num = 8 * static_cast<long long>(i) - static_cast<long long>(N);
    const long long den = 2 * static_cast<long long>(N);
    const long long q = num >= 0 ? num / den : -((-num + den - 1) / den);
    a[i] = ((q % 2) + 2) % 2 == 0 ? 10.0 : 1.0;
  }
  return a;
}

struct EllipticProblem {
  std::size_t N = 64;
  std::vector<double> a;  ///< coefficient at grid points
  double b = 0.0;         ///< cubic nonlinearity

  static EllipticProblem constant(std::size_t N, double b = 0.0) { return {N, std::vector<double>(N, 1.0), b}; }
  static EllipticProblem high_contrast(std::size_t N) { return {N, high_contrast_a(N), 0.0}; }

  void validate() const {
    if (a.size() != N || N < 3) throw DimensionError("elliptic problem: coefficient length must equal N >= 3");
    for (double v : a)
      if (!(v > 0.0)) throw ValidationError("elliptic problem: coefficient must be positive");
  }

  /// Flux-form matrix of -(a u')' with harmonic-mean face coefficients,
  /// row-major N x N.
  std::vector<double> linear_matrix() const {
    validate();
    std::vector<double> m(N * N, 0.0);
    const double inv_h2 = static_cast<double>(N) * static_cast<double>(N);
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t ip = (i + 1) % N, im = (i + N - 1) % N;
      const double ar = 2.0 * a[i] * a[ip] / (a[i] + a[ip]);
      const double al = 2.0 * a[i] * a[im] / (a[i] + a[im]);
      m[i * N + i] += (ar + al) * inv_h2;
      m[i * N + ip] -= ar * inv_h2;
      m[i * N + im] -= al * inv_h2;
    }
    return m;
  }
};

inline std::vector<double> apply_operator(const EllipticProblem& p, std::span<const double> u) {
  if (u.size() != p.N) throw DimensionError("apply_operator: input length must equal N");
  const auto m = p.linear_matrix();
  std::vector<double> out(p.N, 0.0);
  for (std::size_t i = 0; i < p.N; ++i) {
    double s = p.b * u[i] * u[i] * u[i];
    for (std::size_t j = 0; j < p.N; ++j) s += m[i * p.N + j] * u[j];
    out[i] = s;
  }
  return out;
}

/// Differentiable batched operator, u is [batch, N].
inline Var apply_operator(const EllipticProblem& p, Var u) {
  if (u.value().rank() != 2 || u.value().dim(1) != p.N) throw DimensionError("apply_operator: expected [batch, N]");
  const auto m = p.linear_matrix();
  Tensor mt({p.N, p.N});
  for (std::size_t i = 0; i < p.N; ++i)
    for (std::size_t j = 0; j < p.N; ++j) mt[j * p.N + i] = m[i * p.N + j];
  Var lin = linear_map(u, mt);
  if (p.b == 0.0) return lin;
  return add(lin, scale(cube(u), p.b));
}

// ---------------------------------------------------------------------------
// Spectral reference solver

namespace detail {

/// Real-to-complex FFT helper for a fixed length.
class Fft {
 public:
  explicit Fft(std::size_t n)
      : n_(n),
        real_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        spec_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
    fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_, spec_, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec_, real_, FFTW_ESTIMATE);
  }
  ~Fft() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(real_);
    fftw_free(spec_);
  }
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  std::vector<Complex> forward(std::span<const double> x) {
    std::copy(x.begin(), x.end(), real_);
    fftw_execute(fwd_);
    std::vector<Complex> out(n_ / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = {spec_[k][0], spec_[k][1]};
    return out;
  }
  /// Inverse including the 1/n factor.
  std::vector<double> inverse(const std::vector<Complex>& s) {
    for (std::size_t k = 0; k < s.size(); ++k) {
      spec_[k][0] = s[k].real();
      spec_[k][1] = s[k].imag();
    }
    fftw_execute(bwd_);
    std::vector<double> out(real_, real_ + n_);
    for (auto& v : out) v /= static_cast<double>(n_);
    return out;
  }

 private:
  std::size_t n_;
  double* real_;
  fftw_complex* spec_;
  fftw_plan fwd_;
  fftw_plan bwd_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

struct SpectralSolution {
  std::vector<double> fine;    ///< solution on the fine grid
  std::vector<double> coarse;  ///< every refinement-th sample
  double residual = 0.0;       ///< relative residual on the fine grid
  std::size_t iterations = 0;
};

/// Pseudo-spectral operator -(a u')' on a periodic grid, spectral derivatives
/// with the Nyquist mode dropped.
class SpectralOperator {
 public:
  explicit SpectralOperator(std::vector<double> a) : a_(std::move(a)), fft_(a_.size()) {}

  std::size_t size() const { return a_.size(); }

  std::vector<double> apply(std::span<const double> u) {
    auto du = derivative(u);
    for (std::size_t i = 0; i < du.size(); ++i) du[i] *= a_[i];
    auto out = derivative(du);
    for (auto& v : out) v = -v;
    return out;
  }

  /// Inverse of -c u'' on non-constant modes.
  std::vector<double> precondition(std::span<const double> r, double c) {
    auto s = fft_.forward(r);
    const std::size_t n = size();
    s[0] = 0.0;
    for (std::size_t k = 1; k < s.size(); ++k) {
      if (2 * k == n) {
        s[k] = 0.0;
        continue;
      }
      const double w = 2.0 * std::numbers::pi * static_cast<double>(k);
      s[k] /= c * w * w;
    }
    return fft_.inverse(s);
  }

 private:
  std::vector<double> derivative(std::span<const double> u) {
    auto s = fft_.forward(u);
    const std::size_t n = size();
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (2 * k == n) {
        s[k] = 0.0;
        continue;
      }
      s[k] *= Complex(0.0, 2.0 * std::numbers::pi * static_cast<double>(k));
    }
    return fft_.inverse(s);
  }

  std::vector<double> a_;
  detail::Fft fft_;
};

/// Preconditioned conjugate gradients for -(a u')' = f on a fine periodic
/// grid (b = 0). f and the solution are projected to zero mean.
inline SpectralSolution spectral_solve_fine(const std::vector<double>& a_fine, std::vector<double> f,
                                            std::size_t refinement = 1, double tol = 1e-12,
                                            std::size_t max_iter = 5000) {
  const std::size_t M = a_fine.size();
  if (f.size() != M) throw DimensionError("spectral solve: coefficient and right-hand side lengths differ");
  SpectralOperator op(a_fine);
  {
    // Keep f in the range of the operator: no constant and no Nyquist content.
    detail::Fft fft(M);
    auto s = fft.forward(f);
    s[0] = 0.0;
    if (M % 2 == 0) s[M / 2] = 0.0;
    f = fft.inverse(s);
  }
  double amean = 0.0;
  for (double v : a_fine) amean += 1.0 / v;
  const double c = static_cast<double>(M) / amean;  // harmonic mean

  SpectralSolution sol;
  sol.fine.assign(M, 0.0);
  const double fnorm = std::sqrt(detail::dot(f, f));
  if (fnorm == 0.0) {
    sol.coarse.assign(M / refinement, 0.0);
    return sol;
  }
  std::vector<double> r = f;
  auto z = op.precondition(r, c);
  auto p = z;
  double rz = detail::dot(r, z);
  for (sol.iterations = 0; sol.iterations < max_iter; ++sol.iterations) {
    const auto ap = op.apply(p);
    const double alpha = rz / detail::dot(p, ap);
    for (std::size_t i = 0; i < M; ++i) {
      sol.fine[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    if (std::sqrt(detail::dot(r, r)) <= tol * fnorm) break;
    z = op.precondition(r, c);
    const double rz_next = detail::dot(r, z);
    for (std::size_t i = 0; i < M; ++i) p[i] = z[i] + rz_next / rz * p[i];
    rz = rz_next;
  }
  double um = 0.0;
  for (double v : sol.fine) um += v;
  um /= static_cast<double>(M);
  for (auto& v : sol.fine) v -= um;
  const auto res = op.apply(sol.fine);
  double rn = 0.0;
  for (std::size_t i = 0; i < M; ++i) rn += (res[i] - f[i]) * (res[i] - f[i]);
  sol.residual = std::sqrt(rn) / fnorm;
  if (sol.residual > 1e-8)
    throw NumericError("spectral solve did not converge, residual " + std::to_string(sol.residual));
  for (std::size_t i = 0; i < M; i += refinement) sol.coarse.push_back(sol.fine[i]);
  return sol;
}

/// Reference solve on a 16x refined grid. `f_fine` holds the right-hand side
/// sampled on that grid; `a_at` evaluates the coefficient at x in [0, 1).
template <class Coefficient>
SpectralSolution spectral_reference_solve(std::size_t N, Coefficient a_at, const std::vector<double>& f_fine,
                                          std::size_t refinement = 16) {
  const std::size_t M = refinement * N;
  if (f_fine.size() != M) throw DimensionError("spectral_reference_solve: right-hand side must have 16N samples");
  std::vector<double> a(M);
  for (std::size_t j = 0; j < M; ++j) a[j] = a_at(static_cast<double>(j) / static_cast<double>(M));
  return spectral_solve_fine(a, f_fine, refinement);
}

/// Reference solve for grid data: f on N points is band-limited-interpolated
/// to the fine grid.
inline SpectralSolution spectral_reference_solve(const EllipticProblem& p, const std::vector<double>& f,
                                                 std::size_t refinement = 16) {
  p.validate();
  if (p.b != 0.0) throw ValidationError("spectral_reference_solve: linear problems only");
  if (f.size() != p.N) throw DimensionError("spectral_reference_solve: right-hand side length must equal N");
  const std::size_t M = refinement * p.N;
  detail::Fft coarse(p.N), fine(M);
  auto s = coarse.forward(f);
  std::vector<Complex> big(M / 2 + 1, 0.0);
  for (std::size_t k = 0; k < s.size(); ++k) big[k] = s[k] * static_cast<double>(refinement);
  if (p.N % 2 == 0) big[p.N / 2] *= 0.5;
  const auto f_fine = fine.inverse(big);
  std::vector<double> a(M);
  for (std::size_t j = 0; j < M; ++j) a[j] = p.a[j / refinement];
  return spectral_solve_fine(a, f_fine, refinement);
}

// ---------------------------------------------------------------------------
// Sine data

/// f(j / M) = sum_m c_m sin(pi m j / M) for j in [count], count defaulting to M.
inline std::vector<double> sine_synthesis(const std::vector<double>& c, std::size_t M, std::size_t count = 0) {
  if (count == 0) count = M;
  std::vector<double> f(count, 0.0);
  for (std::size_t j = 0; j < count; ++j)
    for (std::size_t m = 1; m < c.size(); ++m)
      f[j] += c[m] * std::sin(std::numbers::pi * static_cast<double>((m * j) % (2 * M)) / static_cast<double>(M));
  return f;
}

/// Coefficients c_m = (2/N) sum_n f_n sin(pi m n / N), m in [K].
inline std::vector<double> sine_analysis(std::span<const double> f, std::size_t K) {
  const std::size_t N = f.size();
  std::vector<double> c(K, 0.0);
  for (std::size_t m = 1; m < K; ++m) {
    double s = 0.0;
    for (std::size_t n = 1; n < N; ++n)
      s += f[n] * std::sin(std::numbers::pi * static_cast<double>((m * n) % (2 * N)) / static_cast<double>(N));
    c[m] = 2.0 * s / static_cast<double>(N);
  }
  return c;
}

/// Odd extension of f on [0, 1) to [0, 2): g(2 - x) = -g(x), length 2N.
inline std::vector<double> odd_extension(std::span<const double> f) {
  const std::size_t N = f.size();
  std::vector<double> g(2 * N, 0.0);
  for (std::size_t n = 0; n < N; ++n) g[n] = f[n];
  for (std::size_t n = 1; n < N; ++n) g[2 * N - n] = -f[n];
  return g;
}

/// [N, 2N] matrix form of odd_extension for row-vector batches.
inline Tensor odd_extension_map(std::size_t N) {
  Tensor e({N, 2 * N});
  for (std::size_t n = 0; n < N; ++n) e[n * 2 * N + n] = 1.0;
  for (std::size_t n = 1; n < N; ++n) e[n * 2 * N + 2 * N - n] = -1.0;
  return e;
}

struct SineSample {
  std::vector<double> coeffs;  ///< K entries, coeffs[0] = 0
  std::vector<double> f;       ///< N grid samples
};

inline SineSample gen_sine_data(std::size_t K, std::size_t N, std::mt19937_64& rng) {
  if (K < 1 || K > N) throw ValidationError("gen_sine_data: need 1 <= K <= N");
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SineSample s;
  s.coeffs.assign(K, 0.0);
  for (std::size_t m = 1; m < K; ++m) s.coeffs[m] = u(rng);
  s.f = sine_synthesis(s.coeffs, N);
  return s;
}

/// The problem posed on [0, 2) with a extended periodically, rescaled to a
/// unit-length grid of 2N points. Odd right-hand sides give odd solutions
/// whose restriction to [0, 1) solves the original equation with u(0) = u(1) = 0
/// whenever a is even about 0.
inline EllipticProblem doubled_problem(const EllipticProblem& p) {
  EllipticProblem q;
  q.N = 2 * p.N;
  q.b = p.b;
  q.a.resize(q.N);
  for (std::size_t j = 0; j < q.N; ++j) q.a[j] = 0.25 * p.a[j % p.N];
  return q;
}

inline void project_mean_zero(std::span<double> v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  for (auto& x : v) x -= m;
}

// ---------------------------------------------------------------------------
// Corruptions

enum class CorruptionMode { noise, blur };

struct Corruption {
  CorruptionMode mode = CorruptionMode::noise;
  double sigma = 0.002;   ///< noise std or blur width in grid points
  bool circular = true;   ///< blur boundary: periodic wrap or zero padding
};

inline std::vector<double> gaussian_kernel(double sigma) {
  const auto half = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
  std::vector<double> g(static_cast<std::size_t>(2 * half + 1));
  double total = 0.0;
  for (std::ptrdiff_t j = -half; j <= half; ++j) {
    const double v = std::exp(-static_cast<double>(j * j) / (2.0 * sigma * sigma));
    g[static_cast<std::size_t>(j + half)] = v;
    total += v;
  }
  for (auto& v : g) v /= total;
  return g;
}

inline std::vector<double> corrupt(std::span<const double> x, const Corruption& c, std::mt19937_64& rng) {
  std::vector<double> out(x.begin(), x.end());
  if (c.mode == CorruptionMode::noise) {
    std::normal_distribution<double> g(0.0, c.sigma);
    for (auto& v : out) v += g(rng);
    return out;
  }
  const auto kern = gaussian_kernel(c.sigma);
  const auto half = static_cast<std::ptrdiff_t>(kern.size() / 2);
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::ptrdiff_t j = -half; j <= half; ++j) {
      std::ptrdiff_t idx = i - j;
      if (c.circular)
        idx = ((idx % n) + n) % n;
      else if (idx < 0 || idx >= n)
        continue;
      s += kern[static_cast<std::size_t>(j + half)] * x[static_cast<std::size_t>(idx)];
    }
    out[static_cast<std::size_t>(i)] = s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Energy

/// -<u, f> / N for -u'' = f on the periodic grid, computed spectrally.
inline double energy_ground_truth(std::span<const double> f) {
  const std::size_t N = f.size();
  double mean = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(N);
  double scale = 0.0;
  for (double v : f) scale = std::max(scale, std::abs(v));
  if (std::abs(mean) > 1e-12 * std::max(scale, 1.0)) throw ValidationError("energy_ground_truth: f must have zero mean");
  detail::Fft fft(N);
  const auto s = fft.forward(f);
  double e = 0.0;
  for (std::size_t k = 1; k < s.size(); ++k) {
    const double w = 2.0 * std::numbers::pi * static_cast<double>(k);
    const double mult = (2 * k == N) ? 1.0 : 2.0;
    e += mult * std::norm(s[k]) / (w * w);
  }
  return -e / (static_cast<double>(N) * static_cast<double>(N));
}

// ---------------------------------------------------------------------------
// Dataset dump: one JSON header line, then little-endian float64 records.

struct Dataset {
  nlohmann::json meta;
  Tensor inputs;
  Tensor targets;
};

inline void write_dataset(const std::string& path, const Dataset& d) {
  nlohmann::json header = d.meta;
  header["encoding"] = "float64-le";
  header["inputs_shape"] = d.inputs.shape();
  header["targets_shape"] = d.targets.shape();
  detail::ByteWriter w;
  for (double v : d.inputs.data()) w.put_double(v);
  for (double v : d.targets.data()) w.put_double(v);
  std::ofstream out(path, std::ios::binary);
  out << header.dump() << '\n';
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw std::runtime_error("cannot write dataset " + path);
}

/// Loads a dataset; every key in `expected_meta` must match the header.
inline Dataset load_dataset(const std::string& path, const nlohmann::json& expected_meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path);
  std::string line;
  std::getline(in, line);
  Dataset d;
  d.meta = nlohmann::json::parse(line);
  for (const auto& [k, v] : expected_meta.items())
    if (!d.meta.contains(k) || d.meta[k] != v) throw FormatError("dataset metadata mismatch on '" + k + "'");
  if (d.meta.value("encoding", "") != "float64-le") throw FormatError("dataset encoding is not float64-le");
  const Shape si = d.meta["inputs_shape"].get<Shape>(), st = d.meta["targets_shape"].get<Shape>();
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t ni = shape_size(si), nt = shape_size(st);
  if (bytes.size() != 8 * (ni + nt)) throw FormatError("dataset payload length mismatch");
  detail::ByteReader r(bytes.data(), bytes.size());
  std::vector<double> a(ni), b(nt);
  for (auto& v : a) v = r.get_double();
  for (auto& v : b) v = r.get_double();
  d.inputs = Tensor::from_external(si, std::move(a));
  d.targets = Tensor::from_external(st, std::move(b));
  return d;
}

}  // namespace bnet2
