#pragma once

// The experiment runners. Each returns a ResultTable; none touches the file
// system.

#include <Eigen/Dense>
#include <memory>

#include "bnet2/ft_init.hpp"
#include "bnet2/harness.hpp"
#include "bnet2/metrics.hpp"
#include "bnet2/tasks.hpp"

namespace bnet2 {

namespace detail {

/// [4K, 2K] map from embedded outputs to interleaved (Re, Im) pairs.
inline Tensor complex_readout(std::size_t K) {
  Tensor m({4 * K, 2 * K});
  for (std::size_t c = 0; c < K; ++c) {
    m[(4 * c) * 2 * K + 2 * c] = 1.0;
    m[(4 * c + 2) * 2 * K + 2 * c] = -1.0;
    m[(4 * c + 1) * 2 * K + 2 * c + 1] = 1.0;
    m[(4 * c + 3) * 2 * K + 2 * c + 1] = -1.0;
  }
  return m;
}

/// [4K, K] map reading the real (part = 0) or imaginary (part = 1) parts.
inline Tensor part_readout(std::size_t K, int part) {
  Tensor m({4 * K, K});
  for (std::size_t c = 0; c < K; ++c) {
    m[(4 * c + part) * K + c] = 1.0;
    m[(4 * c + part + 2) * K + c] = -1.0;
  }
  return m;
}

/// Multiplies the network map by `gain` > 0, spread evenly over the layers.
/// Exact for ReLU layers since they are positively homogeneous.
inline void spread_gain(ParamSet& ps, double gain) {
  const double s = std::pow(gain, 1.0 / static_cast<double>(ps.layers.size()));
  double cum = 1.0;
  for (auto& l : ps.layers) {
    cum *= s;
    for (auto& w : l.weight.data()) w *= s;
    for (auto& b : l.bias.data()) b *= cum;
  }
}

inline std::string case_name(Variant v, InitKind k) { return to_string(v) + "-" + to_string(k); }

inline ParamSet make_net(const NetworkSpec& spec, InitKind init, std::uint64_t seed, const FourierTarget& tg = {}) {
  if (init == InitKind::ft) return ft_init(spec, tg);
  return build(spec, init, seed);
}

inline NetworkSpec spec_with(Variant v, std::size_t N, std::size_t K, int L, int r, bool final_activation,
                             bool complex_input = false) {
  NetworkSpec s = make_spec(v, N, K, L, r);
  s.final_activation = final_activation;
  s.complex_input = complex_input;
  s.validate();
  return s;
}

/// Masked random signals with their low-frequency DFT coefficients.
struct SignalSource {
  SignalDistribution dist;
  std::size_t K_out;

  /// x [n, N]; y [n, 2 K_out] holding (Re, Im) of the first K_out DFT entries.
  Batch sample(std::mt19937_64& rng, std::size_t n, bool mean_zero = false) const {
    Batch b{Tensor({n, dist.N}), Tensor({n, 2 * K_out})};
    for (std::size_t i = 0; i < n; ++i) {
      auto s = gen_masked_signal(dist, rng);
      if (mean_zero) {
        s.coeffs[0] = 0.0;
        project_mean_zero(s.signal);
      }
      std::copy(s.signal.begin(), s.signal.end(), b.x.data().begin() + static_cast<std::ptrdiff_t>(i * dist.N));
      for (std::size_t c = 0; c < K_out && c < s.coeffs.size(); ++c) {
        b.y[i * 2 * K_out + 2 * c] = s.coeffs[c].real();
        b.y[i * 2 * K_out + 2 * c + 1] = s.coeffs[c].imag();
      }
    }
    return b;
  }
};

inline SignalSource make_source(const ExperimentConfig& c, double center, double width, std::size_t calib_samples = 10000) {
  SignalSource s{{c.N, c.signal_K, center, width, 1.0}, c.K};
  s.dist.K = std::min(c.signal_K, c.N / 2);
  s.dist.amplitude = calibrate_amplitude(s.dist, 1.0, calib_samples, derive_seed(c.seed, 0xca1));
  return s;
}

/// Infinite-data stream when `finite` is null, otherwise shuffled epochs.
inline BatchFn batch_stream(std::function<Batch(std::mt19937_64&, std::size_t)> sample,
                            std::shared_ptr<const Batch> finite, std::size_t batch, std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  if (!finite) return [=](std::size_t) { return sample(*rng, batch); };
  auto order = std::make_shared<std::vector<std::size_t>>();
  auto pos = std::make_shared<std::size_t>(0);
  return [=](std::size_t) {
    const std::size_t n = finite->x.dim(0);
    std::vector<std::size_t> idx;
    while (idx.size() < std::min(batch, n)) {
      if (*pos >= order->size()) {
        order->resize(n);
        std::iota(order->begin(), order->end(), std::size_t{0});
        std::shuffle(order->begin(), order->end(), *rng);
        *pos = 0;
      }
      idx.push_back((*order)[(*pos)++]);
    }
    return take_rows(*finite, idx);
  };
}

/// Everything the variant x init grid needs from a task.
struct GridTask {
  std::function<Model(Variant, InitKind, std::uint64_t)> make_model;
  std::function<Batch(std::mt19937_64&, std::size_t)> sample;  // infinite-data mode
  std::shared_ptr<const Batch> train_set;                      // finite-data mode when set
  Batch test_set;
  LossFn loss;
  std::function<double(const Batch&, const Tensor&)> metric;
};

struct RunOutcome {
  Model model;
  double pre = 0.0;
  double test = 0.0;
  bool diverged = false;
};

/// Evaluates, trains and re-evaluates one model, appending rows under `name`.
inline RunOutcome run_case(const ExperimentConfig& c, const GridTask& task, Model model, const std::string& name,
                           std::size_t steps, ResultTable& table) {
  RunOutcome out{std::move(model)};
  out.pre = task.metric(task.test_set, out.model.predict(task.test_set.x));
  table.add(name, "params", static_cast<double>(out.model.real_count()));
  table.add(name, "pre_train_error", out.pre);
  Stopwatch sw;
  std::vector<double> trace;
  try {
    trace = train(out.model, task.loss, batch_stream(task.sample, task.train_set, c.batch, derive_seed(c.seed, 0xda7a)),
                  steps, c.schedule());
  } catch (const DivergenceError& e) {
    trace = e.trace;
    out.diverged = true;
    table.diverged = true;
  }
  table.timings[name]["train_seconds"] = sw.seconds();
  table.traces.push_back({name, trace});
  table.add(name, "diverged", out.diverged ? 1.0 : 0.0);
  table.add(name, "steps", static_cast<double>(trace.size()));
  if (task.train_set) table.add(name, "train_error", task.metric(*task.train_set, out.model.predict(task.train_set->x)));
  Stopwatch ev;
  const Tensor pred = out.model.predict(task.test_set.x);
  table.timings[name]["eval_seconds"] = ev.seconds();
  out.test = task.metric(task.test_set, pred);
  table.add(name, "test_error", out.test);
  return out;
}

inline double row_relative_error(const Batch& b, const Tensor& pred) { return mean_relative_error(pred, b.y); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Operator approximation before training

inline ResultTable run_approx_ft(const ExperimentConfig& c) {
  ResultTable t{c};
  FourierTarget tg;
  tg.placement = c.placement == "snapped" ? FrequencyPlacement::snapped : FrequencyPlacement::midpoint;
  for (std::size_t K : c.K_list)
    for (int r : c.r_list) {
      std::vector<double> levels, e1, e2, einf;
      for (int L : c.L_list) {
        const NetworkSpec spec = detail::spec_with(Variant::bnet2, c.N, K, L, r, false);
        const ComplexMatrix ref = target_matrix(spec, tg);
        const ComplexMatrix net = induced_matrix(ft_init(spec, tg));
        const std::string name = "r=" + std::to_string(r) + ";K=" + std::to_string(K) + ";L=" + std::to_string(L);
        const double v1 = relative_error(ref, net, NormKind::one);
        const double v2 = relative_error(ref, net, NormKind::two);
        const double vi = relative_error(ref, net, NormKind::inf);
        t.add(name, "eps_1", v1);
        t.add(name, "eps_2", v2);
        t.add(name, "eps_inf", vi);
        t.add(name, "bound_applicable", bound_precondition(r, static_cast<double>(K), L) ? 1.0 : 0.0);
        t.add(name, "bound_1", theorem_bound(r, static_cast<double>(K), L, 1.0).value);
        t.add(name, "bound_2", theorem_bound(r, static_cast<double>(K), L, 2.0).value);
        t.add(name, "bound_inf", theorem_bound(r, static_cast<double>(K), L, INFINITY).value);
        levels.push_back(L);
        e1.push_back(v1);
        e2.push_back(v2);
        einf.push_back(vi);
      }
      const std::string name = "r=" + std::to_string(r) + ";K=" + std::to_string(K);
      if (levels.size() >= 2) {
        t.add(name, "rate_1", log_rate(levels, e1));
        t.add(name, "rate_2", log_rate(levels, e2));
        t.add(name, "rate_inf", log_rate(levels, einf));
      }
      t.plots.push_back({"eps2_r" + std::to_string(r) + "_K" + std::to_string(K), levels, e2, {}});
    }
  return t;
}

// ---------------------------------------------------------------------------
// Trained Fourier transform (and the BNet comparison on the same task)

namespace detail {

inline GridTask fourier_task(const ExperimentConfig& c, const SignalSource& src) {
  GridTask g;
  g.make_model = [c](Variant v, InitKind init, std::uint64_t seed) {
    Model m;
    m.nets.push_back(make_net(spec_with(v, c.N, c.K, c.L, c.r, false), init, seed));
    const Tensor readout = complex_readout(c.K);
    m.fwd = [readout](const Model& mm, const Model::Bound& b, Var x) {
      return linear_map(forward(mm.nets[0].spec, b.nets[0], x), readout);
    };
    return m;
  };
  g.sample = [src](std::mt19937_64& rng, std::size_t n) { return src.sample(rng, n); };
  std::mt19937_64 test_rng(derive_seed(c.seed, 0x7e57));
  g.test_set = src.sample(test_rng, c.test_size);
  g.loss = [](const Batch& b, Var pred) { return mse(pred, b.y); };
  g.metric = row_relative_error;
  return g;
}

inline void run_grid(const ExperimentConfig& c, const GridTask& g, ResultTable& t,
                     const std::function<void(Variant, InitKind, const RunOutcome&)>& after = {}) {
  std::size_t idx = 0;
  for (Variant v : c.variants)
    for (InitKind k : c.inits) {
      Model m = g.make_model(v, k, derive_seed(c.seed, 0x1000 + idx++));
      const auto out = run_case(c, g, std::move(m), case_name(v, k), c.steps_for(k), t);
      if (after) after(v, k, out);
    }
}

}  // namespace detail

inline ResultTable run_train_ft(const ExperimentConfig& c) {
  ResultTable t{c};
  const auto src = detail::make_source(c, c.g_center, c.g_width);
  const auto g = detail::fourier_task(c, src);
  std::optional<ParamSet> trained_bnet2;
  detail::run_grid(c, g, t, [&](Variant v, InitKind k, const detail::RunOutcome& o) {
    if (v == Variant::bnet2 && k == InitKind::ft && !o.diverged) trained_bnet2 = o.model.nets[0];
  });
  if (c.warm_start && trained_bnet2) {
    Model m = g.make_model(Variant::cnn, InitKind::zeros, 0);
    m.nets[0] = bnet2_to_cnn(*trained_bnet2);
    detail::run_case(c, g, std::move(m), "cnn-from-trained-bnet2", c.steps, t);
  }
  return t;
}

inline ResultTable run_bnet_comparison(const ExperimentConfig& c) {
  ResultTable t{c};
  const auto src = detail::make_source(c, c.g_center, c.g_width);
  detail::run_grid(c, detail::fourier_task(c, src), t);
  return t;
}

// ---------------------------------------------------------------------------
// Transfer across frequency bands

inline ResultTable run_transfer(const ExperimentConfig& c) {
  ResultTable t{c};
  const double inf = std::numeric_limits<double>::infinity();
  struct TrainSet {
    std::string name;
    double center, width;
  };
  const std::vector<TrainSet> sets{{"low", 0.0, c.g_width}, {"high", c.high_center, c.g_width}, {"mixture", 0.0, inf}};
  std::vector<double> centers;
  for (int i = 0; static_cast<double>(i) * c.sweep_step <= c.sweep_max + 1e-9; ++i)
    centers.push_back(static_cast<double>(i) * c.sweep_step);
  std::vector<Batch> tests;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const auto src = detail::make_source(c, centers[i], c.g_width, 2000);
    std::mt19937_64 rng(derive_seed(c.seed, 0x5000 + i));
    tests.push_back(src.sample(rng, c.test_size));
  }
  auto sweep = [&](const Model& m) {
    std::vector<double> e;
    for (const auto& b : tests) e.push_back(mean_relative_error(m.predict(b.x), b.y));
    return e;
  };
  for (Variant v : c.variants) {
    const auto ref_src = detail::make_source(c, 0.0, c.g_width);
    const auto ref_task = detail::fourier_task(c, ref_src);
    const auto before = sweep(ref_task.make_model(v, InitKind::ft, 0));
    const std::string ref_name = to_string(v) + "-ft-before-training";
    for (std::size_t i = 0; i < centers.size(); ++i)
      t.add(ref_name, "test_error@" + detail::fmt_short(centers[i]), before[i]);
    t.plots.push_back({ref_name, centers, before, {}});
  }
  std::size_t run = 0;
  for (const auto& set : sets) {
    ExperimentConfig cs = c;
    cs.test_size = 1;
    const auto src = detail::make_source(c, set.center, set.width);
    const auto task = detail::fourier_task(cs, src);
    for (Variant v : c.variants)
      for (InitKind k : c.inits) {
        const std::string name = detail::case_name(v, k) + "-" + set.name;
        std::vector<std::vector<double>> per_repeat;
        for (std::size_t rep = 0; rep < c.repeats; ++rep, ++run) {
          Model m = task.make_model(v, k, derive_seed(c.seed, 0x2000 + run));
          std::vector<double> trace;
          try {
            trace = train(m, task.loss, detail::batch_stream(task.sample, nullptr, c.batch, derive_seed(c.seed, 0x3000 + run)),
                          c.steps_for(k), c.schedule());
          } catch (const DivergenceError& e) {
            trace = e.trace;
            t.diverged = true;
          }
          t.traces.push_back({name + "-rep" + std::to_string(rep), trace});
          per_repeat.push_back(sweep(m));
        }
        std::vector<double> mean(centers.size()), sd(centers.size());
        for (std::size_t i = 0; i < centers.size(); ++i) {
          std::vector<double> vals;
          for (const auto& e : per_repeat) vals.push_back(e[i]);
          t.add_stat(name, "test_error@" + detail::fmt_short(centers[i]), vals);
          mean[i] = t.rows.back().value;
          sd[i] = t.rows.back().std_dev;
        }
        t.plots.push_back({name, centers, mean, sd});
      }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Energy of the periodic Laplacian

namespace detail {

/// Encoder followed by the squared-magnitude head whose diagonal weights start
/// at the quadratic form of the inverse Laplacian. The FT encoder is scaled to
/// return DFT coefficients divided by N.
inline Model energy_model(const ExperimentConfig& c, Variant v, InitKind init, std::uint64_t seed) {
  Model m;
  m.nets.push_back(make_net(spec_with(v, c.N, c.K, c.L, c.r, true), init, seed));
  if (init == InitKind::ft) spread_gain(m.nets[0], 1.0 / static_cast<double>(c.N));
  Tensor w({4 * c.K});
  for (std::size_t k = 1; k < c.K; ++k) {
    const double f = 2.0 * std::numbers::pi * static_cast<double>(k);
    for (std::size_t u = 0; u < 4; ++u) w[4 * k + u] = -2.0 / (f * f);
  }
  m.extras.push_back(std::move(w));
  m.fwd = [](const Model& mm, const Model::Bound& b, Var x) {
    const Var v = forward(mm.nets[0].spec, b.nets[0], x);
    const std::size_t rows = v.value().dim(0);
    return reshape(row_sum(mul_rows(square(v), b.extras[0])), {rows, 1});
  };
  return m;
}

}  // namespace detail

inline ResultTable run_energy(const ExperimentConfig& c) {
  ResultTable t{c};
  const auto src = detail::make_source(c, c.g_center, c.g_width);
  auto sample = [src](std::mt19937_64& rng, std::size_t n) {
    Batch b = src.sample(rng, n, true);
    Tensor e({n, 1});
    for (std::size_t i = 0; i < n; ++i)
      e[i] = energy_ground_truth(std::span<const double>(b.x.data().data() + i * src.dist.N, src.dist.N));
    return Batch{std::move(b.x), std::move(e)};
  };
  detail::GridTask g;
  g.sample = sample;
  std::mt19937_64 test_rng(derive_seed(c.seed, 0x7e57));
  g.test_set = sample(test_rng, c.test_size);
  double mean_abs = 0.0;
  for (double v : g.test_set.y.data()) mean_abs += std::abs(v);
  mean_abs /= static_cast<double>(g.test_set.y.size());
  // The loss is taken on energies divided by their mean magnitude so the
  // gradient scale does not sit below the ADAM epsilon.
  const double inv = 1.0 / mean_abs;
  g.loss = [inv](const Batch& b, Var pred) {
    Tensor y = b.y;
    for (auto& v : y.data()) v *= inv;
    return mse(scale(pred, inv), y);
  };
  g.metric = detail::row_relative_error;
  g.make_model = [c](Variant v, InitKind init, std::uint64_t seed) { return detail::energy_model(c, v, init, seed); };
  t.add("data", "mean_abs_energy", mean_abs);
  detail::run_grid(c, g, t);
  return t;
}

// ---------------------------------------------------------------------------
// Elliptic solution maps

/// Complex K_de x K_en matrix taking encoder outputs (DFT of the odd-extended
/// right-hand side divided by N) to sine coefficients of the discrete solution
/// on the doubled grid, projected onto the K_de decoder modes.
inline ComplexMatrix pde_middle_matrix(std::size_t N, std::size_t K_en, std::size_t K_de, const EllipticProblem& p) {
  using Eigen::MatrixXcd;
  using Eigen::MatrixXd;
  const double pi = std::numbers::pi;
  const std::size_t M = 2 * N;
  auto sines = [&](std::size_t K) {
    MatrixXd S(M, K);
    for (std::size_t n = 0; n < M; ++n)
      for (std::size_t m = 0; m < K; ++m) S(n, m) = std::sin(pi * static_cast<double>((m * n) % M) / N);
    return S;
  };
  const MatrixXd F = sines(K_en), S = sines(K_de);
  MatrixXcd T(K_en, K_en);
  for (std::size_t j = 0; j < K_en; ++j)
    for (std::size_t k = 0; k < K_en; ++k) {
      Complex s = 0.0;
      for (std::size_t n = 0; n < M; ++n) s += F(n, j) * dft_kernel(1.0, static_cast<double>((k * n) % M) / M);
      T(k, j) = s / static_cast<double>(N);
    }
  const auto q = doubled_problem(p);
  const auto a = q.linear_matrix();
  const MatrixXd A = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      a.data(), static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(M));
  const MatrixXd D = pinv(S) * pinv(A) * F;
  Eigen::CompleteOrthogonalDecomposition<MatrixXcd> cod(T);
  cod.setThreshold(1e-10);
  const MatrixXcd W = D.cast<Complex>() * cod.pseudoInverse();
  ComplexMatrix out(K_de, K_en);
  for (std::size_t i = 0; i < K_de; ++i)
    for (std::size_t j = 0; j < K_en; ++j) out(i, j) = W(i, j);
  return out;
}

namespace detail {

/// Sine encoder, dense middle layer with bias and ReLU, inverse-sine decoder.
inline Model pde_model(const ExperimentConfig& c, Variant v, InitKind init, std::uint64_t seed,
                       const EllipticProblem& init_problem) {
  const std::size_t N = c.N, K_en = c.K, K_de = c.K_de;
  Model m;
  const auto enc = spec_with(v, 2 * N, K_en, c.L, c.r, true);
  const auto dec = spec_with(v, K_de, N, c.L, c.r, false, true);
  if (init == InitKind::ft) {
    m.nets.push_back(sine_init(enc));
    spread_gain(m.nets.back(), 1.0 / static_cast<double>(N));
  } else {
    m.nets.push_back(make_net(enc, init, derive_seed(seed, 1)));
  }
  m.nets.push_back(make_net(dec, init, derive_seed(seed, 2), synthesis_target(K_de, N, 2.0 * N, 0.0, 1.0)));
  const auto geo = ConvGeometry::dense(1, 4 * K_en, 4 * K_de);
  Tensor w(geo.weight_shape());
  if (init == InitKind::ft) {
    const auto M = pde_middle_matrix(N, K_en, K_de, init_problem);
    for (std::size_t i = 0; i < K_de; ++i)
      for (std::size_t j = 0; j < K_en; ++j) store_block(w.data().data(), 4 * K_de, j, i, M(i, j));
  } else {
    std::mt19937_64 rng(derive_seed(seed, 3));
    const double bound = std::sqrt(6.0 / static_cast<double>(4 * K_en + 4 * K_de));
    std::uniform_real_distribution<double> d(-bound, bound);
    for (auto& x : w.data()) x = d(rng);
  }
  m.extras.push_back(std::move(w));
  m.extras.push_back(Tensor({4 * K_de}));
  const Tensor odd = odd_extension_map(N);
  const Tensor read_im = part_readout(N, 1);
  m.fwd = [geo, odd, read_im, K_en, K_de](const Model& mm, const Model::Bound& b, Var f) {
    const std::size_t rows = f.value().dim(0);
    const Var e = forward(mm.nets[0].spec, b.nets[0], linear_map(f, odd));
    const Var mid = relu(conv1d(reshape(e, {rows, 1, 4 * K_en}), b.extras[0], b.extras[1], geo));
    const Var u = forward(mm.nets[1].spec, b.nets[1], reshape(mid, {rows, K_de, 4}));
    return linear_map(u, read_im);
  };
  return m;
}

/// Right-hand sides from random sine coefficients; y holds the reference
/// solution when `problem` is given, else a copy of f.
inline Batch pde_data(const ExperimentConfig& c, std::mt19937_64& rng, std::size_t n, const EllipticProblem* problem) {
  const std::size_t N = c.N;
  Batch b{Tensor({n, N}), Tensor({n, N})};
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = gen_sine_data(c.K, N, rng);
    std::copy(s.f.begin(), s.f.end(), b.x.data().begin() + static_cast<std::ptrdiff_t>(i * N));
    if (problem) {
      const auto a_at = [](double x) { return 0.25 * high_contrast_value(std::fmod(2.0 * x, 1.0)); };
      const auto sol = spectral_reference_solve(2 * N, a_at, sine_synthesis(s.coeffs, 16 * N, 32 * N));
      std::copy_n(sol.coarse.begin(), N, b.y.data().begin() + static_cast<std::ptrdiff_t>(i * N));
    } else {
      std::copy(s.f.begin(), s.f.end(), b.y.data().begin() + static_cast<std::ptrdiff_t>(i * N));
    }
  }
  return b;
}

/// Residual of the doubled-grid operator applied to the odd extension of u,
/// restricted to [0, 1).
inline Var pde_residual_operator(const EllipticProblem& doubled, const Tensor& odd, const Tensor& restrict, Var u) {
  return linear_map(apply_operator(doubled, linear_map(u, odd)), restrict);
}

}  // namespace detail

inline ResultTable run_linear_pde(const ExperimentConfig& c) {
  ResultTable t{c};
  const auto problem = EllipticProblem::high_contrast(c.N);
  detail::GridTask g;
  std::mt19937_64 train_rng(derive_seed(c.seed, 0x7a1)), test_rng(derive_seed(c.seed, 0x7e57));
  g.train_set = std::make_shared<const Batch>(detail::pde_data(c, train_rng, c.train_size, &problem));
  g.test_set = detail::pde_data(c, test_rng, c.test_size, &problem);
  g.loss = [](const Batch& b, Var pred) { return mse(pred, b.y); };
  g.metric = detail::row_relative_error;
  g.make_model = [&](Variant v, InitKind k, std::uint64_t seed) { return detail::pde_model(c, v, k, seed, problem); };
  detail::run_grid(c, g, t);
  return t;
}

inline ResultTable run_nonlinear_pde(const ExperimentConfig& c) {
  ResultTable t{c};
  const auto problem = doubled_problem(EllipticProblem::constant(c.N, c.nonlinearity));
  const auto linear = EllipticProblem::constant(c.N, 0.0);
  const Tensor odd = odd_extension_map(c.N);
  Tensor restrict({2 * c.N, c.N});
  for (std::size_t n = 0; n < c.N; ++n) restrict[n * c.N + n] = 1.0;
  detail::GridTask g;
  std::mt19937_64 train_rng(derive_seed(c.seed, 0x7a1)), test_rng(derive_seed(c.seed, 0x7e57));
  g.train_set = std::make_shared<const Batch>(detail::pde_data(c, train_rng, c.train_size, nullptr));
  g.test_set = detail::pde_data(c, test_rng, c.test_size, nullptr);
  g.loss = [problem, odd, restrict](const Batch& b, Var pred) {
    return mse(detail::pde_residual_operator(problem, odd, restrict, pred), b.x);
  };
  g.metric = [problem, odd, restrict](const Batch& b, const Tensor& pred) {
    Tape tape;
    const Tensor au = detail::pde_residual_operator(problem, odd, restrict, tape.constant(pred)).value();
    return mean_relative_error(au, b.x);
  };
  g.make_model = [&](Variant v, InitKind k, std::uint64_t seed) { return detail::pde_model(c, v, k, seed, linear); };
  detail::run_grid(c, g, t);
  return t;
}

// ---------------------------------------------------------------------------
// Denoising and deblurring

namespace detail {

/// Encoder to K frequencies, conjugate-symmetric extension to 2K inputs on
/// frequencies [-K, K), decoder back to N samples.
inline Model restoration_model(const ExperimentConfig& c, Variant v, InitKind init, std::uint64_t seed) {
  const std::size_t N = c.N, K = c.K;
  Model m;
  const auto enc = spec_with(v, N, K, c.L, c.r, true);
  const auto dec = spec_with(v, 2 * K, N, c.L, c.r, false, true);
  m.nets.push_back(make_net(enc, init, derive_seed(seed, 1)));
  m.nets.push_back(make_net(dec, init, derive_seed(seed, 2),
                            synthesis_target(2 * K, N, static_cast<double>(N), -static_cast<double>(K),
                                             1.0 / static_cast<double>(N))));
  Tensor sym({4 * K, 8 * K});
  const std::size_t conj_perm[4] = {0, 3, 2, 1};
  for (std::size_t n = 0; n < 2 * K; ++n) {
    if (n == 0) continue;  // frequency -K is not available
    for (std::size_t u = 0; u < 4; ++u) {
      if (n >= K)
        sym[(4 * (n - K) + u) * 8 * K + 4 * n + u] = 1.0;
      else
        sym[(4 * (K - n) + conj_perm[u]) * 8 * K + 4 * n + u] = 1.0;
    }
  }
  const Tensor read_re = part_readout(N, 0);
  m.fwd = [sym, read_re, K](const Model& mm, const Model::Bound& b, Var x) {
    const std::size_t rows = x.value().dim(0);
    const Var e = linear_map(forward(mm.nets[0].spec, b.nets[0], x), sym);
    return linear_map(forward(mm.nets[1].spec, b.nets[1], reshape(e, {rows, 2 * K, 4})), read_re);
  };
  return m;
}

}  // namespace detail

inline ResultTable run_denoise_deblur(const ExperimentConfig& c) {
  ResultTable t{c};
  const bool blur = c.task == "deblur";
  const Corruption corr{blur ? CorruptionMode::blur : CorruptionMode::noise, blur ? c.blur_sigma : c.noise_sigma, true};
  const auto src = detail::make_source(c, c.g_center, c.g_width);
  auto sample = [src, corr](std::mt19937_64& rng, std::size_t n) {
    const std::size_t N = src.dist.N;
    Batch b{Tensor({n, N}), Tensor({n, N})};
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = gen_masked_signal(src.dist, rng).signal;
      const auto x = corrupt(s, corr, rng);
      std::copy(x.begin(), x.end(), b.x.data().begin() + static_cast<std::ptrdiff_t>(i * N));
      std::copy(s.begin(), s.end(), b.y.data().begin() + static_cast<std::ptrdiff_t>(i * N));
    }
    return b;
  };
  detail::GridTask g;
  g.sample = sample;
  std::mt19937_64 test_rng(derive_seed(c.seed, 0x7e57));
  g.test_set = sample(test_rng, c.test_size);
  g.loss = [](const Batch& b, Var pred) { return mse(pred, b.y); };
  g.metric = detail::row_relative_error;
  g.make_model = [&](Variant v, InitKind k, std::uint64_t seed) { return detail::restoration_model(c, v, k, seed); };
  t.add("corrupted-input", "test_error", mean_relative_error(g.test_set.x, g.test_set.y));
  detail::run_grid(c, g, t);
  return t;
}

inline ResultTable run_experiment(const ExperimentConfig& c) {
  if (c.task == "approx-ft") return run_approx_ft(c);
  if (c.task == "train-ft") return run_train_ft(c);
  if (c.task == "transfer") return run_transfer(c);
  if (c.task == "energy") return run_energy(c);
  if (c.task == "linear-pde") return run_linear_pde(c);
  if (c.task == "nonlinear-pde") return run_nonlinear_pde(c);
  if (c.task == "denoise" || c.task == "deblur") return run_denoise_deblur(c);
  if (c.task == "bnet-vs-bnet2") return run_bnet_comparison(c);
  throw ValidationError("unknown task '" + c.task + "'");
}

}  // namespace bnet2
