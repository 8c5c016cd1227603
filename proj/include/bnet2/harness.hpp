#pragma once

// Experiment plumbing: run configuration, result tables and their files,
// composite models over one or more networks, and the ADAM training loop.

#include <zlib.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bnet2/adam.hpp"
#include "bnet2/network.hpp"
#include "bnet2/serialize.hpp"

#ifndef BNET2_COMMIT
#define BNET2_COMMIT "unknown"
#endif

namespace bnet2 {

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, std::vector<double> trace)
      : std::runtime_error("training diverged at step " + std::to_string(step)), step(step), trace(std::move(trace)) {}
  std::size_t step;
  std::vector<double> trace;
};

inline const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names{"approx-ft", "train-ft",      "transfer", "energy",       "linear-pde",
                                              "nonlinear-pde", "denoise", "deblur", "bnet-vs-bnet2"};
  return names;
}

inline std::string to_string(InitKind k) {
  switch (k) {
    case InitKind::ft: return "ft";
    case InitKind::random: return "rand";
    case InitKind::zeros: return "zeros";
  }
  return "?";
}

inline InitKind parse_init(const std::string& s) {
  if (s == "ft") return InitKind::ft;
  if (s == "rand" || s == "random") return InitKind::random;
  throw ValidationError("unknown init '" + s + "' (expected ft or rand)");
}

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  std::string task = "train-ft";
  std::uint64_t seed = 1;
  bool paper_scale = false;

  std::size_t N = 128;
  std::size_t K = 8;
  int L = 5;
  int r = 3;
  std::vector<Variant> variants{Variant::bnet2, Variant::cnn};
  std::vector<InitKind> inits{InitKind::ft, InitKind::random};

  std::size_t steps = 2000;
  std::size_t rand_steps = 0;  ///< steps for rand-init runs, 0 means `steps`
  std::size_t batch = 256;
  std::size_t train_size = 4096;  ///< finite-data tasks
  std::size_t test_size = 4096;
  double learning_rate = 1e-4;
  double decay_factor = 0.85;
  std::size_t decay_interval = 500;

  double g_center = 0.0;
  double g_width = 2.0;
  std::size_t signal_K = 64;  ///< random frequencies per signal, N/2 by default

  // approx-ft
  std::vector<int> L_list{6, 7, 8, 9, 10};
  std::vector<int> r_list{3, 4, 5, 6};
  std::vector<std::size_t> K_list{64};
  std::string placement = "midpoint";

  // transfer
  std::size_t repeats = 3;
  double sweep_step = 0.2;
  double sweep_max = 7.0;
  double high_center = 7.0;

  // train-ft
  bool warm_start = true;

  // PDE tasks
  std::size_t K_de = 16;
  double nonlinearity = 1e3;

  // denoise / deblur
  double noise_sigma = 0.002;
  double blur_sigma = 3.0;

  std::size_t steps_for(InitKind k) const { return k == InitKind::random && rand_steps > 0 ? rand_steps : steps; }
  LearningRateSchedule schedule() const { return {learning_rate, decay_factor, decay_interval}; }
};

namespace detail {

template <class T, class F>
std::string join(const std::vector<T>& v, F f) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + f(v[i]);
  return s;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    T out;
    if constexpr (std::is_floating_point_v<T>)
      out = static_cast<T>(std::stod(v, &pos));
    else if constexpr (std::is_signed_v<T>)
      out = static_cast<T>(std::stoll(v, &pos));
    else {
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      out = static_cast<T>(std::stoull(v, &pos));
    }
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': cannot parse '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ValidationError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

}  // namespace detail

/// Canonical key=value text; fully determines a run.
inline std::string to_key_values(const ExperimentConfig& c) {
  using detail::fmt_double;
  using detail::join;
  auto num = [](auto v) { return std::to_string(v); };
  std::map<std::string, std::string> kv{
      {"task", c.task},
      {"seed", num(c.seed)},
      {"paper_scale", c.paper_scale ? "1" : "0"},
      {"N", num(c.N)},
      {"K", num(c.K)},
      {"L", num(c.L)},
      {"r", num(c.r)},
      {"variants", join(c.variants, [](Variant v) { return to_string(v); })},
      {"inits", join(c.inits, [](InitKind k) { return to_string(k); })},
      {"steps", num(c.steps)},
      {"rand_steps", num(c.rand_steps)},
      {"batch", num(c.batch)},
      {"train_size", num(c.train_size)},
      {"test_size", num(c.test_size)},
      {"learning_rate", fmt_double(c.learning_rate)},
      {"decay_factor", fmt_double(c.decay_factor)},
      {"decay_interval", num(c.decay_interval)},
      {"g_center", fmt_double(c.g_center)},
      {"g_width", fmt_double(c.g_width)},
      {"signal_K", num(c.signal_K)},
      {"L_list", join(c.L_list, num)},
      {"r_list", join(c.r_list, num)},
      {"K_list", join(c.K_list, num)},
      {"placement", c.placement},
      {"repeats", num(c.repeats)},
      {"sweep_step", fmt_double(c.sweep_step)},
      {"sweep_max", fmt_double(c.sweep_max)},
      {"high_center", fmt_double(c.high_center)},
      {"warm_start", c.warm_start ? "1" : "0"},
      {"K_de", num(c.K_de)},
      {"nonlinearity", fmt_double(c.nonlinearity)},
      {"noise_sigma", fmt_double(c.noise_sigma)},
      {"blur_sigma", fmt_double(c.blur_sigma)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

inline void apply_key_value(ExperimentConfig& c, const std::string& k, const std::string& v) {
  using detail::parse_bool;
  using detail::parse_number;
  using detail::split_list;
  if (k == "task") {
    if (std::find(task_names().begin(), task_names().end(), v) == task_names().end())
      throw ValidationError("unknown task '" + v + "'");
    c.task = v;
  } else if (k == "seed") c.seed = parse_number<std::uint64_t>(k, v);
  else if (k == "paper_scale") c.paper_scale = parse_bool(k, v);
  else if (k == "N") c.N = parse_number<std::size_t>(k, v);
  else if (k == "K") c.K = parse_number<std::size_t>(k, v);
  else if (k == "L") c.L = parse_number<int>(k, v);
  else if (k == "r") c.r = parse_number<int>(k, v);
  else if (k == "variants") {
    c.variants.clear();
    for (const auto& s : split_list(v)) c.variants.push_back(parse_variant(s));
  } else if (k == "inits") {
    c.inits.clear();
    for (const auto& s : split_list(v)) c.inits.push_back(parse_init(s));
  } else if (k == "steps") c.steps = parse_number<std::size_t>(k, v);
  else if (k == "rand_steps") c.rand_steps = parse_number<std::size_t>(k, v);
  else if (k == "batch") c.batch = parse_number<std::size_t>(k, v);
  else if (k == "train_size") c.train_size = parse_number<std::size_t>(k, v);
  else if (k == "test_size") c.test_size = parse_number<std::size_t>(k, v);
  else if (k == "learning_rate") c.learning_rate = parse_number<double>(k, v);
  else if (k == "decay_factor") c.decay_factor = parse_number<double>(k, v);
  else if (k == "decay_interval") c.decay_interval = parse_number<std::size_t>(k, v);
  else if (k == "g_center") c.g_center = parse_number<double>(k, v);
  else if (k == "g_width") c.g_width = v == "inf" ? std::numeric_limits<double>::infinity() : parse_number<double>(k, v);
  else if (k == "signal_K") c.signal_K = parse_number<std::size_t>(k, v);
  else if (k == "L_list") {
    c.L_list.clear();
    for (const auto& s : split_list(v)) c.L_list.push_back(parse_number<int>(k, s));
  } else if (k == "r_list") {
    c.r_list.clear();
    for (const auto& s : split_list(v)) c.r_list.push_back(parse_number<int>(k, s));
  } else if (k == "K_list") {
    c.K_list.clear();
    for (const auto& s : split_list(v)) c.K_list.push_back(parse_number<std::size_t>(k, s));
  } else if (k == "placement") {
    if (v != "midpoint" && v != "snapped") throw ValidationError("placement must be midpoint or snapped");
    c.placement = v;
  } else if (k == "repeats") c.repeats = parse_number<std::size_t>(k, v);
  else if (k == "sweep_step") c.sweep_step = parse_number<double>(k, v);
  else if (k == "sweep_max") c.sweep_max = parse_number<double>(k, v);
  else if (k == "high_center") c.high_center = parse_number<double>(k, v);
  else if (k == "warm_start") c.warm_start = parse_bool(k, v);
  else if (k == "K_de") c.K_de = parse_number<std::size_t>(k, v);
  else if (k == "nonlinearity") c.nonlinearity = parse_number<double>(k, v);
  else if (k == "noise_sigma") c.noise_sigma = parse_number<double>(k, v);
  else if (k == "blur_sigma") c.blur_sigma = parse_number<double>(k, v);
  else
    throw ValidationError("unknown config key '" + k + "'");
}

/// Task defaults for the desk profile or the full sizes.
inline ExperimentConfig default_config(const std::string& task, bool paper_scale) {
  ExperimentConfig c;
  apply_key_value(c, "task", task);
  c.paper_scale = paper_scale;
  if (task == "approx-ft") {
    c.N = paper_scale ? 16384 : 4096;
    c.K = 64;
    c.K_list = paper_scale ? std::vector<std::size_t>{64, 256} : std::vector<std::size_t>{64};
    c.variants = {Variant::bnet2};
    c.inits = {InitKind::ft};
  } else if (task == "train-ft") {
    c.steps = paper_scale ? 10000 : 2000;
    c.rand_steps = paper_scale ? 20000 : 0;
    c.test_size = paper_scale ? 16384 : 4096;
  } else if (task == "transfer") {
    c.r = 2;
    c.repeats = paper_scale ? 20 : 3;
    c.steps = paper_scale ? 10000 : 400;
    c.batch = paper_scale ? 256 : 128;
    c.test_size = paper_scale ? 16384 : 512;
  } else if (task == "energy") {
    c.steps = paper_scale ? 10000 : 2000;
    c.test_size = paper_scale ? 16384 : 4096;
  } else if (task == "linear-pde" || task == "nonlinear-pde") {
    c.N = 64;
    c.K = 8;
    c.L = 4;
    c.K_de = 16;
    c.train_size = 4096;
    c.test_size = paper_scale ? 5000 : 1000;
    c.steps = paper_scale ? 10000 : 2000;
    if (task == "nonlinear-pde") c.nonlinearity = 1e3;
  } else if (task == "denoise" || task == "deblur") {
    c.L = 4;
    c.steps = paper_scale ? 10000 : 2000;
    c.test_size = paper_scale ? 16384 : 4096;
  } else if (task == "bnet-vs-bnet2") {
    c.L = 3;
    c.variants = {Variant::bnet, Variant::bnet2};
    c.steps = paper_scale ? 10000 : 2000;
    c.test_size = paper_scale ? 16384 : 4096;
  }
  return c;
}

/// Defaults for `task` and profile, overridden by a key=value config text.
/// Keys `task` and `paper_scale` in the text are rejected when they disagree.
inline ExperimentConfig load_config(const std::string& task, bool paper_scale, std::istream& text) {
  const auto kv = parse_key_values(text);
  if (auto it = kv.find("task"); it != kv.end() && it->second != task)
    throw ValidationError("config task '" + it->second + "' does not match '" + task + "'");
  bool scale = paper_scale;
  if (auto it = kv.find("paper_scale"); it != kv.end()) scale = scale || detail::parse_bool("paper_scale", it->second);
  ExperimentConfig c = default_config(task, scale);
  for (const auto& [k, v] : kv)
    if (k != "task" && k != "paper_scale") apply_key_value(c, k, v);
  if (c.variants.empty() || c.inits.empty()) throw ValidationError("variants and inits must be non-empty");
  if (c.batch == 0 || c.test_size == 0) throw ValidationError("batch and test_size must be positive");
  return c;
}

inline std::string config_digest(const ExperimentConfig& c) {
  const auto text = to_key_values(c);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x",
                static_cast<unsigned>(::crc32(0L, reinterpret_cast<const Bytef*>(text.data()),
                                              static_cast<uInt>(text.size()))));
  return buf;
}

// ---------------------------------------------------------------------------
// Results

struct ResultRow {
  std::string case_name;
  std::string metric;
  double value = 0.0;
  double std_dev = std::numeric_limits<double>::quiet_NaN();
  std::size_t count = 1;
};

struct PlotSeries {
  std::string name;
  std::vector<double> x, y, std_dev;  // std_dev empty when not repeated
};

struct TraceSeries {
  std::string run;
  std::vector<double> loss;
};

struct ResultTable {
  ResultTable() = default;
  explicit ResultTable(ExperimentConfig c) : config(std::move(c)) {}

  ExperimentConfig config;
  std::vector<ResultRow> rows;
  std::vector<PlotSeries> plots;
  std::vector<TraceSeries> traces;
  nlohmann::json timings = nlohmann::json::object();  // wall-clock, kept out of results.csv
  bool diverged = false;

  void add(std::string case_name, std::string metric, double value) {
    rows.push_back({std::move(case_name), std::move(metric), value});
  }
  void add_stat(std::string case_name, std::string metric, const std::vector<double>& samples) {
    double m = 0.0;
    for (double v : samples) m += v;
    m /= static_cast<double>(samples.size());
    double var = 0.0;
    for (double v : samples) var += (v - m) * (v - m);
    const double sd = samples.size() > 1 ? std::sqrt(var / static_cast<double>(samples.size() - 1)) : 0.0;
    rows.push_back({std::move(case_name), std::move(metric), m, sd, samples.size()});
  }
  std::optional<double> find(const std::string& case_name, const std::string& metric) const {
    for (const auto& r : rows)
      if (r.case_name == case_name && r.metric == metric) return r.value;
    return std::nullopt;
  }
  double get(const std::string& case_name, const std::string& metric) const {
    if (auto v = find(case_name, metric)) return *v;
    throw std::out_of_range("no result row " + case_name + " / " + metric);
  }
};

namespace detail {
inline std::string fmt_value(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10e", v);
  return buf;
}
}  // namespace detail

inline std::string results_csv(const ResultTable& t) {
  std::string out = "config_digest,task,case,metric,value,std,count\n";
  const auto digest = config_digest(t.config);
  for (const auto& r : t.rows)
    out += digest + "," + t.config.task + "," + r.case_name + "," + r.metric + "," + detail::fmt_value(r.value) + "," +
           detail::fmt_value(r.std_dev) + "," + std::to_string(r.count) + "\n";
  return out;
}

inline nlohmann::json provenance() {
  return {{"kernel_sign", -1},
          {"dft_normalization", "forward unnormalized sum_n f_n exp(-2 pi i k n / N); inverse carries 1/N"},
          {"grid", "t_n = n / N on [0, 1)"},
          {"precision", "float64"},
          {"commit", BNET2_COMMIT}};
}

inline nlohmann::json results_json(const ResultTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json j{{"case", r.case_name}, {"metric", r.metric}, {"value", r.value}, {"count", r.count}};
    j["std"] = std::isnan(r.std_dev) ? nlohmann::json(nullptr) : nlohmann::json(r.std_dev);
    rows.push_back(j);
  }
  std::istringstream cfg_text(to_key_values(t.config));
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [k, v] : parse_key_values(cfg_text)) cfg[k] = v;
  return {{"task", t.config.task}, {"config_digest", config_digest(t.config)}, {"config", cfg},
          {"provenance", provenance()}, {"rows", rows}, {"timings", t.timings}, {"diverged", t.diverged}};
}

/// Writes results.csv, results.json, trace.csv and plot_<name>.csv into dir.
inline void write_results(const ResultTable& t, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
  };
  write("results.csv", results_csv(t));
  write("results.json", results_json(t).dump(2) + "\n");
  std::string trace = "run,step,loss\n";
  for (const auto& s : t.traces)
    for (std::size_t i = 0; i < s.loss.size(); ++i)
      trace += s.run + "," + std::to_string(i) + "," + detail::fmt_value(s.loss[i]) + "\n";
  write("trace.csv", trace);
  for (const auto& p : t.plots) {
    std::string text = p.std_dev.empty() ? "x,y\n" : "x,y,std\n";
    for (std::size_t i = 0; i < p.x.size(); ++i) {
      text += detail::fmt_value(p.x[i]) + "," + detail::fmt_value(p.y[i]);
      if (!p.std_dev.empty()) text += "," + detail::fmt_value(p.std_dev[i]);
      text += "\n";
    }
    write("plot_" + p.name + ".csv", text);
  }
}

// ---------------------------------------------------------------------------
// Models and training

/// Several networks plus free tensors composed by a forward function.
struct Model {
  struct Bound {
    std::vector<BoundParams> nets;
    std::vector<Var> extras;
    std::vector<Var> all;
  };
  using Forward = std::function<Var(const Model&, const Bound&, Var)>;

  std::vector<ParamSet> nets;
  std::vector<Tensor> extras;
  Forward fwd;

  std::vector<Tensor*> params() {
    std::vector<Tensor*> out;
    for (auto& n : nets)
      for (auto* t : n.tensors()) out.push_back(t);
    for (auto& e : extras) out.push_back(&e);
    return out;
  }
  std::size_t real_count() const {
    std::size_t n = 0;
    for (const auto& p : nets) n += p.real_count();
    for (const auto& e : extras) n += e.size();
    return n;
  }
  Bound bind(Tape& tape, bool grad) const {
    Bound b;
    for (const auto& n : nets) {
      b.nets.push_back(bnet2::bind(tape, n, grad));
      for (const auto& v : b.nets.back().all()) b.all.push_back(v);
    }
    for (const auto& e : extras) {
      b.extras.push_back(tape.leaf(e, grad));
      b.all.push_back(b.extras.back());
    }
    return b;
  }
  Var forward(const Bound& b, Var x) const { return fwd(*this, b, x); }

  /// Value-only prediction over rows of x, in chunks.
  Tensor predict(const Tensor& x, std::size_t chunk = 1024) const {
    const std::size_t rows = x.dim(0), width = x.size() / rows;
    Tensor out;
    std::vector<double> acc;
    Shape row_shape;
    for (std::size_t r0 = 0; r0 < rows; r0 += chunk) {
      const std::size_t nb = std::min(chunk, rows - r0);
      Shape s = x.shape();
      s[0] = nb;
      Tensor part(s, std::vector<double>(x.data().begin() + static_cast<std::ptrdiff_t>(r0 * width),
                                         x.data().begin() + static_cast<std::ptrdiff_t>((r0 + nb) * width)));
      Tape tape;
      const auto b = bind(tape, false);
      const Tensor y = forward(b, tape.constant(std::move(part))).value();
      row_shape = y.shape();
      acc.insert(acc.end(), y.data().begin(), y.data().end());
    }
    row_shape[0] = rows;
    return Tensor(row_shape, std::move(acc));
  }
};

struct Batch {
  Tensor x;  ///< inputs, [rows, ...]
  Tensor y;  ///< targets, [rows, ...]
};

/// The rows listed in idx.
inline Batch take_rows(const Batch& b, const std::vector<std::size_t>& idx) {
  auto gather = [&](const Tensor& t) {
    const std::size_t w = t.size() / t.dim(0);
    Shape s = t.shape();
    s[0] = idx.size();
    Tensor out(s);
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * w), w,
                  out.data().begin() + static_cast<std::ptrdiff_t>(i * w));
    return out;
  };
  return {gather(b.x), gather(b.y)};
}

using LossFn = std::function<Var(const Batch&, Var prediction)>;
using BatchFn = std::function<Batch(std::size_t step)>;

/// ADAM over `steps` batches. On a non-finite loss or update the parameters
/// are left at their last finite values and DivergenceError carries the trace.
inline std::vector<double> train(Model& m, const LossFn& loss, const BatchFn& next, std::size_t steps,
                                 const LearningRateSchedule& schedule) {
  auto ptrs = m.params();
  auto state = AdamState::for_params(ptrs, schedule);
  std::vector<double> trace;
  trace.reserve(steps);
  std::vector<Tensor> backup;
  for (std::size_t step = 0; step < steps; ++step) {
    const Batch b = next(step);
    Tape tape;
    const auto bound = m.bind(tape, true);
    const Var l = loss(b, m.forward(bound, tape.constant(b.x)));
    const double lv = l.value()[0];
    if (!std::isfinite(lv)) throw DivergenceError(step, std::move(trace));
    trace.push_back(lv);
    tape.backward(l);
    std::vector<Tensor> grads;
    grads.reserve(bound.all.size());
    for (const auto& v : bound.all) {
      grads.push_back(tape.grad(v));
      if (!grads.back().all_finite()) throw DivergenceError(step, std::move(trace));
    }
    backup.clear();
    for (auto* p : ptrs) backup.push_back(*p);
    adam_step(ptrs, grads, state);
    for (std::size_t i = 0; i < ptrs.size(); ++i)
      if (!ptrs[i]->all_finite()) {
        for (std::size_t j = 0; j < ptrs.size(); ++j) *ptrs[j] = backup[j];
        throw DivergenceError(step, std::move(trace));
      }
  }
  return trace;
}

/// Mean over rows of ||p - t|| / ||t||.
inline double mean_relative_error(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mean_relative_error");
  const std::size_t rows = pred.dim(0), w = pred.size() / rows;
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = r * w; i < (r + 1) * w; ++i) {
      num += (pred[i] - target[i]) * (pred[i] - target[i]);
      den += target[i] * target[i];
    }
    if (den == 0.0) throw NumericError("mean_relative_error: zero target row");
    total += std::sqrt(num / den);
  }
  return total / static_cast<double>(rows);
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace bnet2
