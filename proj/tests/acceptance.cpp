// Acceptance run: prints one PASS/FAIL line per criterion, writes every
// result table under --out, and exits 0 once all criteria were evaluated.
// A nonzero exit means the run itself broke (exception, missing result).

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bnet2/experiments.hpp"

using namespace bnet2;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::filesystem::path out_root;
int failures = 0;

void report(int id, const std::string& title, Verdict& v, double seconds) {
  std::printf("criterion %d: %s - %s (%.1f s): %s\n", id, v.pass ? "PASS" : "FAIL", title.c_str(), seconds,
              v.detail.str().c_str());
  std::fflush(stdout);
  if (!v.pass) ++failures;
}

ResultTable run_and_save(const ExperimentConfig& c, const std::string& sub) {
  const auto t = run_experiment(c);
  write_results(t, out_root / sub);
  return t;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

// 1 uses the r=4 sweeps at both sizes; 2 and 3 use the desk sweep over r=3..6.
void operator_decay(const ResultTable& full, const ResultTable& desk) {
  Stopwatch sw;
  Verdict v;
  const double target[] = {5.25e-2, 4.18e-3, 2.84e-4, 1.79e-5, 1.16e-6};
  double prev = INFINITY;
  v.detail << "eps2(L=6..10) =";
  for (int L = 6; L <= 10; ++L) {
    const double e = full.get("r=4;K=64;L=" + std::to_string(L), "eps_2");
    const double ref = target[L - 6];
    v.detail << " " << sci(e);
    v.require(e <= 3.0 * ref && e >= ref / 3.0, "L=" + std::to_string(L) + " outside x3 of " + sci(ref));
    v.require(e < prev, "not monotone at L=" + std::to_string(L));
    prev = e;
  }
  const double k_full = full.get("r=4;K=64", "rate_2");
  const double k_desk = desk.get("r=4;K=64", "rate_2");
  v.detail << "; k2 = " << k_full << " (N=16384), " << k_desk << " (N=4096)";
  v.require(std::abs(k_full + 1.14) <= 0.15, "full slope");
  v.require(std::abs(k_desk + 1.14) <= 0.15, "desk slope");
  const double t_full = full.timings.value("seconds", 0.0), t_desk = desk.timings.value("seconds", 0.0);
  v.detail << "; sweep times " << t_full << " s / " << t_desk << " s";
  v.require(t_full < 600.0, "full sweep over 10 min");
  v.require(t_desk < 60.0, "desk sweep over 1 min");
  report(1, "pre-train operator error decay at r=4, K=64", v, sw.seconds());
}

void rate_vs_r(const ResultTable& desk) {
  Stopwatch sw;
  Verdict v;
  const double target[] = {0.87, 1.14, 1.42, 1.67};
  double prev = 0.0;
  v.detail << "|k2| =";
  for (int r = 3; r <= 6; ++r) {
    const double k = std::abs(desk.get("r=" + std::to_string(r) + ";K=64", "rate_2"));
    v.detail << " " << k;
    v.require(std::abs(k - target[r - 3]) <= 0.15, "r=" + std::to_string(r) + " off by more than 0.15");
    v.require(k > prev, "not increasing at r=" + std::to_string(r));
    prev = k;
  }
  report(2, "decay rate grows with r", v, sw.seconds());
}

void theorem_ceiling(const std::vector<const ResultTable*>& tables) {
  Stopwatch sw;
  Verdict v;
  std::size_t checked = 0;
  for (const auto* t : tables)
    for (const auto& row : t->rows) {
      if (row.metric != "bound_applicable" || row.value != 1.0) continue;
      for (const char* p : {"1", "2", "inf"}) {
        const double e = t->get(row.case_name, std::string("eps_") + p);
        const double b = t->get(row.case_name, std::string("bound_") + p);
        ++checked;
        v.require(e <= b, row.case_name + " p=" + p + ": " + sci(e) + " > " + sci(b));
      }
    }
  v.detail << checked << " (r,K,L,p) cases under the precondition";
  v.require(checked > 0, "no case satisfied the precondition");
  report(3, "measured error below the theorem bound", v, sw.seconds());
}

double model_loss(const Model& m, const Tensor& x, const Tensor& y) {
  Tape tape;
  const auto b = m.bind(tape, false);
  return mse(m.forward(b, tape.constant(x)), y).value()[0];
}

// Worst relative mismatch between tape gradients and central differences on
// `samples` random parameter components.
double gradient_mismatch(Model m, const Tensor& x, const Tensor& y, std::size_t samples, std::uint64_t seed) {
  Tape tape;
  const auto b = m.bind(tape, true);
  const Var l = mse(m.forward(b, tape.constant(x)), y);
  tape.backward(l);
  std::vector<Tensor> grads;
  for (const auto& var : b.all) grads.push_back(tape.grad(var));
  auto ptrs = m.params();
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t k = rng() % ptrs.size();
    const std::size_t i = rng() % ptrs[k]->size();
    const double orig = (*ptrs[k])[i], h = 1e-6;
    (*ptrs[k])[i] = orig + h;
    const double fp = model_loss(m, x, y);
    (*ptrs[k])[i] = orig - h;
    const double fm = model_loss(m, x, y);
    (*ptrs[k])[i] = orig;
    const double fd = (fp - fm) / (2.0 * h), g = grads[k][i];
    worst = std::max(worst, std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-6}));
  }
  return worst;
}

void structural_oracles() {
  Stopwatch sw;
  Verdict v;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  double chain_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    Complex x{u(rng), u(rng)}, prod = 1.0;
    Embedded4 e = embed(x);
    for (int l = 0; l < 8; ++l) {
      const Complex a{1.2 * u(rng), 1.2 * u(rng)};
      prod *= a;
      e = relu4(apply_block(extend_assign(a), e));
    }
    chain_err = std::max(chain_err, std::abs(decode(e) - prod * x) / std::max(1.0, std::abs(prod * x)));
  }
  v.detail << "embed chain err " << sci(chain_err);
  v.require(chain_err <= 1e-12, "complex-embed chain");

  bool bit_exact = true;
  for (const auto& spec : {make_spec(Variant::bnet2, 128, 8, 5, 3), make_spec(Variant::bnet2, 64, 16, 3, 2)})
    for (bool fa : {false, true}) {
      NetworkSpec s = spec;
      s.final_activation = fa;
      auto bn = build(s, InitKind::random, 7);
      for (auto& l : bn.layers)
        for (auto& b : l.bias.data()) b = 0.3 * u(rng);
      Tensor x({32, s.N});
      for (auto& t : x.data()) t = u(rng);
      bit_exact = bit_exact && forward_bnet2(bn, x) == forward_cnn(bnet2_to_cnn(bn), x);
    }
  v.detail << "; bnet2 == cnn(zero-filled) " << (bit_exact ? "bit-exact" : "differs");
  v.require(bit_exact, "bnet2/cnn equivalence");

  std::size_t count_ok = 0, specs = 0;
  while (specs < 50) {
    const Variant var = std::array{Variant::cnn, Variant::bnet2, Variant::bnet}[specs % 3];
    const int L = 1 + static_cast<int>(rng() % 6);
    if (var == Variant::bnet && L < 2) continue;
    const int r = 1 + static_cast<int>(rng() % 4);
    const std::size_t w = 1 + rng() % 4, N = w << L;
    const std::size_t K = (rng() % 2) ? (std::size_t{1} << L) * (1 + rng() % 3) : 1 + rng() % (std::size_t{1} << L);
    NetworkSpec s = make_spec(var, N, K, L, r);
    s.final_activation = rng() % 2;
    s.complex_input = rng() % 2;
    ++specs;
    if (param_count(s).total_real_count == allocate_params(s).real_count()) ++count_ok;
  }
  v.detail << "; param_count " << count_ok << "/50";
  v.require(count_ok == 50, "param_count vs enumeration");

  double worst = 0.0;
  for (auto var : {Variant::bnet2, Variant::cnn, Variant::bnet}) {
    NetworkSpec s = make_spec(var, 64, 8, 3, 2);
    s.final_activation = true;
    Model m;
    m.nets.push_back(build(s, InitKind::random, 11));
    for (auto& l : m.nets[0].layers)
      for (auto& b : l.bias.data()) b = 0.3 * u(rng);
    m.fwd = [](const Model& mm, const Model::Bound& b, Var x) { return forward(mm.nets[0].spec, b.nets[0], x); };
    Tensor x({3, 64}), y({3, 32});
    for (auto& t : x.data()) t = u(rng);
    for (auto& t : y.data()) t = u(rng);
    const double e = gradient_mismatch(m, x, y, 200, 12);
    v.detail << (var == Variant::bnet2 ? "; gradient rel err " : ", ") << to_string(var) << " " << sci(e);
    worst = std::max(worst, e);
  }
  {
    auto c = default_config("nonlinear-pde", false);
    c.N = 16;
    c.L = 2;
    c.K_de = 8;
    const auto q = doubled_problem(EllipticProblem::constant(c.N, 10.0));
    const Tensor odd = odd_extension_map(c.N);
    Tensor restrict({2 * c.N, c.N});
    for (std::size_t n = 0; n < c.N; ++n) restrict[n * c.N + n] = 1.0;
    Model m = detail::pde_model(c, Variant::bnet2, InitKind::random, 5, q);
    for (auto& b : m.extras[1].data()) b = 0.1 * u(rng);
    const auto inner = m.fwd;
    m.fwd = [inner, q, odd, restrict](const Model& mm, const Model::Bound& b, Var x) {
      return detail::pde_residual_operator(q, odd, restrict, scale(inner(mm, b, x), 0.1));
    };
    Tensor x({2, c.N}), y({2, c.N});
    for (auto& t : x.data()) t = u(rng);
    const double e = gradient_mismatch(m, x, y, 200, 13);
    v.detail << ", pde residual " << sci(e);
    worst = std::max(worst, e);
  }
  v.require(worst <= 1e-4, "finite-difference gradients");
  report(4, "exact structural oracles", v, sw.seconds());
}

void trained_ft(const ExperimentConfig& c) {
  Stopwatch sw;
  Verdict v;
  const auto t = run_and_save(c, "train-ft");
  for (const char* var : {"bnet2", "cnn"}) {
    const std::string ft = std::string(var) + "-ft", rnd = std::string(var) + "-rand";
    const double pre = t.get(ft, "pre_train_error"), test = t.get(ft, "test_error"), rt = t.get(rnd, "test_error");
    v.detail << var << ": pre " << sci(pre) << " -> " << sci(test) << " (x" << pre / test << "), rand " << sci(rt) << "; ";
    v.require(pre >= 10.0 * test, ft + " improved less than 10x");
    v.require(test < rt, ft + " not better than " + rnd);
    const double secs = t.timings[ft].value("train_seconds", 0.0);
    v.require(secs < 300.0, ft + " took over 5 min");
  }
  report(5, "trained FT regression", v, sw.seconds());
}

void nonlinear_pde(const ExperimentConfig& c) {
  Stopwatch sw;
  Verdict v;
  const auto t = run_and_save(c, "nonlinear-pde");
  for (const char* var : {"bnet2", "cnn"}) {
    const double ft = t.get(std::string(var) + "-ft", "test_error");
    const double rnd = t.get(std::string(var) + "-rand", "test_error");
    v.detail << var << ": ft " << sci(ft) << ", rand " << sci(rnd) << "; ";
    v.require(ft <= 0.1, std::string(var) + "-ft above 0.1");
    v.require(rnd >= 0.5, std::string(var) + "-rand below 0.5");
  }
  v.require(sw.seconds() < 600.0, "over 10 min");
  report(6, "nonlinear PDE solve-train", v, sw.seconds());
}

void restoration(const ExperimentConfig& dn, const ExperimentConfig& db) {
  Stopwatch sw;
  Verdict v;
  const auto tn = run_and_save(dn, "denoise");
  const auto tb = run_and_save(db, "deblur");
  for (const char* var : {"bnet2", "cnn"}) {
    const std::string ft = std::string(var) + "-ft", rnd = std::string(var) + "-rand";
    const double rn = tn.get(rnd, "test_error") / tn.get(ft, "test_error");
    const double rb = tb.get(rnd, "test_error") / tb.get(ft, "test_error");
    v.detail << var << ": denoise ft " << sci(tn.get(ft, "test_error")) << " rand/ft " << rn << ", deblur ft "
             << sci(tb.get(ft, "test_error")) << " rand/ft " << rb << "; ";
    v.require(rn > 1.0, std::string(var) + " denoise ft not better");
    v.require(rb > 1.0, std::string(var) + " deblur ft not better");
    v.require(rb > rn, std::string(var) + " deblur ratio not larger");
  }
  const double bn = tn.get("corrupted-input", "test_error"), bb = tb.get("corrupted-input", "test_error");
  v.detail << "baselines noise " << sci(bn) << " blur " << sci(bb);
  v.require(std::abs(bn - 0.0226) <= 0.3 * 0.0226, "noise baseline outside 0.0226 +-30%");
  v.require(std::abs(bb - 0.165) <= 0.3 * 0.165, "blur baseline outside 0.165 +-30%");
  report(7, "denoise/deblur ordering and baselines", v, sw.seconds());
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void determinism() {
  Stopwatch sw;
  Verdict v;
  std::vector<ExperimentConfig> configs;
  auto tf = default_config("train-ft", false);
  tf.steps = 200;
  tf.test_size = 512;
  configs.push_back(tf);
  auto lp = default_config("linear-pde", false);
  lp.steps = 200;
  lp.test_size = 200;
  configs.push_back(lp);
  auto tr = default_config("transfer", false);
  tr.steps = 50;
  tr.repeats = 2;
  tr.sweep_max = 1.0;
  tr.test_size = 128;
  configs.push_back(tr);
  for (const auto& c : configs) {
    for (int run = 0; run < 2; ++run) run_and_save(c, "determinism/" + c.task + "-" + std::to_string(run));
    const auto a = slurp(out_root / "determinism" / (c.task + "-0") / "results.csv");
    const auto b = slurp(out_root / "determinism" / (c.task + "-1") / "results.csv");
    v.detail << c.task << " " << (a == b && !a.empty() ? "identical" : "differs") << " (" << a.size() << " bytes); ";
    v.require(a == b && !a.empty(), c.task + " results.csv differs");
  }
  report(8, "byte-identical results.csv across reruns", v, sw.seconds());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string out = "acceptance_out";
  std::vector<int> only;
  app.add_option("--out", out, "directory for result tables");
  app.add_option("--only", only, "run just these criteria");
  CLI11_PARSE(app, argc, argv);
  out_root = out;
  auto want = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  try {
    if (want(1) || want(2) || want(3)) {
      auto full = default_config("approx-ft", false);
      full.N = 16384;
      full.r_list = {4};
      Stopwatch s1;
      auto tf = run_and_save(full, "approx-ft-16384");
      tf.timings["seconds"] = s1.seconds();
      auto desk4 = default_config("approx-ft", false);
      desk4.r_list = {4};
      Stopwatch s2;
      auto td4 = run_and_save(desk4, "approx-ft-4096-r4");
      td4.timings["seconds"] = s2.seconds();
      auto td = run_and_save(default_config("approx-ft", false), "approx-ft-4096");
      if (want(1)) operator_decay(tf, td4);
      if (want(2)) rate_vs_r(td);
      if (want(3)) theorem_ceiling({&tf, &td});
    }
    if (want(4)) structural_oracles();
    if (want(5)) trained_ft(default_config("train-ft", false));
    if (want(6)) nonlinear_pde(default_config("nonlinear-pde", false));
    if (want(7)) restoration(default_config("denoise", false), default_config("deblur", false));
    if (want(8)) determinism();
  } catch (const std::exception& e) {
    std::printf("acceptance run aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", failures);
  return 0;
}
