#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "miras/chunked.hpp"
#include "miras/finite_difference.hpp"
#include "miras/harness/runner.hpp"
#include "miras/reference.hpp"

namespace miras::verify {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  std::string default_config;
  std::string sweep_config;
  std::size_t jobs = 1;
};

namespace detail {

inline std::string sci(double x) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << x;
  return os.str();
}

inline CheckResult timed(int id, std::string name, const std::function<void(CheckResult&)>& body) {
  CheckResult r{id, std::move(name), false, "", 0.0};
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline const std::vector<BiasKind>& all_bias_kinds() {
  static const std::vector<BiasKind> kinds = {BiasKind::kDotProduct,   BiasKind::kL2,         BiasKind::kLp,
                                              BiasKind::kHuberCoord,   BiasKind::kHuberNorm,  BiasKind::kHuberMixture,
                                              BiasKind::kRobustShift,  BiasKind::kL1};
  return kinds;
}

inline AttentionalBias bias_for(BiasKind kind, double threshold, double p) {
  switch (kind) {
    case BiasKind::kDotProduct: return AttentionalBias::dot_product();
    case BiasKind::kL2: return AttentionalBias::l2();
    case BiasKind::kLp: return AttentionalBias::lp(p);
    case BiasKind::kHuberCoord: return AttentionalBias::huber_coord(threshold);
    case BiasKind::kHuberNorm: return AttentionalBias::huber_norm(threshold);
    case BiasKind::kHuberMixture: return AttentionalBias::huber_mixture(threshold);
    case BiasKind::kRobustShift: return AttentionalBias::robust_shift(threshold);
    case BiasKind::kL1: return AttentionalBias::l1();
  }
  return AttentionalBias::l2();
}

// Keep clear of kinks: |r_i| = 0, ||r|| = δ, |r_i| = δ.
inline bool away_from_kinks(const AttentionalBias& b, const Tensor& r) {
  if (b.kind == BiasKind::kDotProduct || b.kind == BiasKind::kL2) return true;
  for (double x : r.data())
    if (std::abs(x) <= 0.05) return false;
  const double rn = norm2(r.data());
  if ((b.kind == BiasKind::kHuberNorm || b.kind == BiasKind::kHuberMixture) && std::abs(rn - b.threshold) <= 0.1)
    return false;
  if (b.kind == BiasKind::kHuberCoord)
    for (double x : r.data())
      if (std::abs(std::abs(x) - b.threshold) <= 0.1) return false;
  return true;
}

}  // namespace detail

// Worst relative error of the analytic gradient against central differences.
struct GradientSuiteResult {
  double worst = 0.0;
  std::size_t instances = 0;
  std::size_t rejected = 0;
  std::string worst_case;
};

inline GradientSuiteResult gradient_suite(std::size_t per_cell = 100) {
  GradientSuiteResult out;
  const std::array<double, 4> ps = {1.5, 2.5, 3.0, 4.0};
  for (BiasKind kind : detail::all_bias_kinds()) {
    for (int mlp = 0; mlp < 2; ++mlp) {
      Rng rng(static_cast<std::uint64_t>(kind) * 2 + static_cast<std::uint64_t>(mlp), 0x6d);
      std::size_t got = 0;
      while (got < per_cell) {
        const double threshold = rng.uniform(0.3, 2.0);
        const AttentionalBias bias = detail::bias_for(kind, threshold, ps[got % ps.size()]);
        AnyMemory mem = MatrixMemory(3, 4);
        std::size_t dk = 4, dv = 3;
        if (mlp) {
          MlpMemory m = MlpMemory::seeded(4, 2, rng, 0.5);
          Tensor& p = m.params();
          const std::size_t nw = 2 * 4 * 4 * 2;
          for (std::size_t i = nw; i < nw + 4; ++i) p[i] = rng.uniform(0.5, 1.5);
          for (std::size_t i = nw + 4; i < p.size(); ++i) p[i] = rng.normal(0.0, 0.3);
          mem = m;
          dv = 4;
        } else {
          params(mem) = rng.normal_tensor(Dims{3, 4}, 0.7);
        }
        const Tensor k = rng.normal_tensor(Dims{dk});
        const Tensor v = rng.normal_tensor(Dims{dv});
        Tensor r = forward(mem, k.data());
        r -= v;
        if (!detail::away_from_kinks(bias, r)) {
          ++out.rejected;
          continue;
        }
        ++got;
        ++out.instances;
        const Tensor analytic = grad(bias, mem, k.data(), v.data());
        const Tensor numeric = numerical_grad(bias, mem, k.data(), v.data());
        const double err = relative_error(analytic, numeric);
        if (err > out.worst || std::isnan(err)) {
          out.worst = std::isnan(err) ? INFINITY : err;
          out.worst_case = std::string(to_string(kind)) + (mlp ? "/mlp" : "/matrix");
        }
      }
    }
  }
  return out;
}

inline CheckResult check_gradients() {
  return detail::timed(1, "gradient suite", [](CheckResult& r) {
    const auto t0 = std::chrono::steady_clock::now();
    const GradientSuiteResult g = gradient_suite(100);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.passed = g.worst <= 1e-5 && secs < 30.0 && g.instances == 1600;
    r.detail = std::to_string(g.instances) + " instances, worst rel err " + detail::sci(g.worst) +
               (g.worst_case.empty() ? "" : " (" + g.worst_case + ")") + ", " + detail::sci(secs) + " s";
  });
}

inline CheckResult check_ftrl_agreement() {
  return detail::timed(2, "FTRL / learning-retaining agreement", [](CheckResult& r) {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) worst = std::max(worst, verify_proposition1(s, 50, 8));
    r.passed = worst <= 1e-10;
    r.detail = "max gap " + detail::sci(worst) + " over 20 seeds, T=50";
  });
}

inline CheckResult check_equivalence() {
  return detail::timed(3, "reference rule equivalence", [](CheckResult& r) {
    double worst = 0.0;
    std::size_t rules = 0;
    std::string worst_rule = "-";
    for (ReferenceRule rule : all_reference_rules()) {
      if (!framework_mapping(rule)) continue;
      ++rules;
      for (std::uint64_t s = 0; s < 20; ++s) {
        const double dev = framework_equivalence(rule, s, 100, 8).max_deviation;
        if (!(dev <= worst)) {
          worst = dev;
          worst_rule = to_string(rule);
        }
      }
    }
    r.passed = worst <= 1e-12;
    r.detail = std::to_string(rules) + " rules, max deviation " + detail::sci(worst) + " (" + worst_rule + ")";
  });
}

// Unit keys, values in [-0.5, 0.5], channel-wise α in [0.8, 1], η in [0.05, 0.5].
inline Stream chunk_test_stream(std::uint64_t seed, std::size_t T, std::size_t d, std::optional<double> delta) {
  Rng rng(seed, 0xc4);
  Stream st;
  for (std::size_t t = 0; t < T; ++t) {
    st.keys.push_back(rng.unit_vector(d));
    st.values.push_back(rng.uniform_tensor(Dims{d}, -0.5, 0.5));
    Signals s;
    s.alpha = rng.uniform_tensor(Dims{d}, 0.8, 1.0);
    s.eta = rng.uniform_tensor(Dims{d}, 0.05, 0.5);
    if (delta) s.delta = Tensor::scalar(*delta);
    st.signals.push_back(std::move(s));
  }
  return st;
}

inline double max_state_diff(const MemoryState& a, const MemoryState& b) {
  double m = max_abs_diff(a.params(), b.params());
  if (a.accumulator && b.accumulator) m = std::max(m, max_abs_diff(*a.accumulator, *b.accumulator));
  return m;
}

inline bool bit_identical(const MemoryState& a, const MemoryState& b) {
  return a.params().dims() == b.params().dims() && a.params().data().size() == b.params().data().size() &&
         std::equal(a.params().data().begin(), a.params().data().end(), b.params().data().begin());
}

inline CheckResult check_chunked() {
  return detail::timed(4, "chunked equivalence", [](CheckResult& r) {
    struct Case {
      MirasSpec spec;
      double tol;
    };
    const std::vector<Case> cases = {{MirasSpec::moneta(3.0, 2.0), 1e-10},
                                     {MirasSpec::yaad(0.5), 1e-10},
                                     {MirasSpec::l2_decay(), 1e-12},
                                     {MirasSpec::dot_decay(), 1e-10}};
    bool ok = true, bits = true;
    std::string worst_note;
    double worst_ratio = 0.0;
    for (const Case& c : cases) {
      double worst = 0.0;
      for (std::uint64_t s = 0; s < 20; ++s) {
        const Stream st = chunk_test_stream(s, 64, 8, c.spec.signals.delta);
        for (std::size_t b : {1u, 4u, 16u}) {
          const ChunkTrace stale = stale_sequential(c.spec, st, b, s);
          const ChunkTrace fast = chunked_batched(c.spec, st, b, s);
          if (stale.boundaries.size() != fast.boundaries.size()) ok = false;
          for (std::size_t i = 0; i < stale.boundaries.size() && i < fast.boundaries.size(); ++i)
            worst = std::max(worst, max_state_diff(stale.boundaries[i], fast.boundaries[i]));
        }
        bits = bits && bit_identical(stale_sequential(c.spec, st, 1, s).final_state, sequential(c.spec, st, s));
      }
      ok = ok && worst <= c.tol;
      if (worst / c.tol >= worst_ratio) {
        worst_ratio = worst / c.tol;
        worst_note = c.spec.name + " " + detail::sci(worst);
      }
    }
    r.passed = ok && bits;
    r.detail = "worst " + worst_note + "; b=1 stale vs sequential " + (bits ? "bit-identical" : "DIFFERS");
  });
}

inline CheckResult check_invariants(const VerifyOptions& opt) {
  return detail::timed(5, "simplex / interval / finiteness invariants", [&](CheckResult& r) {
    const std::size_t d = 8, steps = 10000;
    // Memora: per-row slices on the simplex.
    const MirasSpec memora = MirasSpec::memora(1.0);
    MirasModel m(memora, d, d, 7);
    Rng rng(7, 0x51);
    double worst_sum = 0.0, min_entry = INFINITY;
    for (std::size_t t = 0; t < steps; ++t) {
      const Tensor k = rng.unit_vector(d);
      const Tensor v = rng.uniform_tensor(Dims{d}, -1.0, 1.0);
      m.step(k.data(), v.data());
      const Tensor& w = m.state().params();
      for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          s += w(i, j);
          min_entry = std::min(min_entry, w(i, j));
        }
        worst_sum = std::max(worst_sum, std::abs(s - memora.gate.c));
      }
    }
    // Bregman sigmoid: open unit interval.
    MirasSpec breg = MirasSpec::l2_decay();
    breg.name = "bregman";
    breg.gate = RetentionGate::bregman_sigmoid();
    MirasModel bm(breg, d, d, 9);
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t t = 0; t < steps; ++t) {
      const Tensor k = rng.unit_vector(d);
      const Tensor v = rng.uniform_tensor(Dims{d}, -2.0, 2.0);
      bm.step(k.data(), v.data());
      for (double x : bm.state().params().data()) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    }
    // Default suite.
    const auto res = harness::execute_suite(harness::load_config(opt.default_config), opt.jobs);
    std::size_t nonfinite = res.failed;
    for (const auto& rec : res.records)
      if (!std::isfinite(rec.recall_mse) || !std::isfinite(rec.state_norm)) ++nonfinite;
    r.passed = worst_sum <= 1e-9 && min_entry > 0.0 && lo > 0.0 && hi < 1.0 && nonfinite == 0;
    r.detail = "memora slice-sum err " + detail::sci(worst_sum) + ", min entry " + detail::sci(min_entry) +
               "; bregman range [" + detail::sci(lo) + ", " + detail::sci(hi) + "]; default suite " +
               std::to_string(res.records.size()) + " runs, " + std::to_string(nonfinite) + " non-finite/failed";
  });
}

inline CheckResult check_exact_storage() {
  return detail::timed(6, "delta rule exact storage", [](CheckResult& r) {
    harness::TaskSpec task;
    task.kind = harness::TaskKind::kPairRecall;
    task.d = 32;
    task.T = 32;
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto rec = harness::run_model(MirasSpec::delta_rule(1.0), task, s);
      worst = std::max(worst, rec.status == "ok" ? rec.recall_mse : INFINITY);
    }
    r.passed = worst <= 1e-20;
    r.detail = "max recall MSE " + detail::sci(worst) + " over 20 seeds (T=d=32)";
  });
}

// Yaad (δ = 2) against ℓ2 + decay with the same α, η.
inline CheckResult check_robustness() {
  return detail::timed(7, "outlier robustness", [](CheckResult& r) {
    harness::TaskSpec task;
    task.kind = harness::TaskKind::kNoisyPairRecall;
    task.d = 32;
    task.T = 24;
    task.outlier_rate = 0.1;
    task.outlier_scale = 100.0;
    task.orthonormal = false;
    MirasSpec yaad = MirasSpec::yaad(2.0);
    yaad.signals.eta = 0.5;
    MirasSpec l2 = MirasSpec::l2_decay();
    l2.signals.eta = 0.5;
    std::size_t wins = 0;
    double ym = 0.0, lm = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s) {
      const auto a = harness::run_model(yaad, task, s);
      const auto b = harness::run_model(l2, task, s);
      if (a.status == "ok" && (b.status != "ok" || a.recall_mse < b.recall_mse)) ++wins;
      ym += a.recall_mse / 50.0;
      lm += b.recall_mse / 50.0;
    }
    r.passed = wins >= 45;
    r.detail = "yaad wins " + std::to_string(wins) + "/50; mean clean MSE yaad " + detail::sci(ym) + " vs l2 " +
               detail::sci(lm);
  });
}

inline CheckResult check_lq_dual() {
  return detail::timed(8, "Lq norm relation", [](CheckResult& r) {
    Rng rng(11, 0x1a);
    double worst = 0.0;
    for (std::size_t i = 0; i < 1000; ++i) {
      const double q = 3.0 + static_cast<double>(i % 3);
      Tensor a = rng.normal_tensor(Dims{4, 4});
      a *= rng.uniform(0.5, 2.0) / norm_p(a.data(), q);
      const Tensor w = lq_normalize(a, q);
      const double lhs = norm_p(w.data(), q);
      const double rhs = std::pow(norm_p(a.data(), q), 3.0 - q);
      worst = std::max(worst, std::abs(lhs - rhs));
    }
    r.passed = worst <= 1e-10;
    r.detail = "max |‖W‖_q - ‖A‖_q^(3-q)| = " + detail::sci(worst) + " over 1000 samples";
  });
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline CheckResult check_determinism(const VerifyOptions& opt) {
  return detail::timed(9, "determinism", [&](CheckResult& r) {
    namespace fs = std::filesystem;
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    const fs::path base = fs::temp_directory_path() / ("miras_verify_" + std::to_string(stamp));
    const harness::SuiteConfig cfg = harness::load_config(opt.default_config);
    harness::run_suite(cfg, (base / "a").string(), 1);
    harness::run_suite(cfg, (base / "b").string(), std::max<std::size_t>(opt.jobs, 2));
    const std::string a = slurp(base / "a" / "metrics.jsonl");
    const std::string b = slurp(base / "b" / "metrics.jsonl");
    std::size_t dumps = 0, dump_diffs = 0;
    for (const auto& e : fs::directory_iterator(base / "a" / "states")) {
      ++dumps;
      if (slurp(e.path()) != slurp(base / "b" / "states" / e.path().filename())) ++dump_diffs;
    }
    fs::remove_all(base);
    r.passed = !a.empty() && a == b && dump_diffs == 0;
    r.detail = "metrics " + std::to_string(a.size()) + " bytes " + (a == b ? "identical" : "DIFFER") + "; " +
               std::to_string(dumps) + " state dumps, " + std::to_string(dump_diffs) + " differ";
  });
}

inline CheckResult check_pq_sweep(const VerifyOptions& opt) {
  return detail::timed(10, "p/q sweep", [&](CheckResult& r) {
    const harness::SuiteConfig cfg = harness::load_config(opt.sweep_config);
    const auto res = harness::execute_suite(cfg, opt.jobs);
    // Per (task, seed, q): how many distinct recall MSEs across p.
    std::map<std::string, std::set<double>> by_cell;
    for (std::size_t mi = 0; mi < cfg.models.size(); ++mi) {
      const auto* spec = std::get_if<MirasSpec>(&cfg.models[mi]);
      if (!spec) continue;
      const std::string h = harness::spec_hash(cfg.models[mi]);
      for (const auto& rec : res.records)
        if (rec.spec_hash == h && rec.status == "ok")
          by_cell[rec.task + "/" + std::to_string(rec.seed) + "/q" + detail::sci(spec->gate.q)].insert(rec.recall_mse);
    }
    std::size_t distinct = 0, cells = 0;
    for (const auto& [_, vals] : by_cell) {
      ++cells;
      distinct += vals.size();
    }
    r.passed = res.failed == 0 && !res.records.empty();
    r.detail = std::to_string(res.records.size()) + " runs, " + std::to_string(res.failed) + " failed; " +
               std::to_string(distinct) + " distinct recall MSEs across p in " + std::to_string(cells) +
               " (task, seed, q) cells";
  });
}

inline std::vector<CheckResult> run_all(const VerifyOptions& opt) {
  return {check_gradients(),          check_ftrl_agreement(),  check_equivalence(),
          check_chunked(),            check_invariants(opt), check_exact_storage(),
          check_robustness(),         check_lq_dual(),       check_determinism(opt),
          check_pq_sweep(opt)};
}

inline std::string format_line(const CheckResult& r) {
  return std::string(r.passed ? "PASS" : "FAIL") + " [" + std::to_string(r.id) + "] " + r.name + ": " + r.detail;
}

}  // namespace miras::verify
