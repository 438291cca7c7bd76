#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "miras/harness/runner.hpp"
#include "miras/miras.hpp"
#include "miras/verify.hpp"

#ifndef MIRAS_CONFIG_DIR
#define MIRAS_CONFIG_DIR "configs"
#endif

using namespace miras;

namespace {

int cmd_run(const std::string& config, std::optional<std::uint64_t> seed_override, std::string out, std::size_t jobs) {
  harness::SuiteConfig cfg = harness::load_config(config);
  if (seed_override) cfg.seeds = {*seed_override};
  if (out.empty()) out = cfg.output_dir.empty() ? "runs" : cfg.output_dir;
  const auto res = harness::run_suite(cfg, out, jobs);
  std::cout << res.records.size() << " runs, " << res.failed << " failed -> " << out << "/metrics.jsonl\n";
  for (const auto& r : res.records)
    if (r.status != "ok") std::cout << "  failed: " << r.model << " " << r.task << " seed " << r.seed << ": " << r.error << "\n";
  return 0;
}

int cmd_verify(const verify::VerifyOptions& opt) {
  bool ok = true;
  for (const auto& r : verify::run_all(opt)) {
    std::cout << verify::format_line(r) << "\n";
    ok = ok && r.passed;
  }
  std::cout << (ok ? "all checks passed" : "some checks FAILED") << "\n";
  return ok ? 0 : 1;
}

int cmd_equiv(const std::string& name, std::size_t seeds, std::size_t steps, std::size_t d) {
  std::vector<ReferenceRule> rules;
  if (name == "all") rules = all_reference_rules();
  else rules.push_back(reference_rule_from_string(name));
  bool ok = true;
  for (ReferenceRule rule : rules) {
    double worst = 0.0;
    EquivalenceReport rep;
    for (std::uint64_t s = 0; s < seeds; ++s) {
      rep = framework_equivalence(rule, s, steps, d);
      worst = std::max(worst, rep.max_deviation);
    }
    if (!rep.mapped) {
      std::cout << to_string(rule) << ": no framework instance (reference only)\n";
      continue;
    }
    const bool pass = worst <= 1e-12;
    ok = ok && pass;
    std::printf("%s: max deviation %.3e over %zu seeds x %zu steps [%s]\n  mapping: %s\n", to_string(rule), worst, seeds,
                steps, pass ? "ok" : "FAIL", rep.note.c_str());
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"miras: associative memory sequence models and their checks"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run a suite config");
  std::string config, out;
  std::optional<std::uint64_t> seed_override;
  std::size_t jobs = 1;
  run->add_option("--config", config, "suite config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed-override", seed_override, "replace the config's seeds with this one");
  run->add_option("--out", out, "output directory");
  run->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  auto* ver = app.add_subcommand("verify", "run the acceptance property suite");
  verify::VerifyOptions vopt{std::string(MIRAS_CONFIG_DIR) + "/default.json",
                             std::string(MIRAS_CONFIG_DIR) + "/pq_sweep.json", 1};
  ver->add_option("--config", vopt.default_config, "default suite config");
  ver->add_option("--sweep", vopt.sweep_config, "p/q sweep config");
  ver->add_option("--jobs", vopt.jobs, "worker threads")->check(CLI::PositiveNumber);

  auto* eq = app.add_subcommand("equiv", "compare a reference recurrence with its framework instance");
  std::string rule;
  std::size_t seeds = 20, steps = 100, dim = 8;
  eq->add_option("--rule", rule, "rule name or 'all'")->required();
  eq->add_option("--seeds", seeds);
  eq->add_option("--steps", steps);
  eq->add_option("--d", dim);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, seed_override, out, jobs);
    if (*ver) return cmd_verify(vopt);
    if (*eq) return cmd_equiv(rule, seeds, steps, dim);
  } catch (const harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
