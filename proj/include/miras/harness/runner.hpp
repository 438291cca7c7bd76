#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "miras/harness/attention.hpp"
#include "miras/harness/config.hpp"
#include "miras/harness/task.hpp"
#include "miras/reference.hpp"
#include "miras/tensor_io.hpp"

namespace miras::harness {

inline constexpr double kExactRecallTolerance = 1e-6;

struct RunRecord {
  std::string spec_hash;
  std::string model;
  std::string task;
  std::uint64_t seed = 0;
  double recall_mse = 0.0;
  double exact_recall_rate = 0.0;
  std::size_t steps = 0;
  double state_norm = 0.0;
  std::string status = "ok";
  std::string error;
  double wall_ms = 0.0;         // sidecar only
  std::optional<Tensor> state;  // final memory parameters
};

inline json to_json(const RunRecord& r) {
  json j = {{"spec_hash", r.spec_hash}, {"model", r.model},
            {"task", r.task},           {"seed", r.seed},
            {"steps", r.steps},         {"status", r.status}};
  auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  j["recall_mse"] = num(r.recall_mse);
  j["exact_recall_rate"] = num(r.exact_recall_rate);
  j["state_norm"] = num(r.state_norm);
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

namespace detail {

inline void score(RunRecord& rec, const TaskData& data, const std::vector<Tensor>& preds) {
  double total = 0.0;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double se = 0.0, worst = 0.0;
    for (std::size_t j = 0; j < preds[i].size(); ++j) {
      const double e = preds[i][j] - data.targets[i][j];
      se += e * e;
      worst = std::max(worst, std::abs(e));
    }
    total += se;
    if (worst <= kExactRecallTolerance) ++exact;
  }
  const double n = static_cast<double>(std::max<std::size_t>(preds.size(), 1));
  rec.recall_mse = total / n;
  rec.exact_recall_rate = static_cast<double>(exact) / n;
  bool finite = std::isfinite(rec.recall_mse);
  for (const Tensor& p : preds) finite = finite && p.all_finite();
  if (!finite) {
    rec.status = "failed";
    rec.error = "non-finite prediction";
  }
}

}  // namespace detail

// Stream every pair through the model, then read out at the queries.
inline RunRecord run_model(const ModelEntry& entry, const TaskSpec& task_in, std::uint64_t seed) {
  TaskSpec task = task_in;
  task.seed = seed;
  RunRecord rec;
  rec.spec_hash = spec_hash(entry);
  rec.model = model_name(entry);
  rec.task = task.label();
  rec.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const TaskData data = gen_task(task);
    rec.steps = data.keys.size();
    std::vector<Tensor> preds;
    if (const auto* spec = std::get_if<MirasSpec>(&entry)) {
      MirasModel model(*spec, task.d, task.d, seed);
      const Signals sig = model.default_signals();
      for (std::size_t t = 0; t < data.keys.size(); ++t) model.step(data.keys[t].data(), data.values[t].data(), sig);
      for (const Tensor& q : data.queries) preds.push_back(model.query(q.data()));
      rec.state = model.state().params();
    } else if (const auto* ref = std::get_if<ReferenceEntry>(&entry)) {
      ReferenceState st = reference_init(task.d, task.d);
      const Signals sig = Signals::constant(ref->alpha, ref->beta);
      for (std::size_t t = 0; t < data.keys.size(); ++t)
        reference_step(ref->rule, st, data.keys[t].data(), data.values[t].data(), sig, ref->momentum_decay);
      if (!st.m.all_finite()) throw NumericalError("reference state became non-finite");
      for (const Tensor& q : data.queries) preds.push_back(matvec(st.m, q.data()));
      rec.state = st.m;
    } else {
      const auto& attn = std::get<AttentionEntry>(entry);
      const double tau = attn.temperature.value_or(default_temperature(task.d));
      for (const Tensor& q : data.queries) preds.push_back(attn_baseline_query(data.keys, data.values, q.data(), tau));
    }
    detail::score(rec, data, preds);
    if (rec.state) rec.state_norm = norm2(rec.state->data());
  } catch (const NumericalError& e) {
    rec.status = "failed";
    rec.error = e.what();
    rec.recall_mse = std::nan("");
    rec.exact_recall_rate = 0.0;
    rec.state.reset();
  }
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

struct SuiteResult {
  std::vector<RunRecord> records;
  std::size_t failed = 0;
};

inline bool record_less(const RunRecord& a, const RunRecord& b) {
  return std::tie(a.spec_hash, a.task, a.seed) < std::tie(b.spec_hash, b.task, b.seed);
}

// All models x tasks x seeds, `jobs` at a time. Records come back sorted by
// (spec_hash, task, seed) regardless of scheduling.
inline SuiteResult execute_suite(const SuiteConfig& cfg, std::size_t jobs = 1) {
  struct Job {
    const ModelEntry* model;
    const TaskSpec* task;
    std::uint64_t seed;
  };
  std::vector<Job> work;
  for (const auto& m : cfg.models)
    for (const auto& t : cfg.tasks)
      for (std::uint64_t s : cfg.seeds) work.push_back({&m, &t, s});

  std::vector<RunRecord> out(work.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < work.size(); i = next++) out[i] = run_model(*work[i].model, *work[i].task, work[i].seed);
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, work.size()));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::stable_sort(out.begin(), out.end(), record_less);
  SuiteResult res{std::move(out), 0};
  for (const auto& r : res.records) res.failed += r.status != "ok";
  return res;
}

inline std::string dump_file_name(const RunRecord& r) {
  return r.spec_hash + "_" + r.task + "_" + std::to_string(r.seed) + ".bin";
}

// Writes metrics.jsonl (deterministic), timing.jsonl (wall clock) and one
// state dump per run under states/.
inline SuiteResult run_suite(const SuiteConfig& cfg, const std::string& out_dir, std::size_t jobs = 1) {
  namespace fs = std::filesystem;
  SuiteResult res = execute_suite(cfg, jobs);
  fs::create_directories(fs::path(out_dir) / "states");
  std::ofstream metrics(fs::path(out_dir) / "metrics.jsonl", std::ios::binary);
  std::ofstream timing(fs::path(out_dir) / "timing.jsonl", std::ios::binary);
  if (!metrics || !timing) throw FormatError("cannot write to output directory '" + out_dir + "'");
  for (const auto& r : res.records) {
    metrics << to_json(r).dump() << '\n';
    timing << json{{"spec_hash", r.spec_hash}, {"task", r.task}, {"seed", r.seed}, {"wall_ms", r.wall_ms}}.dump()
           << '\n';
    if (r.state) dump_tensor_file(*r.state, (fs::path(out_dir) / "states" / dump_file_name(r)).string());
  }
  return res;
}

}  // namespace miras::harness
