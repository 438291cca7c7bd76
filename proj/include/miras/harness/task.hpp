#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "miras/error.hpp"
#include "miras/rng.hpp"
#include "miras/tensor.hpp"

namespace miras::harness {

enum class TaskKind { kPairRecall, kNoisyPairRecall, kCopy, kSNiahToy };

inline const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kPairRecall: return "pair_recall";
    case TaskKind::kNoisyPairRecall: return "noisy_pair_recall";
    case TaskKind::kCopy: return "copy";
    case TaskKind::kSNiahToy: return "sniah_toy";
  }
  return "?";
}

inline TaskKind task_kind_from_string(const std::string& s) {
  for (TaskKind k : {TaskKind::kPairRecall, TaskKind::kNoisyPairRecall, TaskKind::kCopy, TaskKind::kSNiahToy})
    if (s == to_string(k)) return k;
  throw ContractError("unknown task kind '" + s + "'");
}

struct TaskSpec {
  TaskKind kind = TaskKind::kPairRecall;
  std::size_t d = 16;
  std::size_t T = 16;
  std::uint64_t seed = 0;
  double outlier_rate = 0.1;
  double outlier_scale = 100.0;
  std::size_t needle_position = 0;
  // Orthonormalize keys when T <= d. Off: independent random unit keys.
  bool orthonormal = true;

  std::string label() const { return to_string(kind); }

  void validate() const {
    if (d == 0 || T == 0) throw ContractError("task needs d >= 1 and T >= 1");
    if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0)) throw ContractError("outlier_rate must lie in [0, 1]");
    if (kind == TaskKind::kSNiahToy && needle_position >= T)
      throw ContractError("needle_position must be < T (haystack length)");
  }
};

struct TaskData {
  std::vector<Tensor> keys;
  std::vector<Tensor> values;
  std::vector<Tensor> queries;
  std::vector<Tensor> targets;
  std::vector<std::size_t> outliers;  // stream indices whose value was scaled
};

// Modified Gram-Schmidt with one re-orthogonalization pass.
inline std::vector<Tensor> orthonormal_keys(std::size_t count, std::size_t d, Rng& rng) {
  if (count > d) throw ContractError("cannot draw more than d orthonormal keys");
  std::vector<Tensor> out;
  while (out.size() < count) {
    Tensor v = rng.normal_tensor(Dims{d});
    for (int pass = 0; pass < 2; ++pass) {
      for (const Tensor& u : out) {
        const double c = dot(u.data(), v.data());
        for (std::size_t i = 0; i < d; ++i) v[i] -= c * u[i];
      }
    }
    const double n = norm2(v.data());
    if (n < 1e-8) continue;
    out.push_back(v * (1.0 / n));
  }
  return out;
}

inline std::vector<Tensor> task_keys(const TaskSpec& task, Rng& rng) {
  if (task.orthonormal && task.T <= task.d) return orthonormal_keys(task.T, task.d, rng);
  std::vector<Tensor> keys;
  for (std::size_t i = 0; i < task.T; ++i) keys.push_back(rng.unit_vector(task.d));
  return keys;
}

inline TaskData gen_task(const TaskSpec& task) {
  task.validate();
  Rng rng(task.seed, 0x7a5c);
  TaskData data;
  switch (task.kind) {
    case TaskKind::kPairRecall:
    case TaskKind::kNoisyPairRecall: {
      data.keys = task_keys(task, rng);
      for (std::size_t i = 0; i < task.T; ++i) data.values.push_back(rng.uniform_tensor(Dims{task.d}, -1.0, 1.0));
      std::vector<bool> outlier(task.T, false);
      if (task.kind == TaskKind::kNoisyPairRecall) {
        // Separate stream so the clean pairs match pair_recall on the same seed.
        Rng pick(task.seed, 0x5071);
        std::vector<std::size_t> idx(task.T);
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t i = task.T; i > 1; --i) std::swap(idx[i - 1], idx[pick.below(i)]);
        const auto n_out = static_cast<std::size_t>(std::ceil(task.outlier_rate * static_cast<double>(task.T) - 1e-12));
        for (std::size_t j = 0; j < n_out; ++j) outlier[idx[j]] = true;
      }
      for (std::size_t i = 0; i < task.T; ++i) {
        if (outlier[i]) {
          data.values[i] *= task.outlier_scale;
          data.outliers.push_back(i);
        } else {
          data.queries.push_back(data.keys[i]);
          data.targets.push_back(data.values[i]);
        }
      }
      break;
    }
    case TaskKind::kCopy: {
      // Recall a sequence of one-hot symbols from its position keys.
      data.keys = task_keys(task, rng);
      for (std::size_t i = 0; i < task.T; ++i) {
        Tensor v(Dims{task.d});
        v[rng.below(task.d)] = 1.0;
        data.values.push_back(v);
      }
      data.queries = data.keys;
      data.targets = data.values;
      break;
    }
    case TaskKind::kSNiahToy: {
      data.keys = task_keys(task, rng);
      for (std::size_t i = 0; i < task.T; ++i) data.values.push_back(rng.uniform_tensor(Dims{task.d}, -1.0, 1.0));
      data.queries.push_back(data.keys[task.needle_position]);
      data.targets.push_back(data.values[task.needle_position]);
      break;
    }
  }
  return data;
}

}  // namespace miras::harness
